"""Spherical grids, real spherical harmonics and radial surfaces.

Real harmonics are orthonormal on S², indexed by ``l * l + l + m`` and carry no
Condon-Shortley phase: ``m > 0`` pairs with ``sqrt(2) cos(m phi)``, ``m < 0`` with
``sqrt(2) sin(|m| phi)``.

The six-dimensional shell space W6 uses the unnormalized degree 0/2 polynomials

    Y1 = 1/sqrt(15), Y2 = x1 x2, Y3 = x2 x3, Y4 = (2 x3^2 - x1^2 - x2^2)/(2 sqrt(3)),
    Y5 = x1 x3, Y6 = (x1^2 - x2^2)/2

each of which equals ``sqrt(4 pi/15)`` times one orthonormal real harmonic.
"""
import functools
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from scipy.special import roots_legendre

from ptshell.exceptions import PtshellGeometryError, PtshellValueError

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

MIN_N_THETA = 4
DEFAULT_MAX_DEGREE = 8
POLE_GUARD = 1e-12

W6_SIZE = 6
W6_SCALE = math.sqrt(4.0 * math.pi / 15.0)
W6_DEGREE_ORDER: Tuple[Tuple[int, int], ...] = ((0, 0), (2, -2), (2, -1), (2, 0), (2, 1), (2, 2))

_SQRT3 = math.sqrt(3.0)
# Hessians of the degree-2 solid extensions, index j-1. Y1 is constant.
W6_HESSIANS: FloatArray = np.array(
    [
        np.zeros((3, 3)),
        [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
        [[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]],
        np.diag([-1.0, -1.0, 2.0]) / _SQRT3,
        [[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
        np.diag([1.0, -1.0, 0.0]),
    ]
)
W6_HESSIANS.flags.writeable = False


def _frozen(arr: Any) -> FloatArray:
    out = np.array(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


def sh_index(degree: int, order: int) -> int:
    """Flat index of the real harmonic (degree, order)."""
    if abs(order) > degree:
        raise PtshellValueError(f"Order {order} out of range for degree {degree}")
    return degree * degree + degree + order


def n_coeffs(degree: int) -> int:
    """Number of real harmonics of degree at most ``degree``."""
    return (degree + 1) ** 2


def degree_of(size: int) -> int:
    """Inverse of :func:`n_coeffs`.

    Raises:
        PtshellValueError: if size is not a perfect square.
    """
    degree = math.isqrt(size) - 1
    if size < 1 or n_coeffs(degree) != size:
        raise PtshellValueError(f"{size} is not a valid spherical-harmonic coefficient count")
    return degree


@functools.lru_cache(maxsize=None)
def degree_order(degree: int) -> Tuple[IntArray, IntArray]:
    """Degree and order of every flat index up to ``degree``."""
    ls = np.concatenate([np.full(2 * ell + 1, ell) for ell in range(degree + 1)])
    ms = np.concatenate([np.arange(-ell, ell + 1) for ell in range(degree + 1)])
    ls.flags.writeable = False
    ms.flags.writeable = False
    return ls, ms


def _unit(points: Any) -> FloatArray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    norms = np.linalg.norm(pts, axis=1)
    if np.any(norms == 0.0):
        raise PtshellValueError("Zero vector cannot be mapped to the sphere")
    return pts / norms[:, None]


def _legendre_table(degree: int, t: FloatArray, s: FloatArray) -> FloatArray:
    """Normalized associated Legendre values for every flat index.

    Column ``sh_index(l, m)`` holds Pbar_{l,|m|}(t), normalized so that
    2 pi * integral of Pbar^2 over [-1, 1] equals 1 (times 2 for m != 0 via the trig factor).
    """
    out = np.empty((t.shape[0], n_coeffs(degree)))
    pmm = np.full(t.shape[0], 1.0 / math.sqrt(4.0 * math.pi))
    for m in range(degree + 1):
        if m > 0:
            pmm = pmm * math.sqrt((2 * m + 1) / (2 * m)) * s
        cols = (sh_index(m, m), sh_index(m, -m))
        out[:, cols[0]] = pmm
        out[:, cols[1]] = pmm
        if m == degree:
            break
        p_prev2 = pmm
        p_prev1 = math.sqrt(2 * m + 3) * t * pmm
        out[:, sh_index(m + 1, m)] = p_prev1
        out[:, sh_index(m + 1, -m)] = p_prev1
        for ell in range(m + 2, degree + 1):
            a = math.sqrt((4 * ell * ell - 1) / (ell * ell - m * m))
            b = math.sqrt(((ell - 1) ** 2 - m * m) / (4 * (ell - 1) ** 2 - 1))
            p = a * (t * p_prev1 - b * p_prev2)
            out[:, sh_index(ell, m)] = p
            out[:, sh_index(ell, -m)] = p
            p_prev2, p_prev1 = p_prev1, p
    return out


@functools.lru_cache(maxsize=None)
def _derivative_constants(degree: int) -> Tuple[IntArray, FloatArray]:
    ls, ms = degree_order(degree)
    prev = np.array(
        [sh_index(ell - 1, m) if ell - 1 >= abs(m) else 0 for ell, m in zip(ls, ms)],
        dtype=np.int64,
    )
    coef = np.sqrt((2 * ls + 1) * (ls * ls - ms * ms) / np.maximum(2 * ls - 1, 1))
    return prev, coef


def sh_basis(degree: int, points: Any) -> FloatArray:
    """Real orthonormal harmonics of degree at most ``degree``.

    Args:
        degree (int): Maximum degree.
        points (Any): Array of shape (P, 3); normalized onto the sphere.

    Returns:
        FloatArray: Values of shape (P, (degree + 1) ** 2).
    """
    pts = _unit(points)
    ls, ms = degree_order(degree)
    t = np.clip(pts[:, 2], -1.0, 1.0)
    s = np.hypot(pts[:, 0], pts[:, 1])
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    table = _legendre_table(degree, t, s)
    ang = np.abs(ms)[None, :] * phi[:, None]
    trig = np.where(
        ms > 0, math.sqrt(2.0) * np.cos(ang), np.where(ms < 0, math.sqrt(2.0) * np.sin(ang), 1.0)
    )
    result: FloatArray = table * trig
    return result


def sh_basis_gradient(degree: int, points: Any) -> Tuple[FloatArray, FloatArray]:
    """Real harmonics and their tangential gradients.

    Points on the polar axis are rejected since the spherical frame is singular there.

    Returns:
        Tuple[FloatArray, FloatArray]: values (P, n) and tangential gradients (P, n, 3).

    Raises:
        PtshellValueError: if a point lies on the polar axis.
    """
    pts = _unit(points)
    ls, ms = degree_order(degree)
    t = np.clip(pts[:, 2], -1.0, 1.0)
    s = np.hypot(pts[:, 0], pts[:, 1])
    if np.any(s < POLE_GUARD):
        raise PtshellValueError("Tangential gradients are not evaluated on the polar axis")
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    table = _legendre_table(degree, t, s)
    prev, coef = _derivative_constants(degree)
    has_prev = (ls - 1 >= np.abs(ms))[None, :]
    d_theta_p = (ls[None, :] * t[:, None] * table - coef[None, :] * table[:, prev] * has_prev) / s[
        :, None
    ]
    absm = np.abs(ms)[None, :]
    ang = absm * phi[:, None]
    root2 = math.sqrt(2.0)
    trig = np.where(ms > 0, root2 * np.cos(ang), np.where(ms < 0, root2 * np.sin(ang), 1.0))
    d_trig = np.where(
        ms > 0, -root2 * absm * np.sin(ang), np.where(ms < 0, root2 * absm * np.cos(ang), 0.0)
    )
    cos_phi, sin_phi = np.cos(phi), np.sin(phi)
    e_theta = np.stack([t * cos_phi, t * sin_phi, -s], axis=1)
    e_phi = np.stack([-sin_phi, cos_phi, np.zeros_like(phi)], axis=1)
    values = table * trig
    grad = (d_theta_p * trig)[:, :, None] * e_theta[:, None, :] + (table * d_trig / s[:, None])[
        :, :, None
    ] * e_phi[:, None, :]
    return values, grad


def rotate_z(coeffs: Any, alpha: Any) -> FloatArray:
    """Coefficients of ``y -> f(R_z(alpha) y)`` given those of ``f``.

    ``coeffs`` of shape (n,) or (k, n) broadcast against ``alpha`` of shape () or (k,).
    """
    c = np.asarray(coeffs, dtype=np.float64)
    ls, ms = degree_order(degree_of(c.shape[-1]))
    partner = ls * ls + ls - ms
    ang = np.asarray(alpha, dtype=np.float64)[..., None] * np.abs(ms)
    result: FloatArray = c * np.cos(ang) + np.sign(ms) * c[..., partner] * np.sin(ang)
    return result


@dataclass(frozen=True, eq=False)
class SphericalGrid:
    """Gauss-Legendre in cos(theta) times uniform phi; nodes ring-major, north first."""

    n_theta: int
    theta: FloatArray
    phi: FloatArray
    nodes: FloatArray
    weights: FloatArray

    @property
    def n_phi(self) -> int:
        return int(self.phi.shape[0])

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])

    @property
    def degree(self) -> int:
        """Highest degree D such that products of harmonics of degree <= D integrate exactly."""
        return self.n_theta - 1

    def integrate(self, values: Any) -> Any:
        """Quadrature along the last axis."""
        return np.asarray(values, dtype=np.float64) @ self.weights

    def project_mean_zero(self, values: Any) -> FloatArray:
        """Subtract the quadrature-weighted mean along the last axis."""
        vals = np.asarray(values, dtype=np.float64)
        mean = (vals @ self.weights) / (4.0 * math.pi)
        result: FloatArray = vals - np.asarray(mean)[..., None]
        return result

    def describe(self) -> Dict[str, int]:
        return {"n_theta": self.n_theta, "n_phi": self.n_phi, "nodes": self.size}


@functools.lru_cache(maxsize=None)
def build_grid(n_theta: int) -> SphericalGrid:
    """Build the tensor grid shared by every operator.

    Args:
        n_theta (int): Gauss-Legendre points in cos(theta); 2 * n_theta points in phi.

    Returns:
        SphericalGrid: grid exact for harmonic products up to degree 2 * n_theta - 1.

    Raises:
        PtshellValueError: if n_theta is below MIN_N_THETA.
    """
    if int(n_theta) != n_theta or n_theta < MIN_N_THETA:
        raise PtshellValueError(f"n_theta must be an integer >= {MIN_N_THETA}, got {n_theta}")
    n_theta = int(n_theta)
    t, w = roots_legendre(n_theta)
    order = np.argsort(-t)
    t, w = t[order], w[order]
    theta = np.arccos(t)
    n_phi = 2 * n_theta
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    sin_t = np.sqrt(1.0 - t * t)
    nodes = np.stack(
        [
            np.outer(sin_t, np.cos(phi)).ravel(),
            np.outer(sin_t, np.sin(phi)).ravel(),
            np.repeat(t, n_phi),
        ],
        axis=1,
    )
    nodes /= np.linalg.norm(nodes, axis=1)[:, None]
    weights = np.repeat(w, n_phi) * (2.0 * math.pi / n_phi)
    logger.debug(f"Built grid n_theta={n_theta} with {nodes.shape[0]} nodes")
    return SphericalGrid(n_theta, _frozen(theta), _frozen(phi), _frozen(nodes), _frozen(weights))


@functools.lru_cache(maxsize=None)
def grid_basis(grid: SphericalGrid, degree: Optional[int] = None) -> FloatArray:
    """Harmonics at the grid nodes (N, n), default degree the grid degree."""
    return _frozen(sh_basis(grid.degree if degree is None else degree, grid.nodes))


@functools.lru_cache(maxsize=None)
def grid_analysis(grid: SphericalGrid) -> FloatArray:
    """Matrix mapping nodal values to harmonic coefficients of degree <= grid.degree."""
    return _frozen((grid_basis(grid) * grid.weights[:, None]).T)


def _check_w6_index(j: int) -> None:
    if not 1 <= j <= W6_SIZE:
        raise PtshellValueError(f"W6 index must be in 1..{W6_SIZE}, got {j}")


def w6_values(points: Any) -> FloatArray:
    """All six W6 functions evaluated at (P, 3) points, as degree 0/2 polynomials."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    quad = 0.5 * np.einsum("pi,jik,pk->pj", pts, W6_HESSIANS, pts)
    quad[:, 0] = 1.0 / math.sqrt(15.0)
    result: FloatArray = quad
    return result


def eval_w6(j: int, x: Sequence[float]) -> float:
    """Evaluate the j-th W6 function (1-based) at a unit vector.

    Raises:
        PtshellValueError: if j is out of range or x is not a unit vector.
    """
    _check_w6_index(j)
    vec = np.asarray(x, dtype=np.float64)
    if vec.shape != (3,) or abs(float(np.linalg.norm(vec)) - 1.0) > 1e-10:
        raise PtshellValueError(f"W6 functions are evaluated at unit vectors, got {x}")
    return float(w6_values(vec)[0, j - 1])


def w6_gradients(points: Any) -> FloatArray:
    """Ambient gradients G^j x of the solid extensions, shape (P, 6, 3)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    result: FloatArray = np.einsum("jik,pk->pji", W6_HESSIANS, pts)
    return result


def w6_tangential_gradients(points: Any) -> FloatArray:
    """Tangential gradients on S², ``grad Y - (x . grad Y) x``, shape (P, 6, 3)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    grad = w6_gradients(pts)
    radial = np.einsum("pji,pi->pj", grad, pts)
    result: FloatArray = grad - radial[:, :, None] * pts[:, None, :]
    return result


def w6_to_sh(b: Sequence[float], degree: int = 2) -> FloatArray:
    """Real-harmonic coefficients (up to ``degree`` >= 2) of sum_j b_j Y_j."""
    vec = np.asarray(b, dtype=np.float64)
    if vec.shape != (W6_SIZE,):
        raise PtshellValueError(f"W6 coefficient vectors have {W6_SIZE} entries, got {vec.shape}")
    out = np.zeros(n_coeffs(max(degree, 2)))
    for value, (ell, m) in zip(vec, W6_DEGREE_ORDER):
        out[sh_index(ell, m)] = W6_SCALE * value
    return out


def sh_to_w6(coeffs: Any) -> FloatArray:
    """W6 coordinates of the degree 0 and 2 part of a real-harmonic expansion."""
    c = np.asarray(coeffs, dtype=np.float64)
    c = np.pad(c, (0, max(0, n_coeffs(2) - c.shape[0])))
    return np.array([c[sh_index(ell, m)] / W6_SCALE for ell, m in W6_DEGREE_ORDER])


@functools.lru_cache(maxsize=None)
def _estimation_grid(degree: int) -> SphericalGrid:
    return build_grid(max(16, 2 * degree + 4))


@dataclass(frozen=True, eq=False)
class RadialSurface:
    """Star-shaped surface ``x_hat -> (base_radius + p(x_hat)) x_hat``.

    ``coeffs`` are real-harmonic coefficients of the perturbation p.
    """

    base_radius: float
    coeffs: FloatArray

    def __post_init__(self) -> None:
        if not (math.isfinite(self.base_radius) and self.base_radius > 0):
            raise PtshellValueError(f"Base radius must be positive, got {self.base_radius}")
        coeffs = np.asarray(self.coeffs, dtype=np.float64).ravel()
        if coeffs.size == 0:
            coeffs = np.zeros(1)
        degree_of(coeffs.size)
        if not np.all(np.isfinite(coeffs)):
            raise PtshellValueError("Surface coefficients must be finite")
        object.__setattr__(self, "base_radius", float(self.base_radius))
        object.__setattr__(self, "coeffs", _frozen(coeffs))

    @classmethod
    def sphere(cls, radius: float) -> "RadialSurface":
        return cls(radius, np.zeros(1))

    @classmethod
    def from_terms(
        cls, base_radius: float, terms: Iterable[Tuple[int, int, float]]
    ) -> "RadialSurface":
        """Build from (l, m, value) triples; repeated (l, m) pairs are summed."""
        items = [(int(ell), int(m), float(v)) for ell, m, v in terms]
        degree = max([ell for ell, _, _ in items], default=0)
        coeffs = np.zeros(n_coeffs(degree))
        for ell, m, value in items:
            if ell < 0:
                raise PtshellValueError(f"Negative harmonic degree {ell}")
            coeffs[sh_index(ell, m)] += value
        return cls(base_radius, coeffs)

    @classmethod
    def from_w6(cls, base_radius: float, b: Sequence[float]) -> "RadialSurface":
        return cls(base_radius, w6_to_sh(b))

    @classmethod
    def random(
        cls, base_radius: float, max_degree: int, amplitude: float, seed: int
    ) -> "RadialSurface":
        """Seeded random perturbation rescaled so its norm estimate equals ``amplitude``."""
        if max_degree < 0:
            raise PtshellValueError(f"max_degree must be >= 0, got {max_degree}")
        rng = np.random.default_rng(seed)
        coeffs = rng.standard_normal(n_coeffs(max_degree))
        return cls(base_radius, coeffs).scaled_to(amplitude)

    @classmethod
    def from_json(cls, doc: Dict[str, Any]) -> "RadialSurface":
        """Parse ``{"base_radius": r, "coeffs": [{"l": .., "m": .., "value": ..}]}``.

        Raises:
            PtshellValueError: if the document is malformed.
        """
        try:
            terms = [(int(c["l"]), int(c["m"]), float(c["value"])) for c in doc.get("coeffs", [])]
            return cls.from_terms(float(doc["base_radius"]), terms)
        except (KeyError, TypeError, ValueError) as e:
            raise PtshellValueError(f"Malformed surface document: {e}") from None

    def to_json(self) -> Dict[str, Any]:
        return {
            "base_radius": self.base_radius,
            "coeffs": [{"l": ell, "m": m, "value": v} for ell, m, v in self.terms()],
        }

    def terms(self) -> List[Tuple[int, int, float]]:
        ls, ms = degree_order(self.degree)
        return [
            (int(ell), int(m), float(v)) for ell, m, v in zip(ls, ms, self.coeffs) if v != 0.0
        ]

    @property
    def degree(self) -> int:
        return degree_of(self.coeffs.size)

    @property
    def is_sphere(self) -> bool:
        return not np.any(self.coeffs)

    def key(self) -> bytes:
        """Hashable identity used by block caches."""
        return np.float64(self.base_radius).tobytes() + self.coeffs.tobytes()

    def padded(self, degree: int) -> FloatArray:
        """Coefficient vector zero-padded (or truncated) to ``degree``."""
        size = n_coeffs(degree)
        out = np.zeros(size)
        keep = min(size, self.coeffs.size)
        out[:keep] = self.coeffs[:keep]
        return out

    def perturbation(self, points: Any) -> FloatArray:
        result: FloatArray = sh_basis(self.degree, points) @ self.coeffs
        return result

    def radius(self, points: Any) -> FloatArray:
        return self.base_radius + self.perturbation(points)

    def positions(self, points: Any) -> FloatArray:
        pts = _unit(points)
        result: FloatArray = self.radius(pts)[:, None] * pts
        return result

    def tangential_gradient(self, points: Any) -> FloatArray:
        _, grad = sh_basis_gradient(self.degree, points)
        result: FloatArray = np.einsum("pnk,n->pk", grad, self.coeffs)
        return result

    def laplacian(self, points: Any) -> FloatArray:
        """Laplace-Beltrami of the perturbation."""
        ls, _ = degree_order(self.degree)
        result: FloatArray = sh_basis(self.degree, points) @ (-ls * (ls + 1) * self.coeffs)
        return result

    def norm_estimate(self) -> float:
        """Estimate of ||p||_{2,inf}: max|p| + max|grad_T p| + max|Laplace-Beltrami p|."""
        if self.is_sphere:
            return 0.0
        grid = _estimation_grid(self.degree)
        ls, _ = degree_order(self.degree)
        values, grad = sh_basis_gradient(self.degree, grid.nodes)
        p = values @ self.coeffs
        gp = np.einsum("pnk,n->pk", grad, self.coeffs)
        lap = values @ (-ls * (ls + 1) * self.coeffs)
        return float(
            np.max(np.abs(p)) + np.max(np.linalg.norm(gp, axis=1)) + np.max(np.abs(lap))
        )

    def scaled(self, factor: float) -> "RadialSurface":
        return RadialSurface(self.base_radius, self.coeffs * factor)

    def scaled_to(self, amplitude: float) -> "RadialSurface":
        """Rescale so that :meth:`norm_estimate` equals ``amplitude``.

        Raises:
            PtshellValueError: if the perturbation is zero and amplitude is not.
        """
        est = self.norm_estimate()
        if est == 0.0:
            if amplitude == 0.0:
                return self
            raise PtshellValueError("Cannot rescale a zero perturbation")
        return self.scaled(amplitude / est)

    def with_base_radius(self, base_radius: float) -> "RadialSurface":
        return RadialSurface(base_radius, self.coeffs)

    def rotated_z(self, alpha: float) -> "RadialSurface":
        """Surface rotated by ``alpha`` about the x3 axis."""
        return RadialSurface(self.base_radius, rotate_z(self.coeffs, -alpha))

    def w6_part(self) -> FloatArray:
        """W6 coordinates of the perturbation (degree 1 and >= 3 parts dropped)."""
        return sh_to_w6(self.coeffs[: n_coeffs(min(self.degree, 2))])


@dataclass(frozen=True, eq=False)
class SurfaceFrame:
    """Per-node geometry of a radial surface on a grid.

    ``jnormal`` is J times the unit normal; it equals
    ``r (r x - grad_T p)`` with ``r = base_radius + p``.
    """

    surface: RadialSurface
    grid: SphericalGrid
    radius: FloatArray
    positions: FloatArray
    grad_t: FloatArray
    jacobian: FloatArray
    normals: FloatArray
    jnormal: FloatArray


def surface_frame(surf: RadialSurface, grid: SphericalGrid) -> SurfaceFrame:
    """Evaluate positions, normals and Jacobians of ``surf`` at the grid nodes.

    Raises:
        PtshellGeometryError: if the radius is not positive at some node.
    """
    values, grad = sh_basis_gradient(surf.degree, grid.nodes)
    radius = surf.base_radius + values @ surf.coeffs
    if np.any(radius <= 0.0):
        raise PtshellGeometryError(
            f"Surface is not star-shaped: minimum radius {float(np.min(radius)):.3e}"
        )
    grad_t = np.einsum("pnk,n->pk", grad, surf.coeffs)
    nodes = grid.nodes
    positions = radius[:, None] * nodes
    jnormal = radius[:, None] * (radius[:, None] * nodes - grad_t)
    jacobian = radius * np.sqrt(radius**2 + np.sum(grad_t**2, axis=1))
    normals = jnormal / jacobian[:, None]
    return SurfaceFrame(
        surf,
        grid,
        _frozen(radius),
        _frozen(positions),
        _frozen(grad_t),
        _frozen(jacobian),
        _frozen(normals),
        _frozen(jnormal),
    )


def rotation_to(targets: Any) -> FloatArray:
    """Rotations R_z(phi) R_y(theta) carrying the north pole to each target, shape (T, 3, 3)."""
    pts = _unit(targets)
    theta = np.arccos(np.clip(pts[:, 2], -1.0, 1.0))
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    ct, st, cp, sp = np.cos(theta), np.sin(theta), np.cos(phi), np.sin(phi)
    zeros = np.zeros_like(ct)
    # R_z(phi) @ R_y(theta), written out.
    result: FloatArray = np.stack(
        [
            np.stack([cp * ct, -sp, cp * st], axis=1),
            np.stack([sp * ct, cp, sp * st], axis=1),
            np.stack([-st, zeros, ct], axis=1),
        ],
        axis=1,
    )
    return result


@dataclass(frozen=True, eq=False)
class PolarRule:
    """Quadrature on S² in polar coordinates about the north pole.

    Gauss-Legendre in theta' on [0, pi] times uniform phi'; the weights carry
    sin(theta'), which cancels a 1/|x - y| singularity at the pole.
    """

    n_polar: int
    n_azimuth: int
    theta: FloatArray
    local_points: FloatArray
    weights: FloatArray

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])

    def points_around(self, targets: Any) -> FloatArray:
        """Rule nodes rotated so the pole sits at each target, shape (T, M, 3)."""
        result: FloatArray = np.einsum("tij,mj->tmi", rotation_to(targets), self.local_points)
        return result


@functools.lru_cache(maxsize=None)
def polar_rule(n_polar: int, n_azimuth: int) -> PolarRule:
    """Build a polar rule with ``n_polar`` x ``n_azimuth`` nodes.

    Raises:
        PtshellValueError: on non-positive sizes.
    """
    if n_polar < 1 or n_azimuth < 1:
        raise PtshellValueError(f"Invalid polar rule size {n_polar}x{n_azimuth}")
    s, w = roots_legendre(n_polar)
    theta = 0.5 * math.pi * (s + 1.0)
    w_theta = 0.5 * math.pi * w * np.sin(theta)
    phi = 2.0 * math.pi * np.arange(n_azimuth) / n_azimuth
    st = np.sin(theta)
    pts = np.stack(
        [
            np.outer(st, np.cos(phi)).ravel(),
            np.outer(st, np.sin(phi)).ravel(),
            np.repeat(np.cos(theta), n_azimuth),
        ],
        axis=1,
    )
    weights = np.repeat(w_theta, n_azimuth) * (2.0 * math.pi / n_azimuth)
    return PolarRule(n_polar, n_azimuth, _frozen(theta), _frozen(pts), _frozen(weights))


def grid_polar_rule(grid: SphericalGrid, polar_factor: int = 2) -> PolarRule:
    """Polar rule matched to a grid: ``polar_factor * n_theta`` by ``n_phi`` nodes."""
    if polar_factor < 1:
        raise PtshellValueError(f"polar_factor must be >= 1, got {polar_factor}")
    return polar_rule(polar_factor * grid.n_theta, grid.n_phi)
