"""Block system of the core-shell transmission problem, its solution and the PT.

Densities of the l-th problem solve

    [[-lambda I + A(h), C(h, b)], [D(h, b), -mu I + B(b)]] f = g^(l),
    g^(l) = -(J nu_l on the core, J nu_l on the shell),

and the polarization tensor is m_{ll'} = sum over both surfaces of
integral (r0 + p) x_{l'} f^(l) dS. The far field then satisfies
u - a.x ~ -<M a, x> / (4 pi |x|^3).
"""
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from ptshell.exceptions import (
    PtshellGeometryError,
    PtshellInfeasibleError,
    PtshellSolveError,
    PtshellValueError,
)
from ptshell.kernels import BlockAssembler, block_spec
from ptshell.sphharm import (
    FloatArray,
    RadialSurface,
    SphericalGrid,
    SurfaceFrame,
    build_grid,
    surface_frame,
)

logger = logging.getLogger(__name__)

DEFAULT_KERNEL_BUDGET = 0.2
CONDITION_WARNING = 1e10
NEUTRAL_RELATION_TOL = 1e-12
FAR_FIELD_MIN_RADIUS = 1.5
FLATTEN_INDEX: Tuple[Tuple[int, int], ...] = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
# Fixed probe directions for far-field magnitudes: axes and cube diagonals.
FAR_FIELD_DIRECTIONS: FloatArray = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]]
    + [[sx, sy, sz] for sx in (1, -1) for sy in (1, -1) for sz in (1, -1)],
    dtype=np.float64,
)
FAR_FIELD_DIRECTIONS /= np.linalg.norm(FAR_FIELD_DIRECTIONS, axis=1)[:, None]
FAR_FIELD_DIRECTIONS.flags.writeable = False


@dataclass(frozen=True)
class MaterialParams:
    """Conductivities of core, shell and matrix."""

    sigma_c: float
    sigma_s: float
    sigma_m: float

    def __post_init__(self) -> None:
        for name in ("sigma_c", "sigma_s", "sigma_m"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise PtshellValueError(f"Conductivity {name} must be positive, got {value}")

    @property
    def lam(self) -> float:
        """Raises PtshellValueError when the core and shell conductivities coincide."""
        if self.sigma_c == self.sigma_s:
            raise PtshellValueError("lambda is undefined for equal core and shell conductivities")
        return (self.sigma_c + self.sigma_s) / (2.0 * (self.sigma_c - self.sigma_s))

    @property
    def mu(self) -> float:
        """Raises PtshellValueError when the shell and matrix conductivities coincide."""
        if self.sigma_s == self.sigma_m:
            raise PtshellValueError("mu is undefined for equal shell and matrix conductivities")
        return (self.sigma_s + self.sigma_m) / (2.0 * (self.sigma_s - self.sigma_m))

    @property
    def neutral_ratio(self) -> float:
        """Cube of r_i / r_e for a neutral coated sphere."""
        sc, ss, sm = self.sigma_c, self.sigma_s, self.sigma_m
        if ss == sc:
            return math.inf
        return (2 * ss + sc) * (ss - sm) / ((ss - sc) * (2 * ss + sm))

    @property
    def feasible(self) -> bool:
        return 0.0 < self.neutral_ratio < 1.0

    @property
    def rho(self) -> float:
        """r_i / r_e at neutrality.

        Raises:
            PtshellInfeasibleError: if no neutral coated sphere exists.
        """
        if not self.feasible:
            raise PtshellInfeasibleError(
                f"No neutral coated sphere for sigma=({self.sigma_c}, {self.sigma_s}, "
                f"{self.sigma_m}): volume fraction {self.neutral_ratio:.6g} not in (0, 1)"
            )
        return float(np.cbrt(self.neutral_ratio))

    def as_list(self) -> List[float]:
        return [self.sigma_c, self.sigma_s, self.sigma_m]


def _check_neutral_relation(mat: MaterialParams) -> None:
    rho3 = mat.neutral_ratio
    expected = 1.0 / 6.0 - rho3 * (mat.mu + 1.0 / 6.0)
    if abs(mat.lam - expected) > NEUTRAL_RELATION_TOL * max(1.0, abs(mat.lam)):
        raise PtshellValueError(
            f"Neutrality relation violated: lambda={mat.lam!r}, expected {expected!r}"
        )


def neutral_outer_radius(r_i: float, mat: MaterialParams) -> float:
    """Shell radius making concentric balls neutral for a core of radius ``r_i``.

    Raises:
        PtshellInfeasibleError: if the conductivities admit no neutral shell.
        PtshellValueError: on a non-positive radius.
    """
    if not r_i > 0:
        raise PtshellValueError(f"Core radius must be positive, got {r_i}")
    rho = mat.rho
    _check_neutral_relation(mat)
    return r_i / rho


def neutral_inner_radius(r_e: float, mat: MaterialParams) -> float:
    """Core radius making concentric balls neutral inside a shell of radius ``r_e``."""
    if not r_e > 0:
        raise PtshellValueError(f"Shell radius must be positive, got {r_e}")
    rho = mat.rho
    _check_neutral_relation(mat)
    return rho * r_e


def check_geometry(
    core: RadialSurface, shell: RadialSurface, budget: Optional[float] = DEFAULT_KERNEL_BUDGET
) -> None:
    """Reject crossing surfaces and perturbations outside the smallness budget.

    Args:
        core (RadialSurface): Inner surface.
        shell (RadialSurface): Outer surface.
        budget (Optional[float], optional): Allowed sum of norm estimates as a fraction of
            r_e - r_i; None disables the check. Defaults to DEFAULT_KERNEL_BUDGET.

    Raises:
        PtshellGeometryError: if the surfaces are not nested or the budget is exceeded.
    """
    gap = shell.base_radius - core.base_radius
    if gap <= 0:
        raise PtshellGeometryError(
            f"Core radius {core.base_radius} must be below shell radius {shell.base_radius}"
        )
    if budget is not None:
        total = core.norm_estimate() + shell.norm_estimate()
        if total > budget * gap:
            raise PtshellGeometryError(
                f"Perturbation norm estimate {total:.4g} exceeds budget {budget} * "
                f"(r_e - r_i) = {budget * gap:.4g}"
            )
    probe = build_grid(max(16, 2 * max(core.degree, shell.degree) + 4))
    r_core = float(np.max(core.radius(probe.nodes)))
    r_shell = float(np.min(shell.radius(probe.nodes)))
    if r_core >= r_shell:
        raise PtshellGeometryError(
            f"Surfaces touch or cross: max core radius {r_core:.6g} >= min shell radius "
            f"{r_shell:.6g}"
        )


@dataclass(frozen=True, eq=False)
class BlockSystem:
    """Assembled 2N x 2N operator, rows and columns ordered core then shell."""

    matrix: FloatArray
    material: MaterialParams
    core: SurfaceFrame
    shell: SurfaceFrame
    lam: float
    mu: float

    @property
    def grid(self) -> SphericalGrid:
        return self.core.grid

    @property
    def size(self) -> int:
        return self.grid.size

    def block(self, which: str) -> FloatArray:
        """Operator block including the diagonal shifts, e.g. "A" is -lambda I + A(h)."""
        n = self.size
        slices = {
            "A": (slice(0, n), slice(0, n)),
            "C": (slice(0, n), slice(n, 2 * n)),
            "D": (slice(n, 2 * n), slice(0, n)),
            "B": (slice(n, 2 * n), slice(n, 2 * n)),
        }
        if which not in slices:
            raise PtshellValueError(f"Unknown block '{which}'")
        result: FloatArray = self.matrix[slices[which]]
        return result

    def apply(self, f_core: FloatArray, f_shell: FloatArray) -> Tuple[FloatArray, FloatArray]:
        out = self.matrix @ np.concatenate([f_core, f_shell])
        return out[: self.size], out[self.size :]

    def rhs(self) -> FloatArray:
        """Right-hand sides g^(l) as columns, shape (2N, 3)."""
        g = -np.concatenate([self.core.jnormal, self.shell.jnormal], axis=0)
        return self._project(g.T).T

    def shifted(self, lambda_shift: float) -> "BlockSystem":
        """Copy with lambda replaced by lambda + lambda_shift in the core diagonal."""
        mat = self.matrix.copy()
        n = self.size
        mat[np.arange(n), np.arange(n)] -= lambda_shift
        return replace(self, matrix=mat, lam=self.lam + lambda_shift)

    def _project(self, values: FloatArray) -> FloatArray:
        n = self.size
        out = np.array(values, dtype=np.float64)
        out[..., :n] = self.grid.project_mean_zero(out[..., :n])
        out[..., n:] = self.grid.project_mean_zero(out[..., n:])
        return out


def assemble(
    core: RadialSurface,
    shell: RadialSurface,
    mat: MaterialParams,
    grid: SphericalGrid,
    *,
    assembler: Optional[BlockAssembler] = None,
    budget: Optional[float] = DEFAULT_KERNEL_BUDGET,
) -> BlockSystem:
    """Assemble the block operator for a core and a shell surface.

    Args:
        core (RadialSurface): Core surface (base radius r_i, perturbation h).
        shell (RadialSurface): Shell surface (base radius r_e, perturbation b).
        mat (MaterialParams): Conductivities.
        grid (SphericalGrid): Grid for both surfaces.
        assembler (Optional[BlockAssembler], optional): Assembler to reuse, e.g. for its
            cache. Defaults to a fresh one on ``grid``.
        budget (Optional[float], optional): Smallness budget, see :func:`check_geometry`.

    Raises:
        PtshellGeometryError: if the surfaces cross or the budget is exceeded.

    Returns:
        BlockSystem: the assembled system.
    """
    check_geometry(core, shell, budget)
    if assembler is None:
        assembler = BlockAssembler(grid)
    elif assembler.grid is not grid:
        raise PtshellValueError("Assembler grid does not match the requested grid")
    core_frame = surface_frame(core, grid)
    shell_frame = surface_frame(shell, grid)
    blocks = assembler.matrices([block_spec(w, core_frame, shell_frame) for w in "ABCD"])
    a_blk, b_blk, c_blk, d_blk = blocks
    n = grid.size
    eye = np.eye(n)
    matrix = np.block([[a_blk - mat.lam * eye, c_blk], [d_blk, b_blk - mat.mu * eye]])
    logger.debug(f"Assembled {2 * n}x{2 * n} system on n_theta={grid.n_theta}")
    return BlockSystem(matrix, mat, core_frame, shell_frame, mat.lam, mat.mu)


@dataclass(frozen=True, eq=False)
class Densities:
    """Solved densities for the three unit fields: arrays of shape (3, N)."""

    core: FloatArray
    shell: FloatArray
    rcond: float
    residuals: FloatArray

    @property
    def condition(self) -> float:
        return math.inf if self.rcond == 0.0 else 1.0 / self.rcond


def solve_densities(system: BlockSystem) -> Densities:
    """Solve the block system for g^(1), g^(2), g^(3) with a dense LU factorization.

    Right-hand sides and solutions are projected to quadrature mean zero on each surface.

    Raises:
        PtshellSolveError: if the matrix is numerically singular.
    """
    mat = system.matrix
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            lu, piv = scipy.linalg.lu_factor(mat, check_finite=True)
        except (scipy.linalg.LinAlgWarning, ValueError) as e:
            raise PtshellSolveError(f"LU factorization failed: {e}") from None
    anorm = float(np.linalg.norm(mat, 1))
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or rcond == 0.0:
        raise PtshellSolveError(f"Block system is singular (rcond={rcond}, info={info})")
    if 1.0 / rcond > CONDITION_WARNING:
        logger.warning(
            f"Block system condition estimate {1.0 / rcond:.3e} exceeds {CONDITION_WARNING:.0e}; "
            "the perturbations are probably outside the smallness budget"
        )
    g = system.rhs()
    f = scipy.linalg.lu_solve((lu, piv), g)
    f = system._project(f.T)
    residuals = np.linalg.norm(mat @ f.T - g, axis=0) / np.linalg.norm(g, axis=0)
    n = system.size
    logger.debug(f"Solved densities: rcond={rcond:.3e}, residuals={residuals}")
    return Densities(f[:, :n], f[:, n:], float(rcond), residuals)


@dataclass(frozen=True, eq=False)
class PolarizationTensor:
    """Symmetrized 3x3 PT and the asymmetry measured before symmetrization."""

    m: FloatArray
    asymmetry: float = 0.0
    grid: Dict[str, int] = field(default_factory=dict)

    def flatten(self) -> FloatArray:
        """(m11, m22, m33, m12, m13, m23)."""
        return np.array([self.m[i, j] for i, j in FLATTEN_INDEX])

    @classmethod
    def from_flat(cls, flat: Sequence[float]) -> "PolarizationTensor":
        m = np.zeros((3, 3))
        for value, (i, j) in zip(flat, FLATTEN_INDEX):
            m[i, j] = m[j, i] = value
        return cls(m)

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.m))

    def to_json(self) -> Dict[str, Any]:
        return {
            "m": self.m.tolist(),
            "flatten": self.flatten().tolist(),
            "asymmetry": self.asymmetry,
            "grid": dict(self.grid),
        }


def polarization_tensor(system: BlockSystem, dens: Densities) -> PolarizationTensor:
    """Quadrature of (r0 + p) x_{l'} f^(l) over both surfaces, then symmetrized."""
    w = system.grid.weights
    raw = dens.core @ (w[:, None] * system.core.positions) + dens.shell @ (
        w[:, None] * system.shell.positions
    )
    asym = float(np.max(np.abs(raw - raw.T)))
    scale = float(np.linalg.norm(raw))
    if scale > 0 and asym > 1e-7 * scale:
        logger.warning(f"PT asymmetry {asym:.3e} relative to |M|={scale:.3e}")
    return PolarizationTensor(0.5 * (raw + raw.T), asym, system.grid.describe())


def compute_pt(
    core: RadialSurface,
    shell: RadialSurface,
    mat: MaterialParams,
    grid: SphericalGrid,
    *,
    assembler: Optional[BlockAssembler] = None,
    budget: Optional[float] = DEFAULT_KERNEL_BUDGET,
) -> PolarizationTensor:
    """Assemble, solve and integrate in one call."""
    system = assemble(core, shell, mat, grid, assembler=assembler, budget=budget)
    return polarization_tensor(system, solve_densities(system))


def far_field_many(
    system: BlockSystem, dens: Densities, a: Sequence[float], points: FloatArray
) -> FloatArray:
    """u(x) - a.x at several exterior points, shape (P,).

    Raises:
        PtshellValueError: if a point lies within 1.5 times the outer radius.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    limit = FAR_FIELD_MIN_RADIUS * system.shell.surface.base_radius
    if np.any(np.linalg.norm(pts, axis=1) < limit):
        raise PtshellValueError(f"Far-field points must satisfy |x| >= {limit:.6g}")
    vec = np.asarray(a, dtype=np.float64)
    w = system.grid.weights
    total = np.zeros(pts.shape[0])
    for frame, f in ((system.core, dens.core), (system.shell, dens.shell)):
        dist = np.linalg.norm(pts[:, None, :] - frame.positions[None, :, :], axis=2)
        total += (-1.0 / (4.0 * math.pi * dist)) @ (w * (vec @ f))
    return total


def far_field(
    system: BlockSystem, dens: Densities, a: Sequence[float], x: Sequence[float]
) -> float:
    """u(x) - a.x at one exterior point."""
    return float(far_field_many(system, dens, a, np.asarray(x, dtype=np.float64))[0])


def fit_dipole(
    system: BlockSystem, dens: Densities, radius: float, n_theta: int = 16
) -> PolarizationTensor:
    """Fit -<M a, x> / (4 pi |x|^3) to the far field on a sphere, weighted by quadrature."""
    sample = build_grid(n_theta)
    pts = radius * sample.nodes
    sqrt_w = np.sqrt(sample.weights)
    design = -(pts / (4.0 * math.pi * radius**3)) * sqrt_w[:, None]
    m = np.zeros((3, 3))
    for ell in range(3):
        values = far_field_many(system, dens, np.eye(3)[ell], pts) * sqrt_w
        m[ell], *_ = np.linalg.lstsq(design, values, rcond=None)
    return PolarizationTensor(0.5 * (m + m.T), float(np.max(np.abs(m - m.T))))


def far_field_profile(
    system: BlockSystem, dens: Densities, radii: Sequence[float]
) -> List[Tuple[float, float, float, float]]:
    """Rows (radius, |u - a.x| for a = e1, e2, e3), RMS over fixed directions."""
    rows = []
    for r in radii:
        pts = r * FAR_FIELD_DIRECTIONS
        mags = [
            float(np.sqrt(np.mean(far_field_many(system, dens, np.eye(3)[ell], pts) ** 2)))
            for ell in range(3)
        ]
        rows.append((float(r), mags[0], mags[1], mags[2]))
    return rows


def far_field_slope(
    system: BlockSystem,
    dens: Densities,
    r_min_factor: float = 5.0,
    r_max_factor: float = 50.0,
    count: int = 10,
) -> float:
    """Log-log slope of the far-field magnitude over radii in [r_min, r_max] * r_e."""
    r_e = system.shell.surface.base_radius
    radii = np.geomspace(r_min_factor * r_e, r_max_factor * r_e, count)
    profile = far_field_profile(system, dens, radii)
    mags = np.array([math.sqrt(sum(v * v for v in row[1:]) / 3.0) for row in profile])
    if np.any(mags <= 0):
        raise PtshellValueError("Far field vanishes identically; slope undefined")
    slope, _ = np.polyfit(np.log(radii), np.log(mags), 1)
    return float(slope)
