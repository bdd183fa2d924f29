"""Integral kernels of the core-shell transmission system and their quadrature.

Every kernel has the form

    K(x, y) = <X_t(x) - X_s(y), J_t(x) nu_t(x)> / (4 pi |X_t(x) - X_s(y)|^3)

where the target surface carries the Jacobian, so the unknown densities are
``phi o X * J``. Blocks: A core/core, B shell/shell, C core target with shell source,
D shell target with core source.
"""
import logging
import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.special import eval_legendre

from ptshell.exceptions import PtshellSolveError, PtshellValueError
from ptshell.sphharm import (
    FloatArray,
    PolarRule,
    SphericalGrid,
    SurfaceFrame,
    grid_analysis,
    grid_polar_rule,
    n_coeffs,
    rotate_z,
    sh_basis,
)

logger = logging.getLogger(__name__)

BLOCKS = ("A", "B", "C", "D")
NEAR_FIELD_MODES = ("polar", "plain")
SAME_SURFACE_CACHE_SIZE = 4


@dataclass(frozen=True, eq=False)
class KernelBlockSpec:
    """One block of the system: kernel pairing of a target and a source surface."""

    which: str
    target: SurfaceFrame
    source: SurfaceFrame

    def __post_init__(self) -> None:
        if self.which not in BLOCKS:
            raise PtshellValueError(f"Unknown block '{self.which}', expected one of {BLOCKS}")
        if self.target.grid is not self.source.grid:
            raise PtshellValueError("Target and source frames live on different grids")

    @property
    def singular(self) -> bool:
        return self.which in ("A", "B")

    @property
    def grid(self) -> SphericalGrid:
        return self.source.grid

    def cache_key(self) -> Tuple[str, bytes]:
        return (self.which, self.source.surface.key())


def block_spec(which: str, core: SurfaceFrame, shell: SurfaceFrame) -> KernelBlockSpec:
    """Pair the core and shell frames the way block ``which`` uses them."""
    pairs: Dict[str, Tuple[SurfaceFrame, SurfaceFrame]] = {
        "A": (core, core),
        "B": (shell, shell),
        "C": (core, shell),
        "D": (shell, core),
    }
    if which not in pairs:
        raise PtshellValueError(f"Unknown block '{which}', expected one of {BLOCKS}")
    target, source = pairs[which]
    return KernelBlockSpec(which, target, source)


def kernel(
    target_pos: FloatArray, target_jnormal: FloatArray, source_pos: FloatArray
) -> FloatArray:
    """Vectorized kernel; arguments broadcast over leading axes, last axis is 3."""
    diff = target_pos - source_pos
    dist = np.linalg.norm(diff, axis=-1)
    result: FloatArray = np.sum(diff * target_jnormal, axis=-1) / (4.0 * math.pi * dist**3)
    return result


def kernel_value(spec: KernelBlockSpec, x_idx: int, y_idx: int) -> float:
    """Kernel of a block at target node ``x_idx`` and source node ``y_idx``.

    Raises:
        PtshellValueError: on coincident nodes of a same-surface block or bad indices.
    """
    size = spec.grid.size
    if not (0 <= x_idx < size and 0 <= y_idx < size):
        raise PtshellValueError(f"Node index out of range 0..{size - 1}: ({x_idx}, {y_idx})")
    if spec.singular and x_idx == y_idx:
        raise PtshellValueError(f"Block {spec.which} is singular at coincident node {x_idx}")
    return float(
        kernel(
            spec.target.positions[x_idx],
            spec.target.jnormal[x_idx],
            spec.source.positions[y_idx],
        )
    )


def _rotations_z(angles: FloatArray) -> FloatArray:
    c, s = np.cos(angles), np.sin(angles)
    zeros, ones = np.zeros_like(c), np.ones_like(c)
    result: FloatArray = np.stack(
        [
            np.stack([c, -s, zeros], axis=1),
            np.stack([s, c, zeros], axis=1),
            np.stack([zeros, zeros, ones], axis=1),
        ],
        axis=1,
    )
    return result


def _rotation_y(angle: float) -> FloatArray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


class BlockAssembler:
    """Dense block matrices on one grid.

    For every target node the rotated polar rule is centred at the node; the density is
    carried to the rotated nodes by spherical-harmonic interpolation. Nodes of one latitude
    ring share a rotated rule up to an x3 rotation, so harmonics are evaluated once per ring
    and the azimuthal offset is applied to coefficient vectors.
    """

    def __init__(
        self, grid: SphericalGrid, polar_factor: int = 2, near_field: str = "polar"
    ) -> None:
        """Initialize the instance.

        Args:
            grid (SphericalGrid): Grid shared by densities and targets.
            polar_factor (int, optional): Polar nodes per grid latitude. Defaults to 2.
            near_field (str, optional): Quadrature for the C and D blocks, "polar" or
                "plain". Defaults to "polar".

        Raises:
            PtshellValueError: on an unknown near-field mode.
        """
        if near_field not in NEAR_FIELD_MODES:
            raise PtshellValueError(
                f"Unknown near-field quadrature '{near_field}', expected one of {NEAR_FIELD_MODES}"
            )
        self.grid = grid
        self.polar_factor = polar_factor
        self.near_field = near_field
        self.rule: PolarRule = grid_polar_rule(grid, polar_factor)
        self._cache: "OrderedDict[Tuple[str, bytes], FloatArray]" = OrderedDict()

    def matrix(self, spec: KernelBlockSpec) -> FloatArray:
        return self.matrices([spec])[0]

    def matrices(self, specs: Sequence[KernelBlockSpec]) -> List[FloatArray]:
        """Assemble several blocks, sharing one sweep over the latitude rings."""
        out: List[Optional[FloatArray]] = [None] * len(specs)
        polar: List[int] = []
        for i, spec in enumerate(specs):
            if spec.grid is not self.grid:
                raise PtshellValueError("Block spec and assembler use different grids")
            if spec.singular and spec.cache_key() in self._cache:
                self._cache.move_to_end(spec.cache_key())
                out[i] = self._cache[spec.cache_key()]
            elif spec.singular or self.near_field == "polar":
                polar.append(i)
            else:
                out[i] = self._plain(spec)
        if polar:
            for i, mat in zip(polar, self._polar([specs[i] for i in polar])):
                out[i] = mat
                if specs[i].singular:
                    self._remember(specs[i].cache_key(), mat)
        return [m for m in out if m is not None]

    def _remember(self, key: Tuple[str, bytes], mat: FloatArray) -> None:
        self._cache[key] = mat
        while len(self._cache) > SAME_SURFACE_CACHE_SIZE:
            self._cache.popitem(last=False)

    def _plain(self, spec: KernelBlockSpec) -> FloatArray:
        k = kernel(
            spec.target.positions[:, None, :],
            spec.target.jnormal[:, None, :],
            spec.source.positions[None, :, :],
        )
        result: FloatArray = k * self.grid.weights[None, :]
        return result

    def _polar(self, specs: Sequence[KernelBlockSpec]) -> List[FloatArray]:
        grid, rule = self.grid, self.rule
        n_grid = n_coeffs(grid.degree)
        degree = max([grid.degree] + [s.source.surface.degree for s in specs])
        rot_z = _rotations_z(grid.phi)
        src_coeffs = [rotate_z(s.source.surface.coeffs, grid.phi) for s in specs]
        rows_out = [np.empty((grid.size, n_grid)) for _ in specs]
        logger.debug(
            f"Polar assembly of blocks {[s.which for s in specs]} on {grid.n_theta} rings, "
            f"{rule.size} nodes per target"
        )
        for ring, theta in enumerate(grid.theta):
            base = rule.local_points @ _rotation_y(float(theta)).T
            ring_basis = sh_basis(degree, base)
            pts = np.einsum("jab,mb->jma", rot_z, base)
            rows = slice(ring * grid.n_phi, (ring + 1) * grid.n_phi)
            for spec, coeffs, q_out in zip(specs, src_coeffs, rows_out):
                src = spec.source.surface
                radius = src.base_radius + coeffs @ ring_basis[:, : coeffs.shape[-1]].T
                k = kernel(
                    spec.target.positions[rows][:, None, :],
                    spec.target.jnormal[rows][:, None, :],
                    radius[..., None] * pts,
                )
                q_raw = (k * rule.weights[None, :]) @ ring_basis[:, :n_grid]
                q_out[rows] = rotate_z(q_raw, -grid.phi)
        analysis = grid_analysis(grid)
        return [q @ analysis for q in rows_out]


def apply_block(
    spec: KernelBlockSpec, density: FloatArray, assembler: Optional[BlockAssembler] = None
) -> FloatArray:
    """Discretized action of one block on nodal densities (last axis)."""
    dens = np.asarray(density, dtype=np.float64)
    if dens.shape[-1] != spec.grid.size:
        raise PtshellValueError(
            f"Density has {dens.shape[-1]} nodes, block grid has {spec.grid.size}"
        )
    if assembler is None:
        assembler = BlockAssembler(spec.grid)
    result: FloatArray = dens @ assembler.matrix(spec).T
    return result


def funk_hecke_eigen(profile: Callable[[float], float], degree: int, limit: int = 200) -> float:
    """Eigenvalue 2 pi * integral of P_n(t) f(t) over (-1, 1) of a zonal kernel.

    Args:
        profile (Callable[[float], float]): Radial profile f(x . y).
        degree (int): Legendre degree n.
        limit (int, optional): Subinterval limit passed to quad. Defaults to 200.

    Raises:
        PtshellValueError: if degree is negative.
        PtshellSolveError: if the integral does not converge.

    Returns:
        float: The Funk-Hecke eigenvalue.
    """
    if degree < 0:
        raise PtshellValueError(f"Legendre degree must be >= 0, got {degree}")
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, _ = quad(
                lambda t: float(eval_legendre(degree, t)) * profile(t), -1.0, 1.0, limit=limit
            )
        except (IntegrationWarning, ZeroDivisionError, OverflowError) as e:
            raise PtshellSolveError(
                f"Funk-Hecke integral of degree {degree} did not converge: {e}"
            ) from None
    if not math.isfinite(value):
        raise PtshellSolveError(f"Funk-Hecke integral of degree {degree} is not finite")
    return 2.0 * math.pi * value
