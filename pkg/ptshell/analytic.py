"""Closed forms at the concentric configuration and their quadrature counterparts.

Tables are indexed ``[l - 1, l' - 1, j - 1]`` with l, l' the field and moment components
and j the W6 direction. Two variants of the pairing of x_{l'} with the derivative of the
shell operator exist:

* ``published=True``: the tabulated form, (1/(3 r_e)) C - (8 pi/(45 r_e)) G.
* ``published=False``: the form the derivative-kernel quadrature reproduces,
  (1/(3 r_e)) C + (8 pi/(45 r_e)) G.

The third-moment integral enters the derivation with (y - x) in place of (x - y), which
flips the G term; the consequence for the origin Jacobian (12/45 in place of 28/45 in the
degree-2 entries) is confirmed by finite differences of the boundary-integral PT. Every
numerical consumer uses ``published=False``.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import numpy as np

from ptshell.bie import FLATTEN_INDEX, MaterialParams, PolarizationTensor
from ptshell.exceptions import PtshellSolveError, PtshellValueError
from ptshell.sphharm import (
    W6_HESSIANS,
    W6_SIZE,
    FloatArray,
    PolarRule,
    RadialSurface,
    SphericalGrid,
    grid_polar_rule,
    surface_frame,
    w6_tangential_gradients,
    w6_values,
)

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi
SQRT3 = math.sqrt(3.0)
SQRT15 = math.sqrt(15.0)
NEUTRAL_RADII_TOL = 1e-12
TARGET_CHUNK = 96

TableKey = Tuple[int, int, int]

# Tabulated entries (l, l', j) -> rational factor; the symmetric (l', l, j) entries
# and all unlisted entries follow from symmetry and zero.
PUBLISHED_C_LIST: Dict[TableKey, float] = {
    (1, 1, 1): SQRT15 / 3,
    (2, 2, 1): SQRT15 / 3,
    (3, 3, 1): SQRT15 / 3,
    (1, 1, 4): -1 / SQRT3,
    (2, 2, 4): -1 / SQRT3,
    (3, 3, 4): 2 / SQRT3,
    (1, 1, 6): 1.0,
    (2, 2, 6): -1.0,
    (1, 2, 2): 1.0,
    (1, 3, 5): 1.0,
    (2, 3, 3): 1.0,
}
PUBLISHED_B_LIST: Dict[TableKey, float] = {
    (1, 1, 4): 1 / SQRT3,
    (2, 2, 4): 1 / SQRT3,
    (3, 3, 4): -2 / SQRT3,
    (1, 1, 6): -1.0,
    (2, 2, 6): 1.0,
    (1, 2, 2): -1.0,
    (1, 3, 5): -1.0,
    (2, 3, 3): -1.0,
}
PUBLISHED_CD_LIST: Dict[TableKey, float] = {
    (1, 1, 4): -1 / SQRT3,
    (2, 2, 4): -1 / SQRT3,
    (3, 3, 4): 2 / SQRT3,
    (1, 1, 6): 1.0,
    (2, 2, 6): -1.0,
    (1, 2, 2): 1.0,
    (1, 3, 5): 1.0,
    (2, 3, 3): 1.0,
}
# Origin Jacobian entries (flattened pair, j) in units of pi rho^3 r_e^2 gamma1; the
# j = 1 entries depend on mu and are filled in by origin_jacobian.
PUBLISHED_JACOBIAN_LIST: Dict[Tuple[str, int], float] = {
    ("11", 4): -28 / (45 * SQRT3),
    ("22", 4): -28 / (45 * SQRT3),
    ("11", 6): 28 / 45,
    ("12", 2): 28 / 45,
    ("13", 5): 28 / 45,
    ("23", 3): 28 / 45,
    ("22", 6): -28 / 45,
    ("33", 4): 56 / (45 * SQRT3),
}
CONFIRMED_JACOBIAN_LIST: Dict[Tuple[str, int], float] = {
    key: value * 12 / 28 for key, value in PUBLISHED_JACOBIAN_LIST.items()
}
FLATTEN_NAMES = ("11", "22", "33", "12", "13", "23")
# Row order of the determinant display: (m11, m12, m13, m22, m23, m33).
DISPLAY_ROWS = (0, 3, 4, 1, 5, 2)


def table_from_list(entries: Dict[TableKey, float], scale: float = 1.0) -> FloatArray:
    """Expand a tabulated list into a symmetric (3, 3, 6) array."""
    out = np.zeros((3, 3, W6_SIZE))
    for (ell, ell_p, j), value in entries.items():
        out[ell - 1, ell_p - 1, j - 1] = scale * value
        out[ell_p - 1, ell - 1, j - 1] = scale * value
    return out


def hessian_table() -> FloatArray:
    """G^j_{l l'} arranged as (3, 3, 6); zero for j = 1."""
    return np.transpose(W6_HESSIANS, (1, 2, 0)).copy()


def c_constants() -> FloatArray:
    """C^j_{ll'} = integral x_l x_{l'} Y_j over S²."""
    out = (FOUR_PI / 15.0) * hessian_table()
    out[:, :, 0] = (FOUR_PI / 15.0) * (SQRT15 / 3.0) * np.eye(3)
    return out


def _mask_j1(table: FloatArray) -> FloatArray:
    table[:, :, 0] = 0.0
    return table


def key_identity_b(r_e: float, published: bool = False) -> FloatArray:
    """<x_{l'}, d_j B(0)[x_l]> from C and G; zero for j = 1."""
    sign = -1.0 if published else 1.0
    out = c_constants() / (3.0 * r_e) + sign * (8.0 * math.pi / (45.0 * r_e)) * hessian_table()
    return _mask_j1(out)


def key_identity_e(r_i: float, r_e: float) -> FloatArray:
    """<x_{l'}, E_j[x_l]>; zero for j = 1."""
    out = -(2.0 * r_i / (3.0 * r_e**2)) * c_constants() + (
        FOUR_PI * r_i / (9.0 * r_e**2)
    ) * hessian_table()
    return _mask_j1(out)


def gamma1(mat: MaterialParams) -> float:
    mu = mat.mu
    return 1.0 / (mat.neutral_ratio * (0.5 + mu) * (0.5 - mu))


def gamma2(mat: MaterialParams) -> float:
    return 1.0 / (mat.rho * (0.5 + mat.mu))


def _require_neutral(mat: MaterialParams, r_i: float, r_e: float) -> float:
    rho = mat.rho
    if not (0 < r_i < r_e) or abs(r_i / r_e - rho) > NEUTRAL_RADII_TOL * rho:
        raise PtshellValueError(
            f"Radii r_i={r_i}, r_e={r_e} are not neutral for sigma={mat.as_list()}"
        )
    return rho


def origin_operator(mat: MaterialParams, rho: float) -> FloatArray:
    """Scalar action of the (0, 0) system on span{(a x_l, b x_l)}."""
    return np.array(
        [
            [-mat.lam + 1.0 / 6.0, -(rho**2) / 3.0],
            [2.0 * rho / 3.0, -mat.mu + 1.0 / 6.0],
        ]
    )


def origin_operator_inverse(mat: MaterialParams) -> FloatArray:
    """Inverse of :func:`origin_operator` at neutral radii."""
    rho, mu = mat.rho, mat.mu
    return gamma1(mat) * np.array(
        [
            [-mu + 1.0 / 6.0, rho**2 / 3.0],
            [-2.0 * rho / 3.0, rho**3 * (mu + 1.0 / 6.0)],
        ]
    )


def v1_vector(mat: MaterialParams, r_e: float) -> FloatArray:
    """Densities at (0, 0): f^(l) = x_l * V1."""
    return gamma2(mat) * r_e**2 * np.array([-1.0, mat.rho])


def v2_vector(mat: MaterialParams, r_i: float, r_e: float) -> FloatArray:
    """Adjoint weight V2 with (A(0,0)^-1)^T (r_i, r_e) = V2.

    Raises:
        PtshellValueError: if the radii are not neutral or the adjoint check fails.
    """
    rho = _require_neutral(mat, r_i, r_e)
    v2 = gamma1(mat) * r_e * rho * (0.5 + mat.mu) * np.array([-1.0, rho**2])
    adjoint = origin_operator_inverse(mat).T @ np.array([r_i, r_e])
    if not np.allclose(adjoint, v2, rtol=1e-10, atol=1e-14 * r_e):
        raise PtshellValueError(f"Adjoint check failed: {adjoint} != {v2}")
    return v2


@dataclass(frozen=True, eq=False)
class PairingTables:
    """Pairings of x_{l'} (or x_{l'} V2) with derivatives at the concentric configuration."""

    table_b: FloatArray
    table_cd: FloatArray
    table_c: FloatArray
    table_g: FloatArray
    table_af: FloatArray

    def as_dict(self) -> Dict[str, FloatArray]:
        return {
            "table_b": self.table_b,
            "table_cd": self.table_cd,
            "table_c": self.table_c,
            "table_g": self.table_g,
            "table_af": self.table_af,
        }


def _g_and_af(
    mat: MaterialParams,
    r_i: float,
    r_e: float,
    table_b: FloatArray,
    table_cd: FloatArray,
    table_c: FloatArray,
) -> Tuple[FloatArray, FloatArray]:
    rho = mat.rho
    v2v3 = gamma1(mat) * r_e * rho**3 * (0.5 + mat.mu)
    table_g = v2v3 * r_e * ((FOUR_PI / 3.0) * hessian_table() - 4.0 * table_c)
    table_g[:, :, 0] = -2.0 * v2v3 * r_e * table_c[:, :, 0]
    table_af = gamma1(mat) * r_e**3 * rho * (-table_cd + rho**2 * table_b)
    return table_g, table_af


def pairing_tables(
    mat: MaterialParams, r_i: float, r_e: float, published: bool = False
) -> PairingTables:
    """Closed-form tables; with ``published`` the tabulated lists are used verbatim."""
    rho = _require_neutral(mat, r_i, r_e)
    if published:
        table_b = table_from_list(PUBLISHED_B_LIST, FOUR_PI / (45.0 * r_e))
        table_cd = table_from_list(PUBLISHED_CD_LIST, FOUR_PI * rho**2 / (15.0 * r_e))
        table_c = table_from_list(PUBLISHED_C_LIST, FOUR_PI / 15.0)
    else:
        table_b = key_identity_b(r_e)
        table_cd = rho * key_identity_e(r_i, r_e)
        table_c = c_constants()
    table_g, table_af = _g_and_af(mat, r_i, r_e, table_b, table_cd, table_c)
    return PairingTables(table_b, table_cd, table_c, table_g, table_af)


def jacobian_from_tables(
    tables: PairingTables, mat: MaterialParams, r_i: float, r_e: float
) -> FloatArray:
    """d_j m_{ll'}(0, 0) = table_g - table_af + gamma2 r_e^2 rho table_c, flattened rows."""
    rho = _require_neutral(mat, r_i, r_e)
    full = tables.table_g - tables.table_af + gamma2(mat) * r_e**2 * rho * tables.table_c
    return np.array([full[i, k, :] for i, k in FLATTEN_INDEX])


@dataclass(frozen=True, eq=False)
class OriginJacobian:
    """Jacobian of the flattened PT in the W6 shell coordinates at (0, 0)."""

    matrix: FloatArray
    scale: float
    determinant: float
    display_determinant: float
    formula_determinant: float
    published: bool


def origin_jacobian(
    mat: MaterialParams, r_i: float, r_e: float, published: bool = False
) -> OriginJacobian:
    """Closed-form d_j m_flat(0, 0), rows in flatten order and columns j = 1..6.

    Raises:
        PtshellValueError: if the radii are not neutral.
    """
    rho = _require_neutral(mat, r_i, r_e)
    scale = math.pi * rho**3 * r_e**2 * gamma1(mat)
    diag = -(4.0 / (3.0 * SQRT15)) * (0.5 + 3.0 * mat.mu)
    listing = PUBLISHED_JACOBIAN_LIST if published else CONFIRMED_JACOBIAN_LIST
    matrix = np.zeros((6, W6_SIZE))
    for row in range(3):
        matrix[row, 0] = diag
    for (name, j), value in listing.items():
        matrix[FLATTEN_NAMES.index(name), j - 1] = value
    matrix *= scale
    c_factor = listing[("11", 6)]
    e_factor = -listing[("11", 4)]
    formula = (
        scale**6 * 6.0 * (4.0 / (3.0 * SQRT15)) * (0.5 + 3.0 * mat.mu) * c_factor**4 * e_factor
    )
    return OriginJacobian(
        matrix=matrix,
        scale=scale,
        determinant=float(np.linalg.det(matrix)),
        display_determinant=float(np.linalg.det(matrix[list(DISPLAY_ROWS), :])),
        formula_determinant=formula,
        published=published,
    )


def swapped_prefactor(mat: MaterialParams, r_e: float) -> float:
    """Determinant prefactor (rho r_e^2 gamma1 pi)^6 stated for the core-design problem."""
    return (mat.rho * r_e**2 * gamma1(mat) * math.pi) ** 6


def concentric_pt(r_i: float, r_e: float, mat: MaterialParams) -> PolarizationTensor:
    """PT of concentric balls from the degree-1 radial transmission problem.

    Potentials (alpha_c r), (alpha_s r + beta_s / r^2), (r + beta_m / r^2) times cos(theta)
    in core, shell and matrix; M = -4 pi beta_m I.

    Raises:
        PtshellValueError: unless 0 < r_i < r_e.
        PtshellSolveError: if the 4x4 system is singular.
    """
    if not 0 < r_i < r_e:
        raise PtshellValueError(f"Need 0 < r_i < r_e, got r_i={r_i}, r_e={r_e}")
    sc, ss, sm = mat.sigma_c, mat.sigma_s, mat.sigma_m
    # unknowns: alpha_c, alpha_s, beta_s, beta_m
    lhs = np.array(
        [
            [r_i, -r_i, -1.0 / r_i**2, 0.0],
            [sc, -ss, 2.0 * ss / r_i**3, 0.0],
            [0.0, r_e, 1.0 / r_e**2, -1.0 / r_e**2],
            [0.0, ss, -2.0 * ss / r_e**3, 2.0 * sm / r_e**3],
        ]
    )
    rhs = np.array([0.0, 0.0, r_e, sm])
    try:
        sol = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as e:
        raise PtshellSolveError(f"Radial transmission system is singular: {e}") from None
    return PolarizationTensor(-FOUR_PI * sol[3] * np.eye(3))


def _check_j(j: int) -> None:
    if not 1 <= j <= W6_SIZE:
        raise PtshellValueError(f"W6 index must be in 1..{W6_SIZE}, got {j}")


def _pairs(x: FloatArray, y: FloatArray) -> Tuple[FloatArray, FloatArray]:
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    return np.broadcast_arrays(xa, ya)


def deriv_kernel_b0(j: int, x: FloatArray, y: FloatArray, r_e: float = 1.0) -> FloatArray:
    """d_j B_0(x, y) for unit x != y; broadcasts over leading axes.

    Raises:
        PtshellValueError: on coincident points or a bad index.
    """
    _check_j(j)
    xa, ya = _pairs(x, y)
    diff = ya - xa
    dist = np.linalg.norm(diff, axis=-1)
    if np.any(dist < 1e-14):
        raise PtshellValueError("d_j B_0 is singular at coincident points")
    if j == 1:
        return np.zeros(dist.shape)
    shape = dist.shape
    yx = w6_values(xa.reshape(-1, 3))[:, j - 1].reshape(shape)
    yy = w6_values(ya.reshape(-1, 3))[:, j - 1].reshape(shape)
    quad = np.einsum("...i,ik,...k->...", diff, W6_HESSIANS[j - 1], diff)
    result: FloatArray = ((2.5 * yx - 0.5 * yy) / dist - quad / dist**3) / (8.0 * math.pi * r_e)
    return result


def _c_profile(t: FloatArray, r_i: float, r_e: float) -> FloatArray:
    """d_1 C_00(x, y) / Y_1, a function of t = x . y only."""
    dist2 = r_i**2 + r_e**2 - 2.0 * r_i * r_e * t
    d3 = dist2**1.5
    d5 = dist2**2.5
    result: FloatArray = (r_i / (8.0 * math.pi)) * (
        (-3.0 * r_e + r_i * t) / d3 - 3.0 * (r_i**2 - r_e**2) * (r_e - r_i * t) / d5
    )
    return result


def deriv_kernel_c00(j: int, x: FloatArray, y: FloatArray, r_i: float, r_e: float) -> FloatArray:
    """d_j C_00(x, y) for unit x, y."""
    _check_j(j)
    xa, ya = _pairs(x, y)
    t = np.sum(xa * ya, axis=-1)
    yy = w6_values(ya.reshape(-1, 3))[:, j - 1].reshape(t.shape)
    result: FloatArray = _c_profile(t, r_i, r_e) * yy
    return result


def e_kernel(j: int, x: FloatArray, y: FloatArray, r_i: float, r_e: float) -> FloatArray:
    """E_j(x, y) = (r_e r_i / 4 pi) y . grad_T Y_j(x) / |r_i x - r_e y|^3."""
    _check_j(j)
    xa, ya = _pairs(x, y)
    t = np.sum(xa * ya, axis=-1)
    grad = w6_tangential_gradients(xa.reshape(-1, 3))[:, j - 1, :].reshape(xa.shape)
    dist3 = (r_i**2 + r_e**2 - 2.0 * r_i * r_e * t) ** 1.5
    result: FloatArray = (r_e * r_i / FOUR_PI) * np.sum(ya * grad, axis=-1) / dist3
    return result


def deriv_kernel_d00(j: int, x: FloatArray, y: FloatArray, r_i: float, r_e: float) -> FloatArray:
    """d_j D_00(x, y) = -(1/rho) (d_1 C_00 / Y_1)(x . y) Y_j(x) + E_j(x, y)."""
    _check_j(j)
    xa, ya = _pairs(x, y)
    t = np.sum(xa * ya, axis=-1)
    yx = w6_values(xa.reshape(-1, 3))[:, j - 1].reshape(t.shape)
    rho = r_i / r_e
    result: FloatArray = -_c_profile(t, r_i, r_e) * yx / rho + e_kernel(j, xa, ya, r_i, r_e)
    return result


def integrate_around(
    grid: SphericalGrid,
    rule: PolarRule,
    integrand: Callable[[FloatArray, FloatArray], FloatArray],
) -> FloatArray:
    """For each grid node x, integral over y in S² of integrand(x, y) by the polar rule.

    ``integrand`` receives x of shape (T, 1, 3) and y of shape (T, M, 3) and returns
    (T, M) or (T, M, K). Returns (N,) or (N, K).
    """
    chunks = []
    for start in range(0, grid.size, TARGET_CHUNK):
        targets = grid.nodes[start : start + TARGET_CHUNK]
        ys = rule.points_around(targets)
        vals = integrand(targets[:, None, :], ys)
        chunks.append(np.einsum("tm...,m->t...", vals, rule.weights))
    return np.concatenate(chunks, axis=0)


def _moment_pairing(
    grid: SphericalGrid,
    rule: PolarRule,
    kernel_j: Callable[[int, FloatArray, FloatArray], FloatArray],
) -> FloatArray:
    """<x_{l'}, K_j[y_l]> for j = 1..6 as a (3, 3, 6) table."""
    out = np.zeros((3, 3, W6_SIZE))
    for j in range(1, W6_SIZE + 1):
        inner = integrate_around(grid, rule, lambda x, y: kernel_j(j, x, y)[..., None] * y)
        out[:, :, j - 1] = (inner * grid.weights[:, None]).T @ grid.nodes
    return out


def pairing_tables_quadrature(
    mat: MaterialParams, r_i: float, r_e: float, grid: SphericalGrid, polar_factor: int = 2
) -> PairingTables:
    """Same tables from quadrature of the derivative kernels and of the RHS derivative."""
    rho = _require_neutral(mat, r_i, r_e)
    rule = grid_polar_rule(grid, polar_factor)
    table_b = _moment_pairing(grid, rule, lambda j, x, y: deriv_kernel_b0(j, x, y, r_e))
    table_dc = _moment_pairing(grid, rule, lambda j, x, y: deriv_kernel_c00(j, x, y, r_i, r_e))
    table_dd = _moment_pairing(grid, rule, lambda j, x, y: deriv_kernel_d00(j, x, y, r_i, r_e))
    table_cd = table_dc + rho * table_dd
    values = w6_values(grid.nodes)
    table_c = np.einsum("p,pl,pk,pj->lkj", grid.weights, grid.nodes, grid.nodes, values)
    v1 = v1_vector(mat, r_e)
    v2 = v2_vector(mat, r_i, r_e)
    g_deriv = _rhs_shell_derivative(r_e, grid)
    table_g = v2[1] * np.einsum("p,jlp,pk->lkj", grid.weights, g_deriv, grid.nodes)
    table_af = (
        v2[0] * v1[1] * table_dc + v2[1] * v1[0] * table_dd + v2[1] * v1[1] * table_b
    )
    return PairingTables(table_b, table_cd, table_c, table_g, table_af)


def _rhs_shell_derivative(r_e: float, grid: SphericalGrid, step: float = 1e-4) -> FloatArray:
    """d_j of the shell RHS -J nu_l at b = 0, shape (6, 3, N).

    The RHS is quadratic in b, so the centered difference is exact up to rounding.
    """
    out = np.zeros((W6_SIZE, 3, grid.size))
    for j in range(W6_SIZE):
        coeff = np.zeros(W6_SIZE)
        coeff[j] = step
        plus = surface_frame(RadialSurface.from_w6(r_e, coeff), grid).jnormal
        minus = surface_frame(RadialSurface.from_w6(r_e, -coeff), grid).jnormal
        out[j] = -(plus - minus).T / (2.0 * step)
    return out


def table_max_error(computed: FloatArray, expected: FloatArray) -> float:
    return float(np.max(np.abs(np.asarray(computed) - np.asarray(expected))))


def shell_profile_moments(r_i: float, r_e: float) -> Dict[str, Tuple[float, float]]:
    """Funk-Hecke eigenvalues (degree 0, degree 1) of the two shell-to-core profiles.

    ``inverse``: 1/|r_i x - r_e y|; ``inverse_cube``: 1/|r_i x - r_e y|^3.
    """
    gap = r_e**2 - r_i**2
    return {
        "inverse": (FOUR_PI / r_e, FOUR_PI * r_i / (3.0 * r_e**2)),
        "inverse_cube": (FOUR_PI / (r_e * gap), FOUR_PI * r_i / (r_e**2 * gap)),
    }


def third_integral_formula(x: FloatArray, r_i: float, r_e: float) -> FloatArray:
    """Integral of y_i y_k / |r_i x - r_e y|^3 over S², shape (..., 3, 3)."""
    xa = np.asarray(x, dtype=np.float64)
    gap = r_e**2 - r_i**2
    outer = np.einsum("...i,...k->...ik", xa, xa)
    result: FloatArray = (FOUR_PI / (3.0 * r_e**3)) * np.eye(3) + (
        FOUR_PI * r_i**2 / (r_e**3 * gap)
    ) * outer
    return result


def funk2_moment(x: FloatArray) -> FloatArray:
    """Integral of y_i y_k / |x - y| over S²: (16 pi/15) delta + (4 pi/5) x_i x_k."""
    xa = np.asarray(x, dtype=np.float64)
    outer = np.einsum("...i,...k->...ik", xa, xa)
    result: FloatArray = (16.0 * math.pi / 15.0) * np.eye(3) + (4.0 * math.pi / 5.0) * outer
    return result


def triple_moment_tool(x: FloatArray) -> FloatArray:
    """Integral of (x - y)_i (x - y)_k (x - y)_l / |x - y|^3: (8 pi/15) symmetrized delta x."""
    xa = np.asarray(x, dtype=np.float64)
    eye = np.eye(3)
    result: FloatArray = (8.0 * math.pi / 15.0) * (
        np.einsum("ik,...l->...ikl", eye, xa)
        + np.einsum("kl,...i->...ikl", eye, xa)
        + np.einsum("li,...k->...ikl", eye, xa)
    )
    return result


def euler_identity_residual(x: FloatArray, y: FloatArray) -> float:
    """Max over j of |y . grad Y_j(x) - 2 Y_j(y) + sum G_tk (y_k - x_k) y_t|."""
    xa = np.asarray(x, dtype=np.float64).reshape(-1, 3)
    ya = np.asarray(y, dtype=np.float64).reshape(-1, 3)
    grad = np.einsum("jik,pk->pji", W6_HESSIANS, xa)
    lhs = np.einsum("pji,pi->pj", grad, ya)
    rhs = 2.0 * w6_values(ya) - np.einsum("jtk,pk,pt->pj", W6_HESSIANS, ya - xa, ya)
    # Y_1 is constant, so only the degree-2 directions obey the homogeneity identity.
    return float(np.max(np.abs(lhs - rhs)[:, 1:]))


def taylor_identity_residual(x: FloatArray, y: FloatArray) -> float:
    """Max over j of the exact second-order Taylor remainder of Y_j (j >= 2)."""
    xa = np.asarray(x, dtype=np.float64).reshape(-1, 3)
    ya = np.asarray(y, dtype=np.float64).reshape(-1, 3)
    d = ya - xa
    grad = np.einsum("jik,pk->pji", W6_HESSIANS, xa)
    rem = (
        w6_values(ya)
        - w6_values(xa)
        - np.einsum("pji,pi->pj", grad, d)
        - 0.5 * np.einsum("pi,jik,pk->pj", d, W6_HESSIANS, d)
    )
    return float(np.max(np.abs(rem[:, 1:])))


def published_list_residuals(
    mat: MaterialParams, r_i: float, r_e: float
) -> Dict[str, float]:
    """Differences between tabulated lists and the C/G relations they were derived from.

    A nonzero ``table_b`` entry here would be a transcription error; the sign question of
    the G term is covered separately by :func:`published_b_discrepancy`.
    """
    rho = _require_neutral(mat, r_i, r_e)
    published = pairing_tables(mat, r_i, r_e, published=True)
    return {
        "table_c": table_max_error(published.table_c, c_constants()),
        "table_b": table_max_error(published.table_b, key_identity_b(r_e, published=True)),
        "table_cd": table_max_error(published.table_cd, rho * key_identity_e(r_i, r_e)),
        "jacobian": table_max_error(
            jacobian_from_tables(published, mat, r_i, r_e),
            origin_jacobian(mat, r_i, r_e, published=True).matrix,
        ),
    }


def published_b_discrepancy(r_e: float) -> FloatArray:
    """Published minus confirmed table_b; equals -(16 pi/(45 r_e)) G for j >= 2."""
    return key_identity_b(r_e, published=True) - key_identity_b(r_e)


def summarize(tables: PairingTables, other: PairingTables) -> Dict[str, float]:
    """Max entrywise error of each table."""
    mine, theirs = tables.as_dict(), other.as_dict()
    return {name: table_max_error(mine[name], theirs[name]) for name in mine}
