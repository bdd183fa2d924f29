"""Named analytic-versus-numeric checks for one material and grid.

Each check compares a quadrature or boundary-integral value with a closed form and
carries its own tolerance. Checks marked informational are reported but never fail.
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from ptshell import analytic
from ptshell.bie import (
    MaterialParams,
    assemble,
    compute_pt,
    neutral_outer_radius,
    polarization_tensor,
    solve_densities,
)
from ptshell.designer import DesignProblem, PtMap, jacobian_fd
from ptshell.kernels import BlockAssembler
from ptshell.sphharm import FloatArray, RadialSurface, SphericalGrid, grid_polar_rule

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi
CHAIN_TOL = 1e-10
RANDOM_CONFIGS = 5


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    computed: Any
    expected: Any
    error: float
    tolerance: float
    informational: bool = False

    @property
    def passed(self) -> bool:
        return self.informational or (math.isfinite(self.error) and self.error <= self.tolerance)

    def to_json(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "computed": _plain(self.computed),
            "expected": _plain(self.expected),
            "error": self.error,
            "tolerance": self.tolerance,
            "informational": self.informational,
            "passed": self.passed,
        }


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _check(
    name: str, computed: Any, expected: Any, tolerance: float, informational: bool = False
) -> IdentityCheck:
    comp = np.asarray(computed, dtype=np.float64)
    exp = np.asarray(expected, dtype=np.float64)
    error = float(np.max(np.abs(comp - exp))) if comp.size else 0.0
    # Node-wise fields are summarized by their worst node; the value itself is not reported.
    if comp.size > 54:
        computed, expected = float(np.max(np.abs(comp))), float(np.max(np.abs(exp)))
    check = IdentityCheck(name, computed, expected, error, tolerance, informational)
    logger.debug(f"{name}: error {error:.3e} (tolerance {tolerance:.1e}) passed={check.passed}")
    return check


def _unit_sphere_checks(grid: SphericalGrid, polar_factor: int, tol: float) -> List[IdentityCheck]:
    rule = grid_polar_rule(grid, polar_factor)
    x = grid.nodes

    def around(fn: Callable[[FloatArray, FloatArray], FloatArray]) -> FloatArray:
        return analytic.integrate_around(grid, rule, fn)

    def dist(a: FloatArray, b: FloatArray) -> FloatArray:
        result: FloatArray = np.linalg.norm(a - b, axis=-1)
        return result

    constant = around(lambda a, b: 1.0 / dist(a, b))
    first = around(lambda a, b: b / dist(a, b)[..., None])
    second = around(
        lambda a, b: (b[..., :, None] * b[..., None, :] / dist(a, b)[..., None, None]).reshape(
            b.shape[:-1] + (9,)
        )
    ).reshape(-1, 3, 3)
    pair = around(
        lambda a, b: (
            (a - b)[..., :, None] * (a - b)[..., None, :] / dist(a, b)[..., None, None] ** 3
        ).reshape(b.shape[:-1] + (9,))
    ).reshape(-1, 3, 3)
    triple = around(
        lambda a, b: (
            np.einsum("...i,...k,...l->...ikl", a - b, a - b, a - b)
            / dist(a, b)[..., None, None, None] ** 3
        ).reshape(b.shape[:-1] + (27,))
    ).reshape(-1, 3, 3, 3)
    scale = tol * FOUR_PI
    pair_expected = (FOUR_PI / 3.0) * np.eye(3)
    return [
        _check("funk_hecke_constant", constant, np.full(grid.size, FOUR_PI), scale),
        _check("funk_hecke_first_moment", first, (FOUR_PI / 3.0) * x, scale),
        _check("funk_hecke_second_moment", second, analytic.funk2_moment(x), scale),
        _check("moment_tool_pair", pair, np.broadcast_to(pair_expected, pair.shape), scale),
        _check("moment_tool_triple", triple, analytic.triple_moment_tool(x), scale),
    ]


def _integral_formula_checks(
    grid: SphericalGrid, polar_factor: int, r_i: float, r_e: float, tol: float
) -> List[IdentityCheck]:
    rule = grid_polar_rule(grid, polar_factor)
    x = grid.nodes

    def dist(a: FloatArray, b: FloatArray) -> FloatArray:
        result: FloatArray = np.linalg.norm(r_i * a - r_e * b, axis=-1)
        return result

    moments = analytic.shell_profile_moments(r_i, r_e)
    inv = analytic.integrate_around(
        grid,
        rule,
        lambda a, b: np.concatenate(
            [1.0 / dist(a, b)[..., None], b / dist(a, b)[..., None]], axis=-1
        ),
    )
    cube = analytic.integrate_around(
        grid,
        rule,
        lambda a, b: np.concatenate(
            [1.0 / dist(a, b)[..., None] ** 3, b / dist(a, b)[..., None] ** 3], axis=-1
        ),
    )
    third = analytic.integrate_around(
        grid,
        rule,
        lambda a, b: (
            b[..., :, None] * b[..., None, :] / dist(a, b)[..., None, None] ** 3
        ).reshape(b.shape[:-1] + (9,)),
    ).reshape(-1, 3, 3)
    lam0, lam1 = moments["inverse"]
    cube0, cube1 = moments["inverse_cube"]
    return [
        _check(
            "integral_formula_first",
            inv,
            np.concatenate([np.full((grid.size, 1), lam0), lam1 * x], axis=1),
            tol * lam0,
        ),
        _check(
            "integral_formula_second",
            cube,
            np.concatenate([np.full((grid.size, 1), cube0), cube1 * x], axis=1),
            tol * cube0,
        ),
        _check(
            "integral_formula_third",
            third,
            analytic.third_integral_formula(x, r_i, r_e),
            tol * cube0,
        ),
    ]


def _moment_coefficient(grid: SphericalGrid, values: FloatArray) -> FloatArray:
    """Coefficient of x_l in each row of (3, N) nodal values."""
    result: FloatArray = np.einsum("lp,p,pl->l", values, grid.weights, grid.nodes) / (
        FOUR_PI / 3.0
    )
    return result


def _operator_checks(
    mat: MaterialParams,
    r_i: float,
    r_e: float,
    grid: SphericalGrid,
    assembler: BlockAssembler,
    tol: float,
    lambda_shift: float,
) -> List[IdentityCheck]:
    system = assemble(
        RadialSurface.sphere(r_i), RadialSurface.sphere(r_e), mat, grid, assembler=assembler
    )
    rho = r_i / r_e
    eye = np.eye(grid.size)
    actions = {
        "A": ((system.block("A") + mat.lam * eye) @ grid.nodes, grid.nodes / 6.0),
        "B": ((system.block("B") + mat.mu * eye) @ grid.nodes, grid.nodes / 6.0),
        "C": (system.block("C") @ grid.nodes, -(rho**2 / 3.0) * grid.nodes),
        "D": (system.block("D") @ grid.nodes, (2.0 * rho / 3.0) * grid.nodes),
    }
    checks = [
        _check(f"operator_action_{which}", got, want, tol)
        for which, (got, want) in actions.items()
    ]
    shifted = system.shifted(lambda_shift) if lambda_shift else system
    zeros = np.zeros_like(grid.nodes)
    core_in = shifted.apply(grid.nodes, zeros)
    shell_in = shifted.apply(zeros, grid.nodes)
    two_by_two = np.array(
        [
            [_moment_coefficient(grid, core_in[0].T), _moment_coefficient(grid, shell_in[0].T)],
            [_moment_coefficient(grid, core_in[1].T), _moment_coefficient(grid, shell_in[1].T)],
        ]
    )
    # Every component l gives the same 2x2 matrix.
    expected = analytic.origin_operator(mat, rho)
    checks.append(
        _check(
            "origin_block_action",
            np.moveaxis(two_by_two, 2, 0),
            np.broadcast_to(expected, (3, 2, 2)),
            tol,
        )
    )
    pt = polarization_tensor(shifted, solve_densities(shifted))
    checks.append(_check("neutral_pt", pt.flatten(), np.zeros(6), 10.0 * tol * r_e**3))
    return checks


def _pairing_checks(
    mat: MaterialParams, r_i: float, r_e: float, grid: SphericalGrid, polar_factor: int, tol: float
) -> List[IdentityCheck]:
    closed = analytic.pairing_tables(mat, r_i, r_e)
    published = analytic.pairing_tables(mat, r_i, r_e, published=True)
    quad = analytic.pairing_tables_quadrature(mat, r_i, r_e, grid, polar_factor)
    unit = FOUR_PI / r_e
    jac = analytic.origin_jacobian(mat, r_i, r_e)
    scale = abs(jac.scale)
    checks = [
        _check("pairing_table_b", quad.table_b, closed.table_b, tol * unit),
        _check("pairing_table_cd", quad.table_cd, closed.table_cd, tol * unit),
        _check("constants_c", quad.table_c, closed.table_c, tol * FOUR_PI),
        _check("pairing_table_g", quad.table_g, closed.table_g, tol * scale),
        _check("pairing_table_af", quad.table_af, closed.table_af, tol * scale),
        _check(
            "published_pairing_table_b",
            published.table_b,
            quad.table_b,
            tol * unit,
            informational=True,
        ),
        _check(
            "published_b_erratum",
            analytic.published_b_discrepancy(r_e),
            -(16.0 * math.pi / (45.0 * r_e)) * analytic.hessian_table(),
            CHAIN_TOL * unit,
        ),
        _check(
            "published_lists_transcription",
            list(analytic.published_list_residuals(mat, r_i, r_e).values()),
            [0.0] * 4,
            CHAIN_TOL * max(unit, scale),
        ),
        _check(
            "oracle_chain",
            analytic.jacobian_from_tables(closed, mat, r_i, r_e),
            jac.matrix,
            CHAIN_TOL * scale,
        ),
        _check(
            "oracle_chain_quadrature",
            analytic.jacobian_from_tables(quad, mat, r_i, r_e),
            jac.matrix,
            tol * 10.0 * scale,
        ),
        _check(
            "v2_adjoint",
            analytic.origin_operator_inverse(mat).T @ np.array([r_i, r_e]),
            analytic.v2_vector(mat, r_i, r_e),
            CHAIN_TOL * r_e,
        ),
    ]
    published_jac = analytic.origin_jacobian(mat, r_i, r_e, published=True)
    checks.append(
        _check(
            "determinant_formula",
            [jac.display_determinant, -jac.determinant],
            [jac.formula_determinant, jac.formula_determinant],
            CHAIN_TOL * abs(jac.formula_determinant),
        )
    )
    checks.append(
        _check(
            "published_determinant",
            published_jac.display_determinant,
            published_jac.formula_determinant,
            CHAIN_TOL * abs(published_jac.formula_determinant),
            informational=True,
        )
    )
    checks.append(
        _check(
            "swapped_prefactor",
            analytic.swapped_prefactor(mat, r_e),
            (mat.rho * r_e**2 * analytic.gamma1(mat) * math.pi) ** 6,
            0.0,
            informational=True,
        )
    )
    return checks


def _polynomial_checks(seed: int) -> List[IdentityCheck]:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((16, 3))
    y = rng.standard_normal((16, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    return [
        _check("euler_identity", analytic.euler_identity_residual(x, y), 0.0, 1e-13),
        _check("taylor_identity", analytic.taylor_identity_residual(x, y), 0.0, 1e-13),
    ]


def _fd_jacobian_checks(
    mat: MaterialParams,
    r_i: float,
    r_e: float,
    grid: SphericalGrid,
    assembler: BlockAssembler,
    tol: float,
    fd_step: float,
) -> List[IdentityCheck]:
    problem = DesignProblem(mat, r_i, r_e, RadialSurface.sphere(r_i), grid, fd_step=fd_step)
    jac = analytic.origin_jacobian(mat, r_i, r_e)
    scale = abs(jac.scale)
    fd = jacobian_fd(problem, pt_map=PtMap(problem, assembler))
    zero = jac.matrix == 0.0
    det_fd = float(np.linalg.det(fd))
    return [
        _check("origin_jacobian_fd", fd, jac.matrix, max(1e-4, 1e4 * tol) * scale),
        _check(
            "origin_jacobian_zero_pattern",
            fd[zero],
            np.zeros(int(zero.sum())),
            max(1e-6, 100.0 * tol) * scale,
        ),
        _check(
            "origin_jacobian_determinant_sign",
            math.copysign(1.0, det_fd) if det_fd else 0.0,
            math.copysign(1.0, jac.determinant),
            0.0,
        ),
    ]


def _concentric_checks(
    grid: SphericalGrid, assembler: BlockAssembler, tol: float, seed: int
) -> List[IdentityCheck]:
    rng = np.random.default_rng(seed)
    checks = []
    for k in range(RANDOM_CONFIGS):
        r_i = float(rng.uniform(0.5, 1.0))
        r_e = r_i * float(rng.uniform(1.3, 2.0))
        sigma = rng.uniform(0.5, 5.0, size=3)
        mat = MaterialParams(float(sigma[0]), float(sigma[1]), float(sigma[2]))
        want = analytic.concentric_pt(r_i, r_e, mat).flatten()
        got = compute_pt(
            RadialSurface.sphere(r_i), RadialSurface.sphere(r_e), mat, grid, assembler=assembler
        ).flatten()
        norm = max(float(np.max(np.abs(want))), 1e-300)
        checks.append(_check(f"concentric_oracle_{k + 1}", got / norm, want / norm, 100.0 * tol))
    return checks


def identity_suite(
    mat: MaterialParams,
    r_i: float,
    grid: SphericalGrid,
    *,
    polar_factor: int = 2,
    near_field: str = "polar",
    tol: float = 1e-8,
    lambda_shift: float = 0.0,
    fd_step: float = 1e-4,
    seed: int = 0,
    include_solves: bool = True,
) -> List[IdentityCheck]:
    """Run every check at the neutral configuration of ``mat`` with core radius ``r_i``.

    Args:
        mat (MaterialParams): Conductivities; must admit a neutral shell.
        r_i (float): Core radius.
        grid (SphericalGrid): Quadrature grid.
        polar_factor (int, optional): Polar nodes per grid latitude.
        near_field (str, optional): Quadrature of the C and D blocks.
        tol (float, optional): Base tolerance; individual checks scale it.
        lambda_shift (float, optional): Added to lambda in the origin-action and neutral-PT
            checks, as a negative control.
        fd_step (float, optional): Relative finite-difference step.
        seed (int, optional): Seed of the random points and configurations.
        include_solves (bool, optional): Run the checks needing repeated solves (the
            finite-difference Jacobian and the random concentric configurations).

    Raises:
        PtshellInfeasibleError: if ``mat`` admits no neutral shell.

    Returns:
        List[IdentityCheck]: the checks in a fixed order.
    """
    r_e = neutral_outer_radius(r_i, mat)
    assembler = BlockAssembler(grid, polar_factor, near_field)
    checks: List[IdentityCheck] = []
    checks += _unit_sphere_checks(grid, polar_factor, tol)
    checks += _integral_formula_checks(grid, polar_factor, r_i, r_e, tol)
    checks += _operator_checks(mat, r_i, r_e, grid, assembler, tol, lambda_shift)
    checks += _pairing_checks(mat, r_i, r_e, grid, polar_factor, tol)
    checks += _polynomial_checks(seed)
    if include_solves:
        checks += _fd_jacobian_checks(mat, r_i, r_e, grid, assembler, tol, fd_step)
        checks += _concentric_checks(grid, assembler, tol, seed)
    failed = [c.name for c in checks if not c.passed]
    if failed:
        logger.warning(f"{len(failed)} of {len(checks)} checks failed: {failed}")
    else:
        logger.info(f"All {len(checks)} checks passed")
    return checks


def suite_report(
    checks: List[IdentityCheck], header: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    """JSON-ready report: header fields, overall status and every check."""
    report: Dict[str, Any] = dict(header or {})
    report["passed"] = all(c.passed for c in checks)
    report["count"] = len(checks)
    report["failed"] = [c.name for c in checks if not c.passed]
    report["checks"] = [c.to_json() for c in checks]
    return report
