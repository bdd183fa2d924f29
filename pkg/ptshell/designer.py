"""Newton design of PT-vanishing core-shell structures.

In ``design_shell`` mode the core perturbation is given and the shell perturbation is
sought in W6; ``design_core`` swaps the roles. The iteration is a damped chord Newton
method started from the closed-form origin Jacobian.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ptshell.analytic import origin_jacobian
from ptshell.bie import (
    DEFAULT_KERNEL_BUDGET,
    BlockSystem,
    Densities,
    MaterialParams,
    PolarizationTensor,
    assemble,
    far_field_slope,
    neutral_inner_radius,
    neutral_outer_radius,
    polarization_tensor,
    solve_densities,
)
from ptshell.exceptions import (
    PtshellDesignError,
    PtshellGeometryError,
    PtshellValueError,
)
from ptshell.kernels import BlockAssembler
from ptshell.sphharm import W6_SIZE, FloatArray, RadialSurface, SphericalGrid

logger = logging.getLogger(__name__)

MODES = ("design_shell", "design_core")
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 30
DEFAULT_FD_STEP = 1e-4
DEFAULT_ADMISSION = 0.05
REFRESH_RATIO = 0.5
MIN_DAMPING = 2.0**-10
NEUTRAL_RADII_TOL = 1e-12
NOISE_RATIO = 1e-2


@dataclass(frozen=True, eq=False)
class DesignProblem:
    """A given perturbed surface and the settings of the search for its W6 partner."""

    material: MaterialParams
    r_i: float
    r_e: float
    given: RadialSurface
    grid: SphericalGrid
    mode: str = "design_shell"
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    fd_step: float = DEFAULT_FD_STEP
    admission: float = DEFAULT_ADMISSION
    budget: float = DEFAULT_KERNEL_BUDGET
    polar_factor: int = 2
    near_field: str = "polar"
    far_field_radii: Tuple[float, float, int] = (5.0, 50.0, 10)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise PtshellValueError(f"Unknown design mode '{self.mode}', expected one of {MODES}")
        rho = self.material.rho
        if abs(self.r_i / self.r_e - rho) > NEUTRAL_RADII_TOL * rho:
            raise PtshellValueError(
                f"Radii r_i={self.r_i}, r_e={self.r_e} violate the neutrality condition"
            )
        base = self.r_i if self.mode == "design_shell" else self.r_e
        if not math.isclose(self.given.base_radius, base, rel_tol=1e-12):
            raise PtshellValueError(
                f"Given surface has base radius {self.given.base_radius}, expected {base}"
            )
        if self.tol <= 0 or self.max_iter < 0 or self.fd_step <= 0:
            raise PtshellValueError("tol and fd_step must be positive and max_iter >= 0")
        est = self.given.norm_estimate()
        # The designed surface starts as a sphere, so the given surface alone must also fit
        # the kernel budget of the first assembly.
        limit = min(self.admission * self.r_i, self.budget * (self.r_e - self.r_i))
        if est > limit:
            raise PtshellGeometryError(
                f"Perturbation norm estimate {est:.4g} exceeds admission {limit:.4g} "
                f"(min of {self.admission} * r_i and {self.budget} * (r_e - r_i))"
            )

    @classmethod
    def for_core(
        cls, core: RadialSurface, material: MaterialParams, grid: SphericalGrid, **kwargs: Any
    ) -> "DesignProblem":
        """Design a shell around ``core``; r_e follows from the neutrality condition."""
        r_e = neutral_outer_radius(core.base_radius, material)
        return cls(material, core.base_radius, r_e, core, grid, mode="design_shell", **kwargs)

    @classmethod
    def for_shell(
        cls, shell: RadialSurface, material: MaterialParams, grid: SphericalGrid, **kwargs: Any
    ) -> "DesignProblem":
        """Design a core inside ``shell``; r_i follows from the neutrality condition."""
        r_i = neutral_inner_radius(shell.base_radius, material)
        return cls(material, r_i, shell.base_radius, shell, grid, mode="design_core", **kwargs)

    @property
    def scale(self) -> float:
        return self.r_e**3

    def surfaces(self, coeffs: Sequence[float]) -> Tuple[RadialSurface, RadialSurface]:
        """(core, shell) for W6 coordinates of the designed surface."""
        if self.mode == "design_shell":
            return self.given, RadialSurface.from_w6(self.r_e, coeffs)
        return RadialSurface.from_w6(self.r_i, coeffs), self.given

    def scaled(self, factor: float) -> "DesignProblem":
        return replace(self, given=self.given.scaled(factor))

    def at_origin(self) -> "DesignProblem":
        return replace(self, given=RadialSurface.sphere(self.given.base_radius))


@dataclass(frozen=True, eq=False)
class Evaluation:
    pt: PolarizationTensor
    system: BlockSystem
    densities: Densities

    @property
    def residual(self) -> float:
        return self.pt.frobenius()


class PtMap:
    """W6 coordinates of the designed surface -> PT, with one block assembler shared."""

    def __init__(self, problem: DesignProblem, assembler: Optional[BlockAssembler] = None) -> None:
        self.problem = problem
        if assembler is None:
            assembler = BlockAssembler(problem.grid, problem.polar_factor, problem.near_field)
        self.assembler = assembler
        self.calls = 0

    def evaluate(self, coeffs: Sequence[float]) -> Evaluation:
        core, shell = self.problem.surfaces(coeffs)
        system = assemble(
            core,
            shell,
            self.problem.material,
            self.problem.grid,
            assembler=self.assembler,
            budget=self.problem.budget,
        )
        dens = solve_densities(system)
        self.calls += 1
        return Evaluation(polarization_tensor(system, dens), system, dens)

    def __call__(self, coeffs: Sequence[float]) -> FloatArray:
        return self.evaluate(coeffs).pt.flatten()

    def with_problem(self, problem: DesignProblem) -> "PtMap":
        """Same assembler (and block cache) for a related problem on the same grid."""
        return PtMap(problem, self.assembler)


def jacobian_fd(
    problem: DesignProblem,
    coeffs: Optional[Sequence[float]] = None,
    step: Optional[float] = None,
    *,
    pt_map: Optional[PtMap] = None,
    check_noise: bool = False,
) -> FloatArray:
    """Centered differences of the flattened PT in each W6 coordinate, shape (6, 6).

    Args:
        problem (DesignProblem): The design problem.
        coeffs (Optional[Sequence[float]], optional): Base point. Defaults to zero.
        step (Optional[float], optional): Absolute step. Defaults to fd_step * r_e.
        pt_map (Optional[PtMap], optional): Evaluator to reuse.
        check_noise (bool, optional): Repeat with twice the step and reject the result if
            the two estimates disagree by more than 1 percent of the column norm.

    Raises:
        PtshellValueError: if the step is not positive or is below the solver noise floor.
    """
    base = np.zeros(W6_SIZE) if coeffs is None else np.asarray(coeffs, dtype=np.float64)
    h = problem.fd_step * problem.r_e if step is None else step
    if not h > 0:
        raise PtshellValueError(f"Finite-difference step must be positive, got {h}")
    pm = pt_map if pt_map is not None else PtMap(problem)

    def columns(size: float) -> FloatArray:
        out = np.zeros((6, W6_SIZE))
        for j in range(W6_SIZE):
            e = np.zeros(W6_SIZE)
            e[j] = size
            out[:, j] = (pm(base + e) - pm(base - e)) / (2.0 * size)
        return out

    jac = columns(h)
    if check_noise:
        coarse = columns(2.0 * h)
        for j in range(W6_SIZE):
            spread = float(np.linalg.norm(jac[:, j] - coarse[:, j]))
            if spread > NOISE_RATIO * max(float(np.linalg.norm(coarse[:, j])), 1e-300):
                raise PtshellValueError(
                    f"Finite-difference step {h:.3g} is below the solver noise floor "
                    f"(column {j + 1} changes by {spread:.3e} when the step doubles)"
                )
    logger.debug(f"Finite-difference Jacobian with step {h:.3g}: {2 * W6_SIZE} PT evaluations")
    return jac


def chord_jacobian(problem: DesignProblem, pt_map: Optional[PtMap] = None) -> FloatArray:
    """Jacobian used to start the chord iteration.

    The closed form for shell design; for core design the finite-difference Jacobian at
    the concentric configuration.
    """
    if problem.mode == "design_shell":
        return origin_jacobian(problem.material, problem.r_i, problem.r_e).matrix
    origin = problem.at_origin()
    pm = pt_map.with_problem(origin) if pt_map is not None else PtMap(origin)
    return jacobian_fd(origin, pt_map=pm)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    residual: float
    step_norm: float
    damping: float
    refreshed: bool

    def to_json(self) -> Dict[str, Any]:
        return {
            "iteration": self.iteration,
            "residual": self.residual,
            "step_norm": self.step_norm,
            "damping": self.damping,
            "refreshed": self.refreshed,
        }


@dataclass(frozen=True, eq=False)
class DesignResult:
    """Outcome of a design run; ``coeffs`` are the W6 coordinates of the designed surface."""

    mode: str
    coeffs: FloatArray
    core: RadialSurface
    shell: RadialSurface
    pt: PolarizationTensor
    residual: float
    tolerance: float
    iterations: int
    converged: bool
    jacobian_refreshes: int = 0
    condition: float = math.nan
    far_field_slope: Optional[float] = None
    history: List[IterationRecord] = field(default_factory=list)
    path: List[Tuple[float, FloatArray]] = field(default_factory=list)

    def to_json(self) -> Dict[str, Any]:
        return {
            "mode": self.mode,
            "coeffs": self.coeffs.tolist(),
            "core": self.core.to_json(),
            "shell": self.shell.to_json(),
            "pt": self.pt.to_json(),
            "residual": self.residual,
            "tolerance": self.tolerance,
            "iterations": self.iterations,
            "converged": self.converged,
            "jacobian_refreshes": self.jacobian_refreshes,
            "condition": self.condition,
            "far_field_slope": self.far_field_slope,
            "history": [rec.to_json() for rec in self.history],
            "path": [{"t": t, "coeffs": c.tolist()} for t, c in self.path],
        }


def _result(
    problem: DesignProblem,
    coeffs: FloatArray,
    ev: Evaluation,
    iterations: int,
    refreshes: int,
    history: List[IterationRecord],
    with_slope: bool,
) -> DesignResult:
    core, shell = problem.surfaces(coeffs)
    tol_abs = problem.tol * problem.scale
    slope = None
    if with_slope:
        r_min, r_max, count = problem.far_field_radii
        try:
            slope = far_field_slope(ev.system, ev.densities, r_min, r_max, int(count))
        except PtshellValueError as e:
            logger.warning(f"Far-field slope unavailable: {e}")
    return DesignResult(
        mode=problem.mode,
        coeffs=coeffs.copy(),
        core=core,
        shell=shell,
        pt=ev.pt,
        residual=ev.residual,
        tolerance=tol_abs,
        iterations=iterations,
        converged=ev.residual <= tol_abs,
        jacobian_refreshes=refreshes,
        condition=ev.densities.condition,
        far_field_slope=slope,
        history=list(history),
    )


def _jacobian_at(
    problem: DesignProblem,
    pm: PtMap,
    coeffs: FloatArray,
    ev: Evaluation,
    iteration: int,
    refreshes: int,
    history: List[IterationRecord],
    chord: bool = False,
) -> FloatArray:
    try:
        if chord:
            return chord_jacobian(problem, pm)
        return jacobian_fd(problem, coeffs, pt_map=pm)
    except PtshellGeometryError as e:
        raise PtshellDesignError(
            f"Jacobian at iteration {iteration} left the admissible geometry: {e}",
            best=_result(problem, coeffs, ev, iteration, refreshes, history, False),
            diagnostics={"history": [rec.to_json() for rec in history]},
        ) from None


def design(
    problem: DesignProblem,
    start: Optional[Sequence[float]] = None,
    *,
    jacobian: Optional[FloatArray] = None,
    pt_map: Optional[PtMap] = None,
    with_slope: bool = True,
) -> DesignResult:
    """Find W6 coordinates with ||M||_F <= tol * r_e^3 by damped chord Newton.

    The Newton step solves J delta = -M_flat. A step is accepted once halving the damping
    makes ||M||_F decrease; J is refreshed by finite differences when the residual ratio
    of an accepted step exceeds 0.5, or when no damping decreases the residual.

    Args:
        problem (DesignProblem): The design problem.
        start (Optional[Sequence[float]], optional): Initial W6 coordinates. Defaults to 0.
        jacobian (Optional[FloatArray], optional): Initial chord Jacobian. Defaults to
            :func:`chord_jacobian`.
        pt_map (Optional[PtMap], optional): Evaluator to reuse.
        with_slope (bool, optional): Fit the far-field slope of the result.

    Raises:
        PtshellDesignError: if the iteration stalls, runs out of iterations or needs a
            Jacobian outside the kernel budget; ``best`` holds the best iterate when one exists.

    Returns:
        DesignResult: the converged design.
    """
    pm = pt_map if pt_map is not None else PtMap(problem)
    tol_abs = problem.tol * problem.scale
    coeffs = np.zeros(W6_SIZE) if start is None else np.array(start, dtype=np.float64)
    try:
        ev = pm.evaluate(coeffs)
    except PtshellGeometryError as e:
        raise PtshellDesignError(
            f"Start point rejected: {e}", diagnostics={"start": coeffs.tolist()}
        ) from None
    history = [IterationRecord(0, ev.residual, 0.0, 1.0, False)]
    refreshes = 0
    jac = jacobian
    fresh = False
    iteration = 0
    logger.debug(f"{problem.mode}: initial residual {ev.residual:.3e}, target {tol_abs:.3e}")

    while ev.residual > tol_abs and iteration < problem.max_iter:
        if jac is None:
            jac = _jacobian_at(problem, pm, coeffs, ev, iteration, refreshes, history, chord=True)
        try:
            delta = np.linalg.solve(jac, -ev.pt.flatten())
        except np.linalg.LinAlgError as e:
            raise PtshellDesignError(
                f"Singular design Jacobian: {e}",
                best=_result(problem, coeffs, ev, iteration, refreshes, history, False),
            ) from None
        damping = 1.0
        accepted: Optional[Tuple[FloatArray, Evaluation]] = None
        while damping >= MIN_DAMPING:
            candidate = coeffs + damping * delta
            try:
                trial = pm.evaluate(candidate)
            except PtshellGeometryError as e:
                logger.debug(f"Rejected step with damping {damping:g}: {e}")
            else:
                if trial.residual < ev.residual:
                    accepted = (candidate, trial)
                    break
            damping /= 2.0
        if accepted is None:
            if fresh:
                raise PtshellDesignError(
                    f"Newton iteration stalled at residual {ev.residual:.3e} "
                    f"after {iteration} iterations",
                    best=_result(problem, coeffs, ev, iteration, refreshes, history, False),
                    diagnostics={"history": [rec.to_json() for rec in history]},
                )
            jac = _jacobian_at(problem, pm, coeffs, ev, iteration, refreshes, history)
            refreshes += 1
            fresh = True
            history.append(IterationRecord(iteration, ev.residual, 0.0, 0.0, True))
            continue

        iteration += 1
        ratio = accepted[1].residual / ev.residual
        step_norm = float(np.max(np.abs(accepted[0] - coeffs)))
        coeffs, ev = accepted
        fresh = False
        refresh = ratio > REFRESH_RATIO and ev.residual > tol_abs
        history.append(IterationRecord(iteration, ev.residual, step_norm, damping, refresh))
        logger.debug(
            f"Iteration {iteration}: residual {ev.residual:.3e}, ratio {ratio:.3f}, "
            f"damping {damping:g}"
        )
        if refresh:
            jac = _jacobian_at(problem, pm, coeffs, ev, iteration, refreshes, history)
            refreshes += 1
            fresh = True

    result = _result(problem, coeffs, ev, iteration, refreshes, history, with_slope)
    if not result.converged:
        raise PtshellDesignError(
            f"No convergence in {problem.max_iter} iterations: residual {ev.residual:.3e} "
            f"> {tol_abs:.3e}",
            best=result,
            diagnostics={"history": [rec.to_json() for rec in history]},
        )
    logger.info(
        f"{problem.mode} converged in {iteration} iterations, residual {ev.residual:.3e}"
    )
    return result


def continuation(
    problem: DesignProblem, steps: int, *, pt_map: Optional[PtMap] = None, with_slope: bool = True
) -> DesignResult:
    """Solve for t * given, t = 1/steps, ..., 1, warm-starting each solve.

    The result is the final solve with ``path`` holding (t, coeffs) from t = 0.

    Raises:
        PtshellValueError: if steps < 1.
        PtshellDesignError: naming the failing t.
    """
    if steps < 1:
        raise PtshellValueError(f"Continuation needs at least one step, got {steps}")
    pm = pt_map if pt_map is not None else PtMap(problem)
    jac = chord_jacobian(problem, pm)
    # At t = 0 both surfaces are the neutral spheres, whose PT vanishes at b = 0.
    coeffs = np.zeros(W6_SIZE)
    path: List[Tuple[float, FloatArray]] = [(0.0, coeffs.copy())]
    result: Optional[DesignResult] = None
    for k in range(1, steps + 1):
        t = k / steps
        sub = problem.scaled(t)
        try:
            result = design(
                sub,
                coeffs,
                jacobian=jac,
                pt_map=pm.with_problem(sub),
                with_slope=with_slope and k == steps,
            )
        except PtshellDesignError as e:
            raise PtshellDesignError(
                f"Continuation failed at t={t:.6g}: {e}",
                best=e.best,
                diagnostics={**(e.diagnostics or {}), "t": t, "path": _path_json(path)},
            ) from None
        coeffs = result.coeffs
        path.append((t, coeffs.copy()))
        logger.debug(f"Continuation t={t:.4g}: |coeffs|_inf {float(np.max(np.abs(coeffs))):.3e}")
    assert result is not None
    return replace(result, path=path)


def _path_json(path: List[Tuple[float, FloatArray]]) -> List[Dict[str, Any]]:
    return [{"t": t, "coeffs": c.tolist()} for t, c in path]


def max_path_jump(path: List[Tuple[float, FloatArray]]) -> float:
    """Largest |b(t_{k+1}) - b(t_k)|_inf along a continuation path."""
    return max(
        (float(np.max(np.abs(b1 - b0))) for (_, b0), (_, b1) in zip(path, path[1:])),
        default=0.0,
    )


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    coeffs_inf: float
    residual: float
    iterations: int
    converged: bool

    def as_row(self) -> List[Any]:
        return [self.epsilon, self.coeffs_inf, self.residual, self.iterations, self.converged]


def amplitude_sweep(
    problem: DesignProblem, epsilons: Sequence[float], shape: Optional[RadialSurface] = None
) -> List[SweepRow]:
    """Design for the given surface (or ``shape``) rescaled to norm estimate epsilon * r_i.

    Non-converged runs are reported with their best iterate instead of raising.
    """
    source = problem.given if shape is None else shape
    rows = []
    pm = PtMap(problem)
    for eps in epsilons:
        amplitude = eps * problem.r_i
        try:
            sub = replace(problem, given=source.scaled_to(amplitude))
        except PtshellValueError as e:
            logger.warning(f"Skipping epsilon={eps:g}: {e}")
            continue
        try:
            result = design(sub, pt_map=pm.with_problem(sub), with_slope=False)
        except PtshellDesignError as e:
            if not isinstance(e.best, DesignResult):
                raise
            result = e.best
        except PtshellGeometryError as e:
            logger.warning(f"Skipping epsilon={eps:g}: {e}")
            continue
        rows.append(
            SweepRow(
                float(eps),
                float(np.max(np.abs(result.coeffs))),
                result.residual,
                result.iterations,
                result.converged,
            )
        )
    return rows
