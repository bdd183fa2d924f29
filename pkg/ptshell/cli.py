"""Command-line front end: parser, subcommands and report writers."""
import argparse
import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from ptshell import analytic
from ptshell.bie import (
    assemble,
    far_field_profile,
    fit_dipole,
    neutral_inner_radius,
    neutral_outer_radius,
    polarization_tensor,
    solve_densities,
)
from ptshell.config import RunConfig
from ptshell.designer import (
    DesignProblem,
    DesignResult,
    PtMap,
    amplitude_sweep,
    continuation,
    design,
    jacobian_fd,
)
from ptshell.exceptions import PtshellDesignError, PtshellInfeasibleError
from ptshell.kernels import BlockAssembler
from ptshell.sphharm import RadialSurface
from ptshell.verify import identity_suite, suite_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_INFEASIBLE = 2
EXIT_NO_CONVERGENCE = 3
FAR_FIELD_HEADER = ["radius", "abs_u_minus_ax_e1", "abs_u_minus_ax_e2", "abs_u_minus_ax_e3"]
SWEEP_HEADER = ["epsilon", "coeffs_inf", "residual", "iterations", "converged"]


class _HelpFormatter(
    argparse.RawDescriptionHelpFormatter,
    argparse.ArgumentDefaultsHelpFormatter,
):
    # From https://stackoverflow.com/a/68260107/13706377
    pass


def build_parser(
    prog: str,
    description: Optional[str],
    epilog: Optional[str],
) -> argparse.ArgumentParser:
    """Build argparse parser for the ptshell commands.

    Args:
        prog (str): Name of program.
        description (Optional[str]): argparse Description.
        epilog (Optional[str]): argparse Epilog.

    Returns:
        argparse.ArgumentParser: Configured parser
    """
    parser = argparse.ArgumentParser(
        prog=prog,
        description=description,
        epilog=epilog,
        formatter_class=_HelpFormatter,
        allow_abbrev=False,
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, default=None, help="JSON config file")
    parser.add_argument("--n-theta", type=int, default=None, help="Override n_theta")
    parser.add_argument("--tol", type=float, default=None, help="Override tol")
    parser.add_argument("--out", default=None, help="Override the output directory")
    parser.add_argument(
        "--swap-roles",
        action="store_true",
        default=None,
        help="Perturbed shell given, core designed",
    )
    parser.add_argument("--log", default="WARN", help="Set logging level")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    """Config file (or defaults) with the command-line overrides applied."""
    return RunConfig.load(args.config).with_overrides(
        n_theta=args.n_theta, tol=args.tol, out=args.out, swap_roles=args.swap_roles
    )


def _canonical(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    if isinstance(value, np.ndarray):
        return _canonical(value.tolist())
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def write_json(path: Path, doc: Dict[str, Any]) -> Path:
    """Write a report with sorted keys, so equal inputs give identical bytes."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf8") as f:
        json.dump(_canonical(doc), f, sort_keys=True, indent=2)
        f.write("\n")
    logger.info(f"Wrote {path}")
    return path


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    """Header row plus data rows, RFC 4180 quoting."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf8", newline="") as f:
        writer = csv.writer(f, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    logger.info(f"Wrote {path}")
    return path


def report_header(command: str, cfg: RunConfig) -> Dict[str, Any]:
    return {
        "command": command,
        "config_digest": cfg.digest(),
        "grid": cfg.grid().describe(),
        "tol": cfg.get_float("tol"),
    }


def _out_dir(cfg: RunConfig) -> Path:
    return Path(cfg.get_str("out"))


def _radii(cfg: RunConfig) -> List[float]:
    r_min, r_max, count = cfg.get_float_list("far_field.radii", 3)
    return [float(r) for r in np.geomspace(r_min, r_max, int(count))]


def design_problem(cfg: RunConfig) -> DesignProblem:
    """Design problem described by the config, in the mode ``swap_roles`` selects."""
    mat = cfg.material()
    r_min, r_max, count = cfg.get_float_list("far_field.radii", 3)
    kwargs: Dict[str, Any] = dict(
        tol=cfg.get_float("tol"),
        max_iter=cfg.get_int("max_iter"),
        fd_step=cfg.get_float("fd_step"),
        admission=cfg.get_float("budget.admission"),
        budget=cfg.get_float("budget.kernel"),
        polar_factor=cfg.get_int("polar_factor"),
        near_field=cfg.get_str("near_field"),
        far_field_radii=(r_min, r_max, int(count)),
    )
    if cfg.get_bool("swap_roles"):
        shell = cfg.surface("shell", cfg.get_float("r_e"))
        return DesignProblem.for_shell(shell, mat, cfg.grid(), **kwargs)
    core = cfg.surface("core", cfg.get_float("r_i"))
    return DesignProblem.for_core(core, mat, cfg.grid(), **kwargs)


def cmd_neutral(cfg: RunConfig) -> int:
    """Neutral radius, rho, lambda and mu; exit 2 when no neutral shell exists."""
    mat = cfg.material()
    report = report_header("neutral", cfg)
    report["sigma"] = mat.as_list()
    report["volume_fraction"] = mat.neutral_ratio
    try:
        if cfg.get_bool("swap_roles"):
            r_e = cfg.get_float("r_e")
            r_i = neutral_inner_radius(r_e, mat)
        else:
            r_i = cfg.get_float("r_i")
            r_e = neutral_outer_radius(r_i, mat)
    except PtshellInfeasibleError as e:
        logger.error(f"{type(e).__name__}: {e}")
        report.update({"feasible": False, "reason": str(e)})
        write_json(_out_dir(cfg) / "neutral.json", report)
        return EXIT_INFEASIBLE
    report.update(
        {"feasible": True, "r_i": r_i, "r_e": r_e, "rho": mat.rho, "lambda": mat.lam, "mu": mat.mu}
    )
    write_json(_out_dir(cfg) / "neutral.json", report)
    print(f"r_i={r_i!r} r_e={r_e!r} rho={mat.rho!r} lambda={mat.lam!r} mu={mat.mu!r}")
    return EXIT_OK


def cmd_pt(cfg: RunConfig) -> int:
    """PT of the configured core and shell, plus a far-field dipole fit as a cross-check."""
    mat = cfg.material()
    r_i = cfg.get_float("r_i")
    r_e_cfg = cfg.get("pt.r_e")
    r_e = neutral_outer_radius(r_i, mat) if r_e_cfg is None else cfg.get_float("pt.r_e")
    core = cfg.surface("core", r_i)
    if cfg.get("shell") is not None:
        shell = cfg.surface("shell", r_e)
    else:
        shell = RadialSurface.from_w6(r_e, cfg.get_float_list("shell_coeffs", 6))
    grid = cfg.grid()
    assembler = BlockAssembler(grid, cfg.get_int("polar_factor"), cfg.get_str("near_field"))
    system = assemble(
        core, shell, mat, grid, assembler=assembler, budget=cfg.get_float("budget.kernel")
    )
    dens = solve_densities(system)
    pt = polarization_tensor(system, dens)
    fit = fit_dipole(system, dens, _radii(cfg)[0] * r_e)
    report = report_header("pt", cfg)
    report.update(
        {
            "r_i": r_i,
            "r_e": r_e,
            "core": core.to_json(),
            "shell": shell.to_json(),
            "pt": pt.to_json(),
            "frobenius": pt.frobenius(),
            "dipole_fit": fit.to_json(),
            "condition": dens.condition,
            "residuals": dens.residuals,
        }
    )
    write_json(_out_dir(cfg) / "pt.json", report)
    return EXIT_OK


def cmd_jacobian(cfg: RunConfig) -> int:
    """Finite-difference Jacobian at the configured point, next to the closed forms."""
    problem = design_problem(cfg)
    coeffs = cfg.get_float_list("shell_coeffs", 6)
    fd = jacobian_fd(problem, coeffs, check_noise=True)
    report = report_header("jacobian", cfg)
    report.update(
        {
            "mode": problem.mode,
            "r_i": problem.r_i,
            "r_e": problem.r_e,
            "jacobian_fd": fd,
            "determinant_fd": float(np.linalg.det(fd)),
        }
    )
    if problem.mode == "design_shell":
        for label, published in (("closed_form", False), ("published", True)):
            jac = analytic.origin_jacobian(problem.material, problem.r_i, problem.r_e, published)
            report[label] = {
                "matrix": jac.matrix,
                "determinant": jac.determinant,
                "display_determinant": jac.display_determinant,
                "formula_determinant": jac.formula_determinant,
            }
    else:
        report["swapped_prefactor"] = analytic.swapped_prefactor(problem.material, problem.r_e)
    write_json(_out_dir(cfg) / "jacobian.json", report)
    return EXIT_OK


def _design_outputs(cfg: RunConfig, problem: DesignProblem, result: DesignResult) -> None:
    out = _out_dir(cfg)
    report = report_header("design", cfg)
    report["result"] = result.to_json()
    write_json(out / "design.json", report)
    designed = result.shell if problem.mode == "design_shell" else result.core
    write_json(out / "surface.json", designed.to_json())
    ev = PtMap(problem).evaluate(result.coeffs)
    radii = [r * problem.r_e for r in _radii(cfg)]
    rows = far_field_profile(ev.system, ev.densities, radii)
    write_csv(out / "far_field.csv", FAR_FIELD_HEADER, rows)


def cmd_design(cfg: RunConfig) -> int:
    """Design run (with continuation when continuation_steps > 0); exit 3 on failure."""
    problem = design_problem(cfg)
    steps = cfg.get_int("continuation_steps")
    try:
        result = continuation(problem, steps) if steps > 0 else design(problem)
    except PtshellDesignError as e:
        logger.error(f"{type(e).__name__}: {e}")
        diag = report_header("design", cfg)
        diag["error"] = str(e)
        diag["best"] = e.best.to_json() if isinstance(e.best, DesignResult) else None
        diag["diagnostics"] = e.diagnostics
        write_json(_out_dir(cfg) / "diagnostics.json", diag)
        return EXIT_NO_CONVERGENCE
    _design_outputs(cfg, problem, result)
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    """Identity suite at the configured material; exit 1 if any check fails."""
    checks = identity_suite(
        cfg.material(),
        cfg.get_float("r_i"),
        cfg.grid(),
        polar_factor=cfg.get_int("polar_factor"),
        near_field=cfg.get_str("near_field"),
        tol=cfg.get_float("tol"),
        lambda_shift=cfg.get_float("verify.lambda_shift"),
        fd_step=cfg.get_float("fd_step"),
        seed=cfg.get_int("verify.seed"),
        include_solves=cfg.get_bool("verify.include_solves"),
    )
    report = suite_report(checks, report_header("verify", cfg))
    write_json(_out_dir(cfg) / "verify.json", report)
    for check in checks:
        status = "ok" if check.passed else "FAIL"
        print(f"{status:4} {check.name}: error {check.error:.3e} (tolerance {check.tolerance:.1e})")
    return EXIT_OK if report["passed"] else EXIT_VERIFY_FAILED


def cmd_sweep(cfg: RunConfig) -> int:
    """Design over rescaled amplitudes of the configured perturbation."""
    epsilons = cfg.get_float_list("sweep.epsilons")
    problem = design_problem(cfg)
    shape: Optional[RadialSurface] = None
    if cfg.get("sweep.shape") is not None:
        shape = cfg.surface("sweep.shape", problem.given.base_radius)
    rows = amplitude_sweep(problem, epsilons, shape)
    write_csv(_out_dir(cfg) / "sweep.csv", SWEEP_HEADER, [row.as_row() for row in rows])
    report = report_header("sweep", cfg)
    report["rows"] = [dict(zip(SWEEP_HEADER, row.as_row())) for row in rows]
    write_json(_out_dir(cfg) / "sweep.json", report)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunConfig], int]] = {
    "neutral": cmd_neutral,
    "pt": cmd_pt,
    "jacobian": cmd_jacobian,
    "design": cmd_design,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}
