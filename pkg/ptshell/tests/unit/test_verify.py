import json
from typing import List

import numpy as np
import pytest

from ptshell import verify
from ptshell.bie import MaterialParams
from ptshell.exceptions import PtshellInfeasibleError
from ptshell.sphharm import build_grid

MAT = MaterialParams(1.0, 2.0, 1.4)
COARSE_TOL = 1e-5

BASE_CHECKS = [
    "funk_hecke_constant",
    "funk_hecke_first_moment",
    "funk_hecke_second_moment",
    "moment_tool_pair",
    "moment_tool_triple",
    "integral_formula_first",
    "integral_formula_second",
    "integral_formula_third",
    "operator_action_A",
    "operator_action_B",
    "operator_action_C",
    "operator_action_D",
    "origin_block_action",
    "neutral_pt",
    "pairing_table_b",
    "pairing_table_cd",
    "constants_c",
    "pairing_table_g",
    "pairing_table_af",
    "published_pairing_table_b",
    "published_b_erratum",
    "published_lists_transcription",
    "oracle_chain",
    "oracle_chain_quadrature",
    "v2_adjoint",
    "determinant_formula",
    "published_determinant",
    "swapped_prefactor",
    "euler_identity",
    "taylor_identity",
]
SOLVE_CHECKS = [
    "origin_jacobian_fd",
    "origin_jacobian_zero_pattern",
    "origin_jacobian_determinant_sign",
] + [f"concentric_oracle_{k}" for k in range(1, 6)]


@pytest.fixture(scope="module")
def checks() -> List[verify.IdentityCheck]:
    return verify.identity_suite(MAT, 1.0, build_grid(12), tol=COARSE_TOL, include_solves=False)


class TestIdentityCheck:
    @pytest.mark.parametrize(
        ("error", "tolerance", "informational", "passed"),
        [
            (1e-9, 1e-8, False, True),
            (1e-8, 1e-8, False, True),
            (1e-7, 1e-8, False, False),
            (1e-7, 1e-8, True, True),
            (float("nan"), 1e-8, False, False),
        ],
    )
    def test_passed(
        self, error: float, tolerance: float, informational: bool, passed: bool
    ) -> None:
        check = verify.IdentityCheck("x", 1.0, 1.0, error, tolerance, informational)
        assert check.passed is passed

    def test_check_summarizes_fields(self) -> None:
        computed = np.full(100, 2.0)
        computed[3] = -5.0
        check = verify._check("field", computed, np.zeros(100), 10.0)
        assert check.error == 5.0
        assert check.computed == 5.0
        assert check.expected == 0.0
        assert check.passed

    def test_check_keeps_small_arrays(self) -> None:
        check = verify._check("small", np.eye(3), np.zeros((3, 3)), 0.5)
        assert check.error == 1.0
        assert not check.passed
        doc = check.to_json()
        assert doc["computed"] == np.eye(3).tolist()
        assert doc["passed"] is False
        json.dumps(doc)


class TestIdentitySuite:
    def test_order(self, checks: List[verify.IdentityCheck]) -> None:
        assert [c.name for c in checks] == BASE_CHECKS

    def test_all_pass(self, checks: List[verify.IdentityCheck]) -> None:
        failed = [(c.name, c.error, c.tolerance) for c in checks if not c.passed]
        assert failed == []

    def test_informational(self, checks: List[verify.IdentityCheck]) -> None:
        informational = {c.name for c in checks if c.informational}
        assert informational == {
            "published_pairing_table_b",
            "published_determinant",
            "swapped_prefactor",
        }
        by_name = {c.name: c for c in checks}
        # the tabulated shell pairing is off by (16 pi / 45 r_e) G
        assert by_name["published_pairing_table_b"].error > 0.1

    def test_lambda_shift_is_caught(self) -> None:
        shifted = verify.identity_suite(
            MAT, 1.0, build_grid(8), tol=COARSE_TOL, lambda_shift=0.1, include_solves=False
        )
        failed = {c.name for c in shifted if not c.passed}
        assert {"origin_block_action", "neutral_pt"} <= failed
        assert "operator_action_A" not in failed

    def test_infeasible(self) -> None:
        with pytest.raises(PtshellInfeasibleError):
            verify.identity_suite(MaterialParams(2.0, 1.0, 3.0), 1.0, build_grid(8))

    @pytest.mark.slow
    def test_with_solves(self) -> None:
        full = verify.identity_suite(MAT, 1.0, build_grid(12), tol=COARSE_TOL, seed=3)
        assert [c.name for c in full] == BASE_CHECKS + SOLVE_CHECKS
        failed = [(c.name, c.error, c.tolerance) for c in full if not c.passed]
        assert failed == []


def test_suite_report(checks: List[verify.IdentityCheck]) -> None:
    report = verify.suite_report(checks, {"command": "verify"})
    assert report["command"] == "verify"
    assert report["passed"] is True
    assert report["count"] == len(BASE_CHECKS)
    assert report["failed"] == []
    assert [c["name"] for c in report["checks"]] == BASE_CHECKS
    json.dumps(report)


def test_suite_report_failure() -> None:
    bad = verify.IdentityCheck("bad", 1.0, 0.0, 1.0, 0.1)
    good = verify.IdentityCheck("good", 0.0, 0.0, 0.0, 0.1)
    report = verify.suite_report([good, bad])
    assert report["passed"] is False
    assert report["failed"] == ["bad"]
