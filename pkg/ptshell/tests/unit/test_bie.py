import logging
import math
from typing import List

import numpy as np
import pytest

from ptshell import analytic, bie
from ptshell.exceptions import (
    PtshellGeometryError,
    PtshellInfeasibleError,
    PtshellSolveError,
    PtshellValueError,
)
from ptshell.kernels import BlockAssembler
from ptshell.sphharm import RadialSurface, SphericalGrid, build_grid

MAT = bie.MaterialParams(1.0, 2.0, 1.4)


@pytest.fixture
def grid() -> SphericalGrid:
    return build_grid(12)


@pytest.fixture
def concentric(grid: SphericalGrid) -> bie.BlockSystem:
    return bie.assemble(RadialSurface.sphere(1.0), RadialSurface.sphere(1.5), MAT, grid)


class TestMaterialParams:
    def test_properties(self) -> None:
        assert MAT.lam == pytest.approx(-1.5)
        assert MAT.mu == pytest.approx(3.4 / 1.2)
        assert MAT.neutral_ratio == pytest.approx(3.0 / 5.4)
        assert MAT.feasible
        assert MAT.rho == pytest.approx((3.0 / 5.4) ** (1 / 3))
        assert MAT.as_list() == [1.0, 2.0, 1.4]

    @pytest.mark.parametrize(
        "sigma",
        [
            [0.0, 1.0, 1.0],
            [1.0, -2.0, 1.0],
            [1.0, 1.0, math.nan],
            [1.0, math.inf, 1.0],
        ],
    )
    def test_init_fail(self, sigma: List[float]) -> None:
        with pytest.raises(PtshellValueError, match="must be positive"):
            bie.MaterialParams(*sigma)

    def test_lam_undefined(self) -> None:
        mat = bie.MaterialParams(2.0, 2.0, 1.0)
        with pytest.raises(PtshellValueError, match="lambda is undefined"):
            mat.lam
        assert not mat.feasible

    def test_mu_undefined(self) -> None:
        with pytest.raises(PtshellValueError, match="mu is undefined"):
            bie.MaterialParams(1.0, 2.0, 2.0).mu

    @pytest.mark.parametrize(
        "sigma",
        [
            [2.0, 1.0, 3.0],
            [1.0, 2.0, 3.0],
            [3.0, 2.0, 1.0],
        ],
    )
    def test_infeasible(self, sigma: List[float]) -> None:
        mat = bie.MaterialParams(*sigma)
        assert not mat.feasible
        with pytest.raises(PtshellInfeasibleError, match="No neutral coated sphere"):
            mat.rho
        with pytest.raises(PtshellInfeasibleError):
            bie.neutral_outer_radius(1.0, mat)


class TestNeutralRadii:
    def test_outer(self) -> None:
        r_e = bie.neutral_outer_radius(1.0, MAT)
        assert r_e == pytest.approx(1.216440, abs=1e-6)
        assert bie.neutral_inner_radius(r_e, MAT) == pytest.approx(1.0, rel=1e-14)

    @pytest.mark.parametrize(
        "sigma",
        [
            [1.0, 2.0, 1.4],
            [1.0, 4.0, 3.0],
            [10.0, 0.5, 0.8],
        ],
    )
    def test_relation(self, sigma: List[float]) -> None:
        mat = bie.MaterialParams(*sigma)
        r_e = bie.neutral_outer_radius(2.0, mat)
        rho3 = (2.0 / r_e) ** 3
        assert mat.lam == pytest.approx(1.0 / 6.0 - rho3 * (mat.mu + 1.0 / 6.0), rel=1e-12)
        assert analytic.concentric_pt(2.0, r_e, mat).frobenius() < 1e-12 * r_e**3

    @pytest.mark.parametrize("radius", [0.0, -1.0])
    def test_bad_radius(self, radius: float) -> None:
        with pytest.raises(PtshellValueError, match="radius must be positive"):
            bie.neutral_outer_radius(radius, MAT)
        with pytest.raises(PtshellValueError, match="radius must be positive"):
            bie.neutral_inner_radius(radius, MAT)


class TestCheckGeometry:
    def test_ok(self) -> None:
        core = RadialSurface.random(1.0, 3, 0.01, seed=0)
        bie.check_geometry(core, RadialSurface.sphere(1.2))

    def test_not_nested(self) -> None:
        with pytest.raises(PtshellGeometryError, match="must be below"):
            bie.check_geometry(RadialSurface.sphere(1.0), RadialSurface.sphere(0.9))

    def test_crossing(self) -> None:
        core = RadialSurface.from_terms(1.0, [(2, 0, 0.2)])
        with pytest.raises(PtshellGeometryError, match="touch or cross"):
            bie.check_geometry(core, RadialSurface.sphere(1.1), budget=None)

    def test_budget(self) -> None:
        core = RadialSurface.random(1.0, 2, 0.05, seed=0)
        shell = RadialSurface.sphere(1.1)
        with pytest.raises(PtshellGeometryError, match="exceeds budget"):
            bie.check_geometry(core, shell)
        bie.check_geometry(core, shell, budget=None)


class TestBlockSystem:
    def test_blocks(self, concentric: bie.BlockSystem) -> None:
        n = concentric.size
        assert concentric.matrix.shape == (2 * n, 2 * n)
        assert concentric.lam == MAT.lam
        assert concentric.mu == MAT.mu
        assert concentric.block("C").shape == (n, n)
        np.testing.assert_array_equal(concentric.block("D"), concentric.matrix[n:, :n])
        with pytest.raises(PtshellValueError, match="Unknown block 'E'"):
            concentric.block("E")

    def test_origin_action(self, concentric: bie.BlockSystem) -> None:
        # span{(a x_l, b x_l)} is invariant; the 2x2 action is the origin operator at rho.
        rho = 1.0 / 1.5
        want = analytic.origin_operator(MAT, rho)
        x_1 = concentric.grid.nodes[:, 0]
        for col, (a, b) in enumerate(((1.0, 0.0), (0.0, 1.0))):
            core_out, shell_out = concentric.apply(a * x_1, b * x_1)
            np.testing.assert_allclose(core_out, want[0, col] * x_1, atol=1e-8)
            np.testing.assert_allclose(shell_out, want[1, col] * x_1, atol=1e-8)

    def test_rhs_mean_zero(self, grid: SphericalGrid) -> None:
        core = RadialSurface.from_terms(1.0, [(0, 0, 0.02), (2, 1, 0.005)])
        shell = RadialSurface.from_w6(1.5, [0.01, 0.0, 0.005, 0.0, 0.0, 0.0])
        system = bie.assemble(core, shell, MAT, grid)
        g = system.rhs()
        n = system.size
        assert g.shape == (2 * n, 3)
        np.testing.assert_allclose(grid.integrate(g[:n].T), 0.0, atol=1e-13)
        np.testing.assert_allclose(grid.integrate(g[n:].T), 0.0, atol=1e-13)

    def test_shifted(self, concentric: bie.BlockSystem) -> None:
        shifted = concentric.shifted(0.25)
        n = concentric.size
        assert shifted.lam == MAT.lam + 0.25
        assert shifted.mu == concentric.mu
        np.testing.assert_allclose(
            np.diag(shifted.matrix)[:n], np.diag(concentric.matrix)[:n] - 0.25
        )
        np.testing.assert_array_equal(shifted.matrix[n:], concentric.matrix[n:])
        np.testing.assert_array_equal(shifted.matrix[:n, n:], concentric.matrix[:n, n:])

    def test_assemble_grid_mismatch(self, grid: SphericalGrid) -> None:
        with pytest.raises(PtshellValueError, match="Assembler grid"):
            bie.assemble(
                RadialSurface.sphere(1.0),
                RadialSurface.sphere(1.5),
                MAT,
                grid,
                assembler=BlockAssembler(build_grid(6)),
            )

    def test_assemble_crossing(self, grid: SphericalGrid) -> None:
        with pytest.raises(PtshellGeometryError):
            bie.assemble(RadialSurface.sphere(1.0), RadialSurface.sphere(0.5), MAT, grid)


class TestSolve:
    def test_solve(self, concentric: bie.BlockSystem) -> None:
        dens = bie.solve_densities(concentric)
        n = concentric.size
        assert dens.core.shape == (3, n)
        assert dens.shell.shape == (3, n)
        assert np.all(dens.residuals < 1e-12)
        assert 1.0 < dens.condition < 1e6
        np.testing.assert_allclose(concentric.grid.integrate(dens.core), 0.0, atol=1e-12)

    def test_singular(self, concentric: bie.BlockSystem) -> None:
        n = concentric.size
        broken = bie.BlockSystem(
            np.zeros((2 * n, 2 * n)), MAT, concentric.core, concentric.shell, MAT.lam, MAT.mu
        )
        with pytest.raises(PtshellSolveError, match="LU factorization failed|singular"):
            bie.solve_densities(broken)

    def test_ill_conditioned_warns(
        self, concentric: bie.BlockSystem, caplog: pytest.LogCaptureFixture
    ) -> None:
        n = concentric.size
        matrix = np.eye(2 * n)
        matrix[0, 0] = 1e-13
        system = bie.BlockSystem(matrix, MAT, concentric.core, concentric.shell, MAT.lam, MAT.mu)
        with caplog.at_level(logging.WARNING, logger="ptshell.bie"):
            dens = bie.solve_densities(system)
        assert dens.condition > bie.CONDITION_WARNING
        assert "condition estimate" in caplog.text


class TestPolarizationTensor:
    def test_flatten_order(self) -> None:
        pt = bie.PolarizationTensor.from_flat([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        np.testing.assert_array_equal(pt.m, [[1.0, 4.0, 5.0], [4.0, 2.0, 6.0], [5.0, 6.0, 3.0]])
        np.testing.assert_array_equal(pt.flatten(), [1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        assert pt.frobenius() == pytest.approx(math.sqrt(14.0 + 2.0 * 77.0))

    def test_to_json(self) -> None:
        pt = bie.PolarizationTensor(np.eye(3), 1e-12, {"n_theta": 4})
        doc = pt.to_json()
        assert doc["flatten"] == [1.0, 1.0, 1.0, 0.0, 0.0, 0.0]
        assert doc["asymmetry"] == 1e-12
        assert doc["grid"] == {"n_theta": 4}

    @pytest.mark.parametrize(
        ("r_i", "r_e", "sigma"),
        [
            (1.0, 1.5, [1.0, 2.0, 1.4]),
            (0.6, 1.0, [5.0, 0.5, 1.0]),
            (1.0, 2.0, [0.2, 3.0, 1.0]),
        ],
    )
    def test_concentric_oracle(
        self, grid: SphericalGrid, r_i: float, r_e: float, sigma: List[float]
    ) -> None:
        mat = bie.MaterialParams(*sigma)
        pt = bie.compute_pt(RadialSurface.sphere(r_i), RadialSurface.sphere(r_e), mat, grid)
        want = analytic.concentric_pt(r_i, r_e, mat)
        np.testing.assert_allclose(pt.m, want.m, atol=1e-8 * want.frobenius())
        assert pt.asymmetry < 1e-10 * want.frobenius()

    def test_neutral_concentric(self) -> None:
        grid = build_grid(16)
        r_e = bie.neutral_outer_radius(1.0, MAT)
        pt = bie.compute_pt(RadialSurface.sphere(1.0), RadialSurface.sphere(r_e), MAT, grid)
        assert pt.frobenius() <= 1e-7 * r_e**3

    def test_rotation_equivariance(self, grid: SphericalGrid) -> None:
        # pi/2 is a multiple of the azimuthal grid step, so the discretization is equivariant.
        core = RadialSurface.from_terms(1.0, [(2, -2, 0.004), (2, 1, 0.003), (3, 1, 0.002)])
        shell = RadialSurface.sphere(1.5)
        pt = bie.compute_pt(core, shell, MAT, grid)
        turned = bie.compute_pt(core.rotated_z(math.pi / 2), shell, MAT, grid)
        rot = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        np.testing.assert_allclose(turned.m, rot @ pt.m @ rot.T, atol=1e-10 * pt.frobenius())

    def test_perturbed_pt_symmetric(self, grid: SphericalGrid) -> None:
        core = RadialSurface.random(1.0, 3, 0.01, seed=4)
        shell = RadialSurface.random(1.5, 2, 0.01, seed=5)
        pt = bie.compute_pt(core, shell, MAT, grid)
        assert pt.asymmetry < 1e-6 * pt.frobenius()

    @pytest.mark.slow
    def test_grid_convergence(self) -> None:
        core = RadialSurface.random(1.0, 4, 0.05, seed=6)
        shell = RadialSurface.random(1.5, 3, 0.04, seed=7)
        pts = {n: bie.compute_pt(core, shell, MAT, build_grid(n)).m for n in (8, 12, 16, 24)}
        errors = [float(np.linalg.norm(pts[n] - pts[24])) for n in (8, 12, 16)]
        assert errors[1] < errors[0]
        assert errors[2] < errors[1]
        assert errors[2] <= errors[0] / 4.0
        assert errors[2] <= 1e-4 * float(np.linalg.norm(pts[24]))


class TestFarField:
    def test_far_field_dipole(self, concentric: bie.BlockSystem) -> None:
        dens = bie.solve_densities(concentric)
        pt = bie.polarization_tensor(concentric, dens)
        x = np.array([6.0, -3.0, 4.0])
        r = float(np.linalg.norm(x))
        for ell in range(3):
            a = np.eye(3)[ell]
            want = -float(pt.m[ell] @ x) / (4 * math.pi * r**3)
            assert bie.far_field(concentric, dens, a, x) == pytest.approx(want, rel=1e-7)

    def test_far_field_too_close(self, concentric: bie.BlockSystem) -> None:
        dens = bie.solve_densities(concentric)
        with pytest.raises(PtshellValueError, match="Far-field points"):
            bie.far_field(concentric, dens, [1.0, 0.0, 0.0], [2.0, 0.0, 0.0])

    def test_fit_dipole(self, concentric: bie.BlockSystem) -> None:
        dens = bie.solve_densities(concentric)
        pt = bie.polarization_tensor(concentric, dens)
        fit = bie.fit_dipole(concentric, dens, 20.0)
        np.testing.assert_allclose(fit.m, pt.m, atol=1e-7 * pt.frobenius())

    def test_profile_and_slope(self, concentric: bie.BlockSystem) -> None:
        dens = bie.solve_densities(concentric)
        rows = bie.far_field_profile(concentric, dens, [10.0, 20.0])
        assert [row[0] for row in rows] == [10.0, 20.0]
        for mag_10, mag_20 in zip(rows[0][1:], rows[1][1:]):
            assert mag_10 / mag_20 == pytest.approx(4.0, rel=1e-6)
        assert bie.far_field_slope(concentric, dens, count=4) == pytest.approx(-2.0, abs=1e-6)
