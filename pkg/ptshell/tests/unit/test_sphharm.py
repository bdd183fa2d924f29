import json
import math
from typing import Any, Dict, List

import numpy as np
import pytest

from ptshell import sphharm
from ptshell.exceptions import PtshellGeometryError, PtshellValueError
from ptshell.sphharm import FloatArray
from ptshell.tests import get_fixture_path

SQRT3 = math.sqrt(3.0)


def _unit_points(count: int, seed: int = 3) -> FloatArray:
    pts = np.random.default_rng(seed).standard_normal((count, 3))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _embedding(surf: sphharm.RadialSurface, theta: Any, phi: Any) -> FloatArray:
    theta, phi = np.broadcast_arrays(np.asarray(theta), np.asarray(phi))
    pts = np.stack(
        [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1
    )
    result: FloatArray = surf.positions(pts.reshape(-1, 3)).reshape(pts.shape)
    return result


def _mesh_area(surf: sphharm.RadialSurface, n_theta: int, n_phi: int) -> float:
    theta, phi = np.meshgrid(
        np.linspace(0.0, math.pi, n_theta + 1),
        np.linspace(0.0, 2.0 * math.pi, n_phi + 1),
        indexing="ij",
    )
    x = _embedding(surf, theta, phi)
    a, b, c, d = x[:-1, :-1], x[1:, :-1], x[1:, 1:], x[:-1, 1:]
    lower = np.linalg.norm(np.cross(b - a, c - a), axis=-1)
    upper = np.linalg.norm(np.cross(c - a, d - a), axis=-1)
    return 0.5 * float(np.sum(lower + upper))


@pytest.mark.parametrize(
    ("degree", "order", "index"),
    [
        (0, 0, 0),
        (1, -1, 1),
        (1, 1, 3),
        (2, -2, 4),
        (2, 2, 8),
        (5, 0, 30),
    ],
)
def test_sh_index(degree: int, order: int, index: int) -> None:
    assert sphharm.sh_index(degree, order) == index
    ls, ms = sphharm.degree_order(degree)
    assert (ls[index], ms[index]) == (degree, order)


def test_sh_index_bad_order() -> None:
    with pytest.raises(PtshellValueError, match="out of range"):
        sphharm.sh_index(1, 2)


@pytest.mark.parametrize(
    ("size", "degree"),
    [
        (1, 0),
        (9, 2),
        (49, 6),
    ],
)
def test_degree_of(size: int, degree: int) -> None:
    assert sphharm.degree_of(size) == degree
    assert sphharm.n_coeffs(degree) == size


@pytest.mark.parametrize("size", [0, 2, 8, 10])
def test_degree_of_fail(size: int) -> None:
    with pytest.raises(PtshellValueError, match="coefficient count"):
        sphharm.degree_of(size)


class TestGrid:
    def test_build_grid(self) -> None:
        g = sphharm.build_grid(8)
        assert g.n_theta == 8
        assert g.n_phi == 16
        assert g.size == 128
        assert g.degree == 7
        assert g.describe() == {"n_theta": 8, "n_phi": 16, "nodes": 128}
        np.testing.assert_allclose(np.linalg.norm(g.nodes, axis=1), 1.0, atol=1e-15)
        assert g.integrate(np.ones(g.size)) == pytest.approx(4 * math.pi, rel=1e-14)
        # north first
        assert np.all(np.diff(np.cos(g.theta)) < 0)

    def test_build_grid_cached(self) -> None:
        assert sphharm.build_grid(6) is sphharm.build_grid(6)

    @pytest.mark.parametrize("n_theta", [0, 3, 4.5])
    def test_build_grid_fail(self, n_theta: Any) -> None:
        with pytest.raises(PtshellValueError, match="n_theta"):
            sphharm.build_grid(n_theta)

    def test_basis_orthonormal(self) -> None:
        g = sphharm.build_grid(8)
        basis = sphharm.grid_basis(g)
        gram = basis.T @ (g.weights[:, None] * basis)
        np.testing.assert_allclose(gram, np.eye(sphharm.n_coeffs(7)), atol=1e-12)

    def test_analysis_inverts_basis(self) -> None:
        g = sphharm.build_grid(8)
        coeffs = np.random.default_rng(0).standard_normal(sphharm.n_coeffs(7))
        values = sphharm.grid_basis(g) @ coeffs
        np.testing.assert_allclose(sphharm.grid_analysis(g) @ values, coeffs, atol=1e-12)

    def test_project_mean_zero(self) -> None:
        g = sphharm.build_grid(6)
        values = 3.0 + g.nodes[:, 2] ** 2
        projected = g.project_mean_zero(np.stack([values, 2 * values]))
        np.testing.assert_allclose(g.integrate(projected), 0.0, atol=1e-13)
        np.testing.assert_allclose(projected[1], 2 * projected[0], atol=1e-14)


class TestW6:
    @pytest.mark.parametrize(
        ("j", "x", "expected"),
        [
            (1, (0.0, 0.0, 1.0), 1 / math.sqrt(15.0)),
            (4, (0.0, 0.0, 1.0), 1 / SQRT3),
            (4, (1.0, 0.0, 0.0), -1 / (2 * SQRT3)),
            (6, (1.0, 0.0, 0.0), 0.5),
            (6, (0.0, 1.0, 0.0), -0.5),
            (2, (1 / math.sqrt(2.0), 1 / math.sqrt(2.0), 0.0), 0.5),
            (3, (0.0, 0.0, 1.0), 0.0),
            (5, (1 / math.sqrt(2.0), 0.0, -1 / math.sqrt(2.0)), -0.5),
        ],
    )
    def test_eval_w6(self, j: int, x: List[float], expected: float) -> None:
        assert sphharm.eval_w6(j, x) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize(
        ("j", "x", "msg"),
        [
            (0, (0.0, 0.0, 1.0), "W6 index"),
            (7, (0.0, 0.0, 1.0), "W6 index"),
            (2, (0.0, 0.0, 2.0), "unit vectors"),
            (2, (1.0, 0.0), "unit vectors"),
        ],
    )
    def test_eval_w6_fail(self, j: int, x: List[float], msg: str) -> None:
        with pytest.raises(PtshellValueError, match=msg):
            sphharm.eval_w6(j, x)

    def test_w6_matches_harmonics(self) -> None:
        pts = _unit_points(40)
        b = np.array([0.3, -1.0, 0.5, 2.0, -0.25, 0.75])
        surf = sphharm.RadialSurface.from_w6(1.0, b)
        np.testing.assert_allclose(
            surf.perturbation(pts), sphharm.w6_values(pts) @ b, atol=1e-13
        )
        np.testing.assert_allclose(surf.w6_part(), b, atol=1e-14)

    def test_w6_tangential_gradients(self) -> None:
        pts = _unit_points(30)
        grads = sphharm.w6_tangential_gradients(pts)
        np.testing.assert_allclose(np.einsum("pji,pi->pj", grads, pts), 0.0, atol=1e-14)
        for j in range(sphharm.W6_SIZE):
            e = np.zeros(sphharm.W6_SIZE)
            e[j] = 1.0
            surf = sphharm.RadialSurface.from_w6(1.0, e)
            np.testing.assert_allclose(surf.tangential_gradient(pts), grads[:, j], atol=1e-13)

    def test_w6_to_sh_fail(self) -> None:
        with pytest.raises(PtshellValueError, match="6 entries"):
            sphharm.w6_to_sh([1.0, 2.0])

    def test_sh_to_w6_drops_other_degrees(self) -> None:
        coeffs = sphharm.w6_to_sh([1.0, 0.0, 0.0, 0.0, 0.0, 2.0], degree=3)
        coeffs[sphharm.sh_index(1, 0)] = 5.0
        coeffs[sphharm.sh_index(3, -3)] = 7.0
        np.testing.assert_allclose(sphharm.sh_to_w6(coeffs), [1.0, 0.0, 0.0, 0.0, 0.0, 2.0])


class TestRadialSurface:
    def test_sphere(self) -> None:
        s = sphharm.RadialSurface.sphere(2.0)
        assert s.is_sphere
        assert s.degree == 0
        assert s.norm_estimate() == 0.0
        assert s.terms() == []
        np.testing.assert_allclose(s.radius(_unit_points(5)), 2.0)

    @pytest.mark.parametrize(
        ("base_radius", "coeffs", "msg"),
        [
            (0.0, [0.0], "Base radius"),
            (-1.0, [0.0], "Base radius"),
            (math.inf, [0.0], "Base radius"),
            (1.0, [0.0, 1.0], "coefficient count"),
            (1.0, [0.0, 0.0, math.nan, 0.0], "finite"),
        ],
    )
    def test_init_fail(self, base_radius: float, coeffs: List[float], msg: str) -> None:
        with pytest.raises(PtshellValueError, match=msg):
            sphharm.RadialSurface(base_radius, np.array(coeffs))

    def test_coeffs_read_only(self) -> None:
        s = sphharm.RadialSurface.from_terms(1.0, [(2, 0, 0.1)])
        with pytest.raises(ValueError):
            s.coeffs[0] = 1.0

    def test_from_terms_sums_repeats(self) -> None:
        s = sphharm.RadialSurface.from_terms(1.0, [(2, 1, 0.1), (2, 1, 0.2), (0, 0, 0.05)])
        assert s.degree == 2
        assert s.terms() == [(0, 0, 0.05), (2, 1, pytest.approx(0.3))]

    def test_from_terms_negative_degree(self) -> None:
        with pytest.raises(PtshellValueError):
            sphharm.RadialSurface.from_terms(1.0, [(-1, 0, 0.1)])

    def test_json(self) -> None:
        with get_fixture_path("surface", "core.json").open() as f:
            doc = json.load(f)
        s = sphharm.RadialSurface.from_json(doc)
        assert s.base_radius == 1.0
        assert s.degree == 3
        assert s.to_json() == doc

    @pytest.mark.parametrize(
        "doc",
        [
            {"coeffs": []},
            {"base_radius": 1.0, "coeffs": [{"l": 2, "m": 0}]},
            {"base_radius": 1.0, "coeffs": [{"l": "two", "m": 0, "value": 1.0}]},
            {"base_radius": 1.0, "coeffs": 3},
        ],
    )
    def test_from_json_fail(self, doc: Dict[str, Any]) -> None:
        with pytest.raises(PtshellValueError, match="Malformed surface document"):
            sphharm.RadialSurface.from_json(doc)

    def test_random_is_seeded(self) -> None:
        a = sphharm.RadialSurface.random(1.0, 4, 0.02, seed=11)
        b = sphharm.RadialSurface.random(1.0, 4, 0.02, seed=11)
        c = sphharm.RadialSurface.random(1.0, 4, 0.02, seed=12)
        np.testing.assert_array_equal(a.coeffs, b.coeffs)
        assert not np.array_equal(a.coeffs, c.coeffs)
        assert a.norm_estimate() == pytest.approx(0.02, rel=1e-12)

    def test_random_bad_degree(self) -> None:
        with pytest.raises(PtshellValueError, match="max_degree"):
            sphharm.RadialSurface.random(1.0, -1, 0.02, seed=0)

    def test_scaled_to(self) -> None:
        s = sphharm.RadialSurface.random(1.5, 3, 0.1, seed=2)
        assert s.scaled_to(0.01).norm_estimate() == pytest.approx(0.01, rel=1e-12)
        assert s.scaled(0.5).norm_estimate() == pytest.approx(0.05, rel=1e-12)
        sphere = sphharm.RadialSurface.sphere(1.0)
        assert sphere.scaled_to(0.0) is sphere
        with pytest.raises(PtshellValueError, match="zero perturbation"):
            sphere.scaled_to(0.01)

    def test_norm_estimate_single_harmonic(self) -> None:
        # |p|, |grad_T p| and |lap p| peak at 1/2, 1 and 3 on the equator, between grid rings
        s = sphharm.RadialSurface.from_w6(1.0, [0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
        assert s.norm_estimate() == pytest.approx(4.5, rel=2e-2)

    def test_rotated_z(self) -> None:
        s = sphharm.RadialSurface.random(1.0, 3, 0.05, seed=1)
        alpha = 0.7
        rot = np.array(
            [
                [math.cos(alpha), -math.sin(alpha), 0.0],
                [math.sin(alpha), math.cos(alpha), 0.0],
                [0.0, 0.0, 1.0],
            ]
        )
        pts = _unit_points(25)
        np.testing.assert_allclose(
            s.rotated_z(alpha).radius(pts @ rot.T), s.radius(pts), atol=1e-14
        )

    def test_laplacian(self) -> None:
        s = sphharm.RadialSurface.from_terms(1.0, [(3, 1, 0.5), (1, -1, 0.2)])
        pts = _unit_points(10)
        expected = -12 * 0.5 * sphharm.sh_basis(3, pts)[:, sphharm.sh_index(3, 1)] - 2 * 0.2 * (
            sphharm.sh_basis(1, pts)[:, sphharm.sh_index(1, -1)]
        )
        np.testing.assert_allclose(s.laplacian(pts), expected, atol=1e-13)

    def test_padded(self) -> None:
        s = sphharm.RadialSurface.from_terms(1.0, [(2, 2, 0.5)])
        assert s.padded(3).shape == (16,)
        assert s.padded(3)[8] == 0.5
        np.testing.assert_array_equal(s.padded(1), np.zeros(4))

    def test_key(self) -> None:
        a = sphharm.RadialSurface.from_terms(1.0, [(2, 2, 0.5)])
        b = sphharm.RadialSurface.from_terms(1.0, [(2, 2, 0.5)])
        assert a.key() == b.key()
        assert a.key() != a.with_base_radius(2.0).key()


class TestSurfaceFrame:
    def test_sphere(self) -> None:
        g = sphharm.build_grid(6)
        frame = sphharm.surface_frame(sphharm.RadialSurface.sphere(2.0), g)
        np.testing.assert_allclose(frame.positions, 2.0 * g.nodes)
        np.testing.assert_allclose(frame.jnormal, 4.0 * g.nodes)
        np.testing.assert_allclose(frame.jacobian, 4.0)
        np.testing.assert_allclose(frame.normals, g.nodes, atol=1e-15)

    def test_perturbed(self) -> None:
        g = sphharm.build_grid(10)
        surf = sphharm.RadialSurface.from_w6(1.0, [0.0, 0.05, 0.0, 0.02, 0.0, 0.0])
        frame = sphharm.surface_frame(surf, g)
        np.testing.assert_allclose(np.linalg.norm(frame.normals, axis=1), 1.0, atol=1e-14)
        np.testing.assert_allclose(np.linalg.norm(frame.jnormal, axis=1), frame.jacobian)
        # normals are orthogonal to the tangent along phi
        e_phi = np.stack([-g.nodes[:, 1], g.nodes[:, 0], np.zeros(g.size)], axis=1)
        tangent = frame.radius[:, None] * e_phi + np.einsum(
            "pk,pk->p", frame.grad_t, e_phi
        )[:, None] * g.nodes
        np.testing.assert_allclose(np.einsum("pk,pk->p", tangent, frame.normals), 0.0, atol=1e-14)
        # surface area by quadrature: the sphere area plus a positive excess
        assert g.integrate(frame.jacobian) > 4 * math.pi

    def test_jacobian_matches_embedding(self) -> None:
        g = sphharm.build_grid(10)
        surf = sphharm.RadialSurface.from_terms(1.0, [(2, 0, 0.05), (2, -1, 0.02), (3, 1, 0.03)])
        frame = sphharm.surface_frame(surf, g)
        theta = np.arccos(np.clip(g.nodes[:, 2], -1.0, 1.0))
        phi = np.arctan2(g.nodes[:, 1], g.nodes[:, 0])
        h = 1e-5
        d_theta = (_embedding(surf, theta + h, phi) - _embedding(surf, theta - h, phi)) / (2 * h)
        d_phi = (_embedding(surf, theta, phi + h) - _embedding(surf, theta, phi - h)) / (2 * h)
        cross = np.cross(d_theta, d_phi)
        # dX/dtheta x dX/dphi = J sin(theta) n
        np.testing.assert_allclose(cross, frame.jnormal * np.sin(theta)[:, None], atol=1e-6)
        np.testing.assert_allclose(
            np.linalg.norm(cross, axis=1), frame.jacobian * np.sin(theta), atol=1e-6
        )

    def test_area_matches_mesh(self) -> None:
        g = sphharm.build_grid(10)
        surf = sphharm.RadialSurface.from_terms(1.0, [(2, 0, 0.05), (2, -1, 0.02), (3, 1, 0.03)])
        area = g.integrate(sphharm.surface_frame(surf, g).jacobian)
        assert area == pytest.approx(_mesh_area(surf, 400, 800), rel=1e-4)
        assert area > 4 * math.pi

    def test_not_star_shaped(self) -> None:
        surf = sphharm.RadialSurface.from_terms(0.1, [(0, 0, -1.0)])
        with pytest.raises(PtshellGeometryError, match="not star-shaped"):
            sphharm.surface_frame(surf, sphharm.build_grid(4))


class TestPolarRule:
    def test_weights(self) -> None:
        rule = sphharm.polar_rule(16, 8)
        assert rule.size == 128
        assert float(np.sum(rule.weights)) == pytest.approx(4 * math.pi, rel=1e-13)

    def test_singular_integral(self) -> None:
        rule = sphharm.polar_rule(16, 8)
        north = np.array([0.0, 0.0, 1.0])
        values = 1.0 / np.linalg.norm(north - rule.local_points, axis=1)
        assert float(values @ rule.weights) == pytest.approx(4 * math.pi, rel=1e-12)

    def test_points_around(self) -> None:
        targets = _unit_points(6)
        rot = sphharm.rotation_to(targets)
        np.testing.assert_allclose(rot @ np.array([0.0, 0.0, 1.0]), targets, atol=1e-14)
        np.testing.assert_allclose(
            np.einsum("tij,tkj->tik", rot, rot), np.broadcast_to(np.eye(3), rot.shape), atol=1e-14
        )
        rule = sphharm.polar_rule(4, 4)
        around = rule.points_around(targets)
        assert around.shape == (6, 16, 3)
        # angular distance to the target is the rule's polar angle
        np.testing.assert_allclose(
            np.einsum("tmi,ti->tm", around, targets),
            np.broadcast_to(rule.local_points[:, 2], (6, 16)),
            atol=1e-14,
        )

    @pytest.mark.parametrize(("n_polar", "n_azimuth"), [(0, 4), (4, 0)])
    def test_polar_rule_fail(self, n_polar: int, n_azimuth: int) -> None:
        with pytest.raises(PtshellValueError, match="Invalid polar rule"):
            sphharm.polar_rule(n_polar, n_azimuth)

    def test_grid_polar_rule(self) -> None:
        g = sphharm.build_grid(6)
        rule = sphharm.grid_polar_rule(g, 3)
        assert (rule.n_polar, rule.n_azimuth) == (18, 12)
        with pytest.raises(PtshellValueError, match="polar_factor"):
            sphharm.grid_polar_rule(g, 0)


def test_sh_basis_gradient_pole() -> None:
    with pytest.raises(PtshellValueError, match="polar axis"):
        sphharm.sh_basis_gradient(2, [[0.0, 0.0, 1.0]])


def test_sh_basis_zero_vector() -> None:
    with pytest.raises(PtshellValueError, match="Zero vector"):
        sphharm.sh_basis(2, [[0.0, 0.0, 0.0]])
