import itertools

import numpy as np
import pytest

from shell_obstacle_lab.elasticity import FieldJet2D, LameParameters, kl_test_field
from shell_obstacle_lab.harness import _korn_ratio
from shell_obstacle_lab.geometry import CylinderChart, ImmersionError, PlaneChart, SphereChart, build_surface_frame
from shell_obstacle_lab.penalty import InfeasibleError, ObstacleSpec, PenaltyConfig, solve_penalized
from shell_obstacle_lab.shell2d import Mesh2D
from shell_obstacle_lab.shell3d import (
    DisplacementField3D,
    LoadSpec3D,
    Mesh3D,
    assemble_scaled,
    average_thickness,
    build_scaled_system,
    limit_strain_check,
    load_vector_3d,
    solve_scaled,
)


def _cartesian_stiffness(mesh, lam, mu):
    """Textbook hex8 assembly in Cartesian coordinates with Voigt matrices."""
    xyz = mesh.node_coords()
    n = mesh.n_nodes
    D = np.full((3, 3), lam) + 2 * mu * np.eye(3)
    C = np.zeros((6, 6))
    C[:3, :3] = D
    C[3:, 3:] = mu * np.eye(3)
    g = np.array([-1.0, 1.0]) / np.sqrt(3.0)
    K = np.zeros((3 * n, 3 * n))
    for cell in mesh.cell_nodes():
        X = xyz[cell]
        lo, hi = X.min(axis=0), X.max(axis=0)
        half = 0.5 * (hi - lo)
        sign = np.where(X > 0.5 * (lo + hi), 1.0, -1.0)  # reference corner of each node
        for xi in itertools.product(g, g, g):
            xi = np.array(xi)
            fac = 1 + sign * xi  # (8, 3)
            dN = np.empty((8, 3))
            for d in range(3):
                o = [k for k in range(3) if k != d]
                dN[:, d] = sign[:, d] * fac[:, o[0]] * fac[:, o[1]] / 8.0 / half[d]
            B = np.zeros((6, 24))
            for a in range(8):
                for c in range(3):
                    col = c * 8 + a
                    B[c, col] = dN[a, c]
                # engineering shear strains: yz, xz, xy
                B[3, 1 * 8 + a] += dN[a, 2]
                B[3, 2 * 8 + a] += dN[a, 1]
                B[4, 0 * 8 + a] += dN[a, 2]
                B[4, 2 * 8 + a] += dN[a, 0]
                B[5, 0 * 8 + a] += dN[a, 1]
                B[5, 1 * 8 + a] += dN[a, 0]
            dofs = np.concatenate([cell + c * n for c in range(3)])
            K[np.ix_(dofs, dofs)] += B.T @ C @ B * np.prod(half)
    return K


def test_unit_thickness_plate_is_cartesian_elasticity():
    mesh = Mesh3D(Mesh2D(2, 2), 2)
    K = assemble_scaled(mesh, PlaneChart(), LameParameters(0.8, 1.3), 1.0).toarray()
    ref = _cartesian_stiffness(mesh, 0.8, 1.3)
    assert np.max(np.abs(K - ref)) <= 1e-12 * np.max(np.abs(ref))


def _nodal(mesh, fn):
    xyz = mesh.node_coords()
    return np.concatenate([fn(xyz)[:, c] for c in range(3)])


def test_stretch_energy_hand_value():
    mesh = Mesh3D(Mesh2D(2, 2), 2)
    K = assemble_scaled(mesh, PlaneChart(), LameParameters(), 1.0)
    u = _nodal(mesh, lambda x: np.column_stack([x[:, 0], 0 * x[:, 0], 0 * x[:, 0]]))
    assert u @ K @ u == pytest.approx(6.0, rel=1e-13)
    assert np.array_equal(K @ np.zeros_like(u), np.zeros_like(u))


@pytest.mark.parametrize("eps", [0.5, 0.1, 0.01])
def test_transverse_stretch_scales_with_inverse_eps_squared(eps):
    mesh = Mesh3D(Mesh2D(2, 2), 3)
    K = assemble_scaled(mesh, PlaneChart(), LameParameters(), eps)
    u = _nodal(mesh, lambda x: np.column_stack([0 * x[:, 0], 0 * x[:, 0], x[:, 2]]))
    assert u @ K @ u == pytest.approx(6.0 / eps**2, rel=1e-12)


@pytest.mark.parametrize("chart", [PlaneChart(), CylinderChart(), SphereChart()], ids=lambda c: c.name)
@pytest.mark.parametrize("shear", ["full", "ans"])
def test_scaled_stiffness_symmetric_pd(chart, shear):
    mesh = Mesh3D(Mesh2D.for_chart(chart, 2, 2), 2)
    K = assemble_scaled(mesh, chart, LameParameters(), 0.1, shear=shear)
    assert abs(K - K.T).max() <= 1e-12 * abs(K).max()
    free = mesh.free()
    assert np.min(np.linalg.eigvalsh(K[free][:, free].toarray())) > 0


def test_mesh3d_layout():
    mesh = Mesh3D(Mesh2D(2, 1), 2)
    assert mesh.n_nodes == 18 and mesh.n_cells == 4
    assert np.array_equal(mesh.cell_nodes()[0], [0, 1, 3, 4, 6, 7, 9, 10])
    assert np.allclose(mesh.node_coords()[-1], [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        Mesh3D(Mesh2D(1, 1), 0)


def test_clamping_is_extruded():
    base = Mesh2D(2, 2, clamped=("y1=0",))
    mesh = Mesh3D(base, 3)
    assert mesh.clamped_nodes().size == 3 * 4
    assert mesh.constrained().size == 3 * 12


def test_immersion_failure_propagates():
    mesh = Mesh3D(Mesh2D.for_chart(CylinderChart(), 2, 2), 4)
    with pytest.raises(ImmersionError):
        build_scaled_system(mesh, CylinderChart(), LameParameters(), 1.5)


def test_load_vector_total_force():
    eps = 0.1
    mesh = Mesh3D(Mesh2D(2, 2), 2)
    sys_ = build_scaled_system(mesh, PlaneChart(), LameParameters(), eps)
    F = load_vector_3d(sys_, LoadSpec3D((0.0, 0.0, -1.0)))
    # eps^2 * volume of the fixed domain
    assert F[2 * mesh.n_nodes :].sum() == pytest.approx(-2 * eps**2, rel=1e-13)


def _plate(eps, slack, load, n=4, **kw):
    chart = PlaneChart(offset=(0.0, 0.0, eps + slack))
    mesh = Mesh3D(Mesh2D.for_chart(chart, n, n), 4)
    return solve_scaled(mesh, chart, LameParameters(), LoadSpec3D((0.0, 0.0, load)), ObstacleSpec((0, 0, 1)), eps, **kw)


def test_distant_obstacle_matches_linear_solve():
    sol = _plate(0.1, 100.0, -1.0)
    free = sol.field.mesh.free()
    K = sol.system.stiffness[free][:, free].tocsc()
    lin = solve_penalized(K, load_vector_3d(sol.system, LoadSpec3D((0.0, 0.0, -1.0)))[free], None, PenaltyConfig()).solution
    assert sol.report.active_count == 0
    assert np.linalg.norm(sol.field.coefficients[free] - lin) <= 1e-10 * np.linalg.norm(lin)


def test_violation_decays_with_thickness():
    eps = np.array([0.2, 0.1, 0.05])
    viol = np.array([_plate(e, 0.01, -100.0).violation_norm for e in eps])
    assert np.all(viol > 0)
    slope = np.polyfit(np.log(eps), np.log(viol), 1)[0]
    assert slope >= 0.7


def test_default_kappa_is_sqrt_eps():
    assert _plate(0.04, 1.0, -1.0, n=2).kappa == pytest.approx(0.2)


def test_infeasible_undeformed_shell():
    chart = PlaneChart(offset=(0.0, 0.0, 0.05))
    mesh = Mesh3D(Mesh2D(2, 2), 2)
    with pytest.raises(InfeasibleError):
        solve_scaled(mesh, chart, LameParameters(), LoadSpec3D((0, 0, -1)), ObstacleSpec((0, 0, 1)), 0.1)


def test_symmetric_problem_has_symmetric_solution():
    sol = _plate(0.1, 0.01, -100.0)
    mesh = sol.field.mesh
    xyz = mesh.node_coords()
    mirror = xyz.copy()
    mirror[:, 0] = 1.0 - mirror[:, 0]
    order = np.lexsort(np.round(mirror, 12).T[::-1])
    base = np.lexsort(np.round(xyz, 12).T[::-1])
    perm = np.empty(mesh.n_nodes, dtype=int)
    perm[base] = order
    v = sol.field.components()
    assert np.max(np.abs(v[:, 2] - v[perm, 2])) <= 1e-10 * np.max(np.abs(v))
    assert np.max(np.abs(v[:, 0] + v[perm, 0])) <= 1e-10 * np.max(np.abs(v))


def test_average_thickness_examples():
    mesh = Mesh3D(Mesh2D(2, 2), 2)
    x3 = mesh.node_coords()[:, 2]
    const = DisplacementField3D(mesh, _nodal(mesh, lambda x: np.column_stack([x[:, 0], x[:, 1], 1 + 0 * x[:, 0]])))
    avg = average_thickness(const)
    assert np.allclose(avg, np.column_stack([mesh.base.node_coords(), np.ones(9)]), atol=1e-15)
    quad = np.zeros(3 * mesh.n_nodes)
    quad[2 * mesh.n_nodes :] = x3**2
    # interpolant of x3^2 on nodes -1, 0, 1 is |x3|, whose half-integral is 1/2
    assert np.allclose(average_thickness(DisplacementField3D(mesh, quad))[:, 2], 0.5)
    odd = DisplacementField3D(mesh, _nodal(mesh, lambda x: np.column_stack([x[:, 2], x[:, 2] ** 3, np.sin(x[:, 2])])))
    assert np.max(np.abs(average_thickness(odd))) <= 1e-15


def test_strain_check_of_zero_field():
    mesh = Mesh3D(Mesh2D(2, 2), 2)
    sys_ = build_scaled_system(mesh, SphereChart(), LameParameters(), 0.1)
    d = limit_strain_check(sys_, DisplacementField3D(mesh, np.zeros(3 * mesh.n_nodes)))
    assert d.transverse_shear == d.transverse_normal == d.strain_norm == 0.0


@pytest.mark.parametrize("chart", [PlaneChart(), CylinderChart(), SphereChart()], ids=lambda c: c.name)
def test_strain_check_on_lifted_surface_field(chart):
    eps = 0.1
    mesh = Mesh3D(Mesh2D.for_chart(chart, 3, 3), 2)
    xyz = mesh.node_coords()
    y = xyz[:, :2]
    vals = np.column_stack([0.1 * y[:, 0] * y[:, 1], -0.2 * y[:, 1], 0.3 * y[:, 0] ** 2])
    grad = np.zeros((len(y), 3, 2))
    grad[:, 0] = 0.1 * y[:, ::-1]
    grad[:, 1, 1] = -0.2
    grad[:, 2, 0] = 0.6 * y[:, 0]
    hess = np.zeros((len(y), 2, 2))
    hess[:, 0, 0] = 0.6
    w = kl_test_field(build_surface_frame(chart, y), FieldJet2D(vals, grad, hess), eps, xyz[:, 2])
    u = DisplacementField3D(mesh, w.values.T.ravel())
    sys_ = build_scaled_system(mesh, chart, LameParameters(1.0, 1.0), eps)
    local = u.coefficients[mesh.cell_dofs()]
    e = np.einsum("cqnij,cn->cqij", sys_.strain_ops, local)
    assert np.max(np.abs(e[..., 2, 2])) <= 1e-14
    trace = np.einsum("cqab,cqab->cq", sys_.frames.surface.metric_contra, e[..., :2, :2])
    expected = np.sqrt(np.sum(sys_.weights * (trace / (3.0 * eps)) ** 2))
    assert limit_strain_check(sys_, u).transverse_normal == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("shear", ["full", "ans"])
def test_energy_bound_constant_does_not_grow(shear):
    # eps^2 |u|_H1^2 <= C |e(eps; u)|^2: the smallest admissible C over the sweep must not increase as eps shrinks
    ratios = np.array([_korn_ratio(_plate(eps, 100.0, -1.0, shear=shear)) for eps in (0.2, 0.1, 0.05)])
    assert np.all(ratios > 0)
    assert np.all(np.diff(ratios) <= 0)
