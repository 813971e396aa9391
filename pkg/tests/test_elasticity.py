import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shell_obstacle_lab.elasticity import (
    FieldJet2D,
    FieldJet3D,
    LameParameters,
    c0_exact,
    gamma_strain,
    kl_test_field,
    measure_c0,
    rho_strain,
    scaled_strains,
    tensor2d,
    tensor3d_exact,
    tensor3d_limit,
)
from shell_obstacle_lab.geometry import (
    CylinderChart,
    PlaneChart,
    SphereChart,
    build_surface_frame,
    build_volume_frame,
)

CHARTS = [PlaneChart(), CylinderChart(), SphereChart()]
COEF = np.array(
    [
        [0.3, -0.2, 0.5, 0.1, -0.4, 0.2],
        [-0.1, 0.4, 0.2, -0.3, 0.1, 0.5],
        [0.2, 0.1, -0.3, 0.6, 0.2, -0.1],
    ]
)


def eta(y):
    """Quadratic covariant components eta_i(y) with fixed coefficients."""
    y1, y2 = y[..., 0], y[..., 1]
    mono = np.stack([np.ones_like(y1), y1, y2, y1 * y1, y1 * y2, y2 * y2], axis=-1)
    return mono @ COEF.T


def eta_jet(y):
    y1, y2 = y[..., 0], y[..., 1]
    z, o = np.zeros_like(y1), np.ones_like(y1)
    d1 = np.stack([z, o, z, 2 * y1, y2, z], axis=-1) @ COEF.T
    d2 = np.stack([z, z, o, z, y1, 2 * y2], axis=-1) @ COEF.T
    c = COEF[2]
    hess = np.array([[2 * c[3], c[4]], [c[4], 2 * c[5]]])
    return FieldJet2D(eta(y), np.stack([d1, d2], axis=-1), np.broadcast_to(hess, y.shape[:-1] + (2, 2)).copy())


def displacement(chart, y):
    return np.einsum("...i,...ik->...k", eta(y), build_surface_frame(chart, y).a_contra)


def _points(chart, n=8, seed=1):
    return np.random.default_rng(seed).uniform(0.2, 0.8, (n, 2)) * np.array(chart.lengths)


@pytest.mark.parametrize("chart", CHARTS, ids=lambda c: type(c).__name__)
def test_gamma_matches_metric_variation(chart):
    y = _points(chart)
    fr = build_surface_frame(chart, y)
    h = 1e-5
    e = np.eye(2) * h
    dU = np.stack([(displacement(chart, y + e[b]) - displacement(chart, y - e[b])) / (2 * h) for b in range(2)], axis=1)
    proj = np.einsum("pak,pbk->pab", fr.a_cov[:, :2], dU)
    oracle = 0.5 * (proj + np.swapaxes(proj, 1, 2))
    assert np.allclose(gamma_strain(fr, eta_jet(y)), oracle, atol=1e-8)


@pytest.mark.parametrize("chart", CHARTS, ids=lambda c: type(c).__name__)
def test_rho_matches_curvature_variation(chart):
    y = _points(chart)
    fr = build_surface_frame(chart, y)
    h = 1e-3
    e = np.eye(2) * h

    def U(z):
        return displacement(chart, z)

    dU = np.stack([(U(y + e[b]) - U(y - e[b])) / (2 * h) for b in range(2)], axis=1)
    ddU = np.empty(y.shape[:1] + (2, 2, 3))
    for a in range(2):
        for b in range(2):
            ddU[:, a, b] = (U(y + e[a] + e[b]) - U(y + e[a] - e[b]) - U(y - e[a] + e[b]) + U(y - e[a] - e[b])) / (4 * h * h)
    cov = ddU - np.einsum("psab,psk->pabk", fr.christoffel, dU)
    oracle = np.einsum("pabk,pk->pab", cov, fr.a_cov[:, 2])
    assert np.allclose(rho_strain(fr, eta_jet(y)), oracle, atol=1e-5)


@pytest.mark.parametrize("chart", CHARTS, ids=lambda c: type(c).__name__)
def test_rigid_translation_is_strain_free(chart):
    y = _points(chart)
    fr = build_surface_frame(chart, y)
    c = np.array([0.3, -1.2, 0.7])
    # covariant components of a constant vector and their exact derivatives
    values = np.einsum("k,pik->pi", c, fr.a_cov)
    jet = chart.jet(y)
    grad = np.zeros(values.shape + (2,))
    grad[:, :2, :] = np.einsum("k,pbak->pab", c, jet.d2)
    grad[:, 2, :] = np.einsum("k,psk,pas->pa", c, fr.a_cov[:, :2], -fr.curv_mixed.swapaxes(1, 2))
    hess = np.zeros((len(y), 2, 2))
    for a in range(2):
        for b in range(2):
            # d_b of d_a(c.a3) = -d_b(b^s_a c.a_s)
            hess[:, a, b] = -np.einsum("ps,ps->p", fr.curv_mixed_grad[:, b, :, a], values[:, :2]) - np.einsum(
                "ps,ps->p", fr.curv_mixed[:, :, a], grad[:, :2, b]
            )
    j2 = FieldJet2D(values, grad, hess)
    assert np.max(np.abs(gamma_strain(fr, j2))) <= 1e-12
    assert np.max(np.abs(rho_strain(fr, j2))) <= 1e-12


@pytest.mark.parametrize("chart", CHARTS, ids=lambda c: type(c).__name__)
def test_scaled_strains_match_shell_map_variation(chart):
    eps = 0.2
    rng = np.random.default_rng(5)
    y = rng.uniform(0.2, 0.8, 2) * np.array(chart.lengths)
    x3 = 0.3
    A = rng.standard_normal((3, 3))

    def v(yy, xx):
        return A @ np.array([yy[0], yy[1], xx]) + np.array([0.1, -0.2, 0.3])

    def V(yy, xx):
        return v(yy, xx) @ build_volume_frame(chart, eps, yy, xx).g_contra

    h = 1e-5
    dV = np.stack(
        [
            (V(y + [h, 0], x3) - V(y - [h, 0], x3)) / (2 * h),
            (V(y + [0, h], x3) - V(y - [0, h], x3)) / (2 * h),
            (V(y, x3 + h) - V(y, x3 - h)) / (2 * h * eps),
        ]
    )
    vf = build_volume_frame(chart, eps, y, x3)
    proj = vf.g_cov @ dV.T
    oracle = 0.5 * (proj + proj.T)
    got = scaled_strains(vf, FieldJet3D(v(y, x3), A), eps)
    assert np.allclose(got, oracle, atol=1e-8)


def test_scaled_strains_rejects_nonpositive_eps():
    vf = build_volume_frame(PlaneChart(), 0.1, np.array([0.5, 0.5]), 0.0)
    with pytest.raises(ValueError):
        scaled_strains(vf, FieldJet3D(np.zeros(3), np.zeros((3, 3))), 0.0)


@pytest.mark.parametrize("chart", CHARTS, ids=lambda c: type(c).__name__)
@pytest.mark.parametrize("eps", [0.2, 0.01])
def test_kl_field_has_no_transverse_normal_strain(chart, eps):
    y = _points(chart, 20)
    x3 = np.linspace(-1, 1, 20)
    fr = build_surface_frame(chart, y)
    w = kl_test_field(fr, eta_jet(y), eps, x3)
    vf = build_volume_frame(chart, eps, y, x3)
    e = scaled_strains(vf, w, eps)
    assert np.max(np.abs(e[:, 2, 2])) <= 1e-14
    # at the mid-surface the lift reduces to eta
    w0 = kl_test_field(fr, eta_jet(y), eps, np.zeros(20))
    assert np.array_equal(w0.values, eta_jet(y).values)


@pytest.mark.parametrize("chart", CHARTS, ids=lambda c: type(c).__name__)
def test_kl_field_gradient_matches_differences(chart):
    eps, x3 = 0.3, 0.7
    y = _points(chart, 4)
    h = 1e-5
    w = kl_test_field(build_surface_frame(chart, y), eta_jet(y), eps, x3)
    for a in range(2):
        e = np.zeros(2)
        e[a] = h
        wp = kl_test_field(build_surface_frame(chart, y + e), eta_jet(y + e), eps, x3).values
        wm = kl_test_field(build_surface_frame(chart, y - e), eta_jet(y - e), eps, x3).values
        assert np.allclose((wp - wm) / (2 * h), w.grad[..., a], atol=1e-8)
    wp = kl_test_field(build_surface_frame(chart, y), eta_jet(y), eps, x3 + h).values
    wm = kl_test_field(build_surface_frame(chart, y), eta_jet(y), eps, x3 - h).values
    assert np.allclose((wp - wm) / (2 * h), w.grad[..., 2], atol=1e-8)


def test_lame_validation():
    with pytest.raises(ValueError):
        LameParameters(-1.0, 1.0)
    with pytest.raises(ValueError):
        LameParameters(1.0, 0.0)
    assert LameParameters(1.0, 1.0).transverse_ratio == pytest.approx(1 / 3)


def test_tensor2d_plane_values():
    fr = build_surface_frame(PlaneChart(), np.array([0.5, 0.5]))
    A = tensor2d(fr, LameParameters(1.0, 1.0)).components
    assert A[0, 0, 0, 0] == pytest.approx(4 / 3 + 4)
    assert A[0, 0, 1, 1] == pytest.approx(4 / 3)
    assert A[0, 1, 0, 1] == pytest.approx(2.0)
    assert A[0, 1, 1, 0] == pytest.approx(2.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 10.0), st.floats(0.1, 10.0), st.sampled_from(CHARTS), st.floats(0.1, 0.9), st.floats(0.1, 0.9))
def test_tensor2d_symmetry_and_definiteness(lam, mu, chart, s1, s2):
    fr = build_surface_frame(chart, np.array([s1, s2]) * np.array(chart.lengths))
    A = tensor2d(fr, LameParameters(lam, mu)).components
    assert np.allclose(A, A.transpose(1, 0, 2, 3))
    assert np.allclose(A, A.transpose(2, 3, 0, 1))
    basis = [np.array([[1.0, 0], [0, 0]]), np.array([[0, 1.0], [1.0, 0]]), np.array([[0, 0], [0, 1.0]])]
    M = np.array([[np.einsum("ijkl,ij,kl->", A, s, t) for t in basis] for s in basis])
    assert np.min(np.linalg.eigvalsh(M)) > 0


def test_tensor3d_exact_tends_to_limit():
    chart = CylinderChart()
    y = np.array([0.3, 0.4])
    lim = tensor3d_limit(build_surface_frame(chart, y), LameParameters())
    diffs = [
        np.max(np.abs(tensor3d_exact(build_volume_frame(chart, eps, y, 1.0), LameParameters()).components - lim.components))
        for eps in (1e-2, 1e-3)
    ]
    assert diffs[1] < diffs[0] / 5
    assert not lim.exact


def test_c0_of_plane_tensor():
    # eigenvalues of the isotropic tensor are 2mu (deviatoric) and 3lam + 2mu
    vf = build_volume_frame(PlaneChart(), 0.1, np.array([0.5, 0.5]), 0.0)
    A = tensor3d_exact(vf, LameParameters(1.0, 1.0))
    assert c0_exact(A) == pytest.approx(0.5, rel=1e-12)
    assert measure_c0(A) <= c0_exact(A) * (1 + 1e-12)
    assert measure_c0(A, samples=20000) > 0.45
