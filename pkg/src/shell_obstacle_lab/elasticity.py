"""Constitutive tensors and strain measures, evaluated pointwise from field jets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SurfaceFrame, VolumeFrame

__all__ = [
    "ElasticityTensor2D",
    "ElasticityTensor3D",
    "FieldJet2D",
    "FieldJet3D",
    "LameParameters",
    "gamma_strain",
    "kl_test_field",
    "c0_exact",
    "measure_c0",
    "rho_strain",
    "scaled_strains",
    "tensor2d",
    "tensor3d_exact",
    "tensor3d_limit",
]


@dataclass(frozen=True)
class LameParameters:
    lam: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise ValueError(f"mu must be finite and > 0, got {self.mu}")

    @property
    def membrane_lambda(self) -> float:
        """Effective first coefficient 2*lam*mu/(lam+2mu) after eliminating the transverse strain."""
        return 2.0 * self.lam * self.mu / (self.lam + 2.0 * self.mu)

    @property
    def transverse_ratio(self) -> float:
        return self.lam / (self.lam + 2.0 * self.mu)


def _isotropic(metric, c1, c2):
    """c1 g^ij g^kl + c2 (g^ik g^jl + g^il g^jk) for a batch of inverse metrics."""
    return c1 * np.einsum("...ij,...kl->...ijkl", metric, metric) + c2 * (
        np.einsum("...ik,...jl->...ijkl", metric, metric) + np.einsum("...il,...jk->...ijkl", metric, metric)
    )


@dataclass(frozen=True)
class ElasticityTensor2D:
    components: np.ndarray  # (..., 2, 2, 2, 2)

    def contract(self, s, t):
        return np.einsum("...ijkl,...kl,...ij->...", self.components, s, t)


@dataclass(frozen=True)
class ElasticityTensor3D:
    components: np.ndarray  # (..., 3, 3, 3, 3)
    exact: bool

    def contract(self, s, t):
        return np.einsum("...ijkl,...kl,...ij->...", self.components, s, t)


def tensor2d(frame: SurfaceFrame, lame: LameParameters) -> ElasticityTensor2D:
    """Two-dimensional flexural/membrane tensor built from the inverse surface metric."""
    lam, mu = lame.lam, lame.mu
    return ElasticityTensor2D(_isotropic(frame.metric_contra, 4 * lam * mu / (lam + 2 * mu), 2 * mu))


def tensor3d_exact(vframe: VolumeFrame, lame: LameParameters) -> ElasticityTensor3D:
    return ElasticityTensor3D(_isotropic(vframe.metric_contra, lame.lam, lame.mu), exact=True)


def tensor3d_limit(frame: SurfaceFrame, lame: LameParameters) -> ElasticityTensor3D:
    """Limit of the 3D tensor as the thickness vanishes (inverse metric diag(a^ab, 1))."""
    shape = frame.area_sqrt.shape
    m = np.zeros(shape + (3, 3))
    m[..., :2, :2] = frame.metric_contra
    m[..., 2, 2] = 1.0
    return ElasticityTensor3D(_isotropic(m, lame.lam, lame.mu), exact=False)


@dataclass(frozen=True)
class FieldJet2D:
    """Covariant displacement components and derivatives at a point.

    ``grad[..., i, a]`` is d_a eta_i; ``hess3[..., a, b]`` is d_ab eta_3.
    """

    values: np.ndarray
    grad: np.ndarray
    hess3: np.ndarray

    def __add__(self, other):
        return FieldJet2D(self.values + other.values, self.grad + other.grad, self.hess3 + other.hess3)

    def scale(self, c):
        return FieldJet2D(c * self.values, c * self.grad, c * self.hess3)


@dataclass(frozen=True)
class FieldJet3D:
    """``grad[..., i, j]`` holds d_j v_i with respect to (y1, y2, x3)."""

    values: np.ndarray
    grad: np.ndarray

    def __add__(self, other):
        return FieldJet3D(self.values + other.values, self.grad + other.grad)


def gamma_strain(frame: SurfaceFrame, jet: FieldJet2D) -> np.ndarray:
    """Linearised change of metric."""
    g = jet.grad[..., :2, :]
    sym = 0.5 * (g + np.swapaxes(g, -1, -2))
    return (
        sym
        - np.einsum("...sab,...s->...ab", frame.christoffel, jet.values[..., :2])
        - frame.curv_cov * jet.values[..., 2, None, None]
    )


def rho_strain(frame: SurfaceFrame, jet: FieldJet2D) -> np.ndarray:
    """Linearised change of curvature."""
    eta_t = jet.values[..., :2]
    eta3 = jet.values[..., 2]
    chr_ = frame.christoffel
    bm = frame.curv_mixed  # [s, a] = b^s_a
    # covariant derivative of the tangential part: [a, s] = d_a eta_s - Gamma^t_as eta_t
    cov = jet.grad[..., :2, :].swapaxes(-1, -2) - np.einsum("...tas,...t->...as", chr_, eta_t)
    out = jet.hess3 - np.einsum("...sab,...s->...ab", chr_, jet.grad[..., 2, :])
    out = out - np.einsum("...sa,...sb->...ab", bm, frame.curv_cov) * eta3[..., None, None]
    out = out + np.einsum("...sa,...bs->...ab", bm, cov) + np.einsum("...tb,...at->...ab", bm, cov)
    # (d_a b^t_b + Gamma^t_as b^s_b - Gamma^s_ab b^t_s) eta_t
    dcurv = (
        np.einsum("...atb->...abt", frame.curv_mixed_grad)
        + np.einsum("...tas,...sb->...abt", chr_, bm)
        - np.einsum("...sab,...ts->...abt", chr_, bm)
    )
    out = out + np.einsum("...abt,...t->...ab", dcurv, eta_t)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def scaled_strains(vframe: VolumeFrame, jet: FieldJet3D, eps: float) -> np.ndarray:
    """Scaled linearised strains on the fixed domain; transverse derivatives carry 1/eps."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    d = np.array(jet.grad, dtype=float, copy=True)
    d[..., 2] /= eps
    sym = 0.5 * (d + np.swapaxes(d, -1, -2))
    return sym - np.einsum("...pij,...p->...ij", vframe.christoffel3, jet.values)


def kl_test_field(frame: SurfaceFrame, jet: FieldJet2D, eps: float, x3) -> FieldJet3D:
    """Kirchhoff-Love type lift of a surface field to the scaled shell.

    The in-plane derivatives of the tangential components need the Hessian of
    eta_3 and the curvature gradient.  w_3 does not depend on x3, so the
    transverse strain of the lift vanishes identically.
    """
    x3 = np.asarray(x3, dtype=float)
    eta_t = jet.values[..., :2]
    bm = frame.curv_mixed
    rot = jet.grad[..., 2, :] + np.einsum("...sa,...s->...a", bm, eta_t)
    t = eps * x3
    values = np.array(np.broadcast_to(jet.values, np.broadcast_shapes(jet.values.shape, x3.shape + (3,))), copy=True)
    values[..., :2] = eta_t - t[..., None] * rot

    # d_b rot_a = d_ab eta3 + d_b b^s_a eta_s + b^s_a d_b eta_s
    drot = (
        jet.hess3
        + np.einsum("...bsa,...s->...ab", frame.curv_mixed_grad, eta_t)
        + np.einsum("...sa,...sb->...ab", bm, jet.grad[..., :2, :])
    )
    grad = np.zeros(values.shape[:-1] + (3, 3))
    grad[..., :, :2] = jet.grad
    grad[..., :2, :2] = jet.grad[..., :2, :] - t[..., None, None] * drot
    grad[..., :2, 2] = -eps * rot
    return FieldJet3D(values, grad)


def measure_c0(tensor: ElasticityTensor3D, samples: int = 1000, seed: int = 0) -> float:
    """Largest ratio |t|^2 / (A t : t) over random unit symmetric t and all tensor points."""
    comps = tensor.components.reshape((-1, 3, 3, 3, 3))
    rng = np.random.default_rng(seed)
    t = rng.standard_normal((samples, 3, 3))
    t = 0.5 * (t + np.swapaxes(t, -1, -2))
    t /= np.linalg.norm(t, axis=(1, 2))[:, None, None]
    q = np.einsum("pijkl,skl,sij->ps", comps, t, t)
    if np.any(q <= 0):
        raise ArithmeticError("elasticity tensor is not positive definite on the sampled arguments")
    return float(np.max(1.0 / q))


def c0_exact(tensor: ElasticityTensor3D) -> float:
    """Sharp constant: inverse of the smallest eigenvalue of A on symmetric matrices (Frobenius metric)."""
    comps = tensor.components.reshape((-1, 3, 3, 3, 3))
    basis = []
    for i in range(3):
        for j in range(i, 3):
            e = np.zeros((3, 3))
            if i == j:
                e[i, i] = 1.0
            else:
                e[i, j] = e[j, i] = np.sqrt(0.5)
            basis.append(e)
    basis = np.array(basis)
    mats = np.einsum("pijkl,skl,rij->prs", comps, basis, basis)
    mats = 0.5 * (mats + np.swapaxes(mats, -1, -2))
    return float(1.0 / np.min(np.linalg.eigvalsh(mats)))
