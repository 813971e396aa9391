"""Curvilinear geometry of a middle surface and of the shell built around it.

Everything here is vectorised over leading batch dimensions: a chart evaluated
at ``y`` of shape ``(..., 2)`` returns arrays whose leading shape is ``...``.
Index conventions for stored arrays (trailing axes):

* ``a_cov[..., i, :]``          covariant basis vector a_i (a_3 is the unit normal)
* ``a_contra[..., j, :]``       contravariant basis vector a^j
* ``curv_mixed[..., s, a]``     b^s_a  (upper index first)
* ``christoffel[..., s, a, b]`` Gamma^s_ab
* ``curv_mixed_grad[..., c, s, a]`` derivative d_c of b^s_a
* ``christoffel3[..., p, i, j]`` Gamma^p_ij(eps) of the shell
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Chart",
    "ChartJet",
    "CylinderChart",
    "ExpansionRow",
    "ImmersionError",
    "PlaneChart",
    "SphereChart",
    "SurfaceFrame",
    "VolumeFrame",
    "build_surface_frame",
    "build_volume_frame",
    "expansion_report",
    "gaussian_curvature",
    "make_chart",
    "volume_frame_from_surface",
]

_IMMERSION_TOL = 1e-12


class ImmersionError(ValueError):
    """Raised when a chart or the shell map fails to be an immersion."""


def _cyc_sin(x, n):
    """n-th derivative of sin, using exact sign/phase cycling."""
    return (np.sin(x), np.cos(x), -np.sin(x), -np.cos(x))[n % 4]


def _cyc_cos(x, n):
    return (np.cos(x), -np.sin(x), -np.cos(x), np.sin(x))[n % 4]


@dataclass(frozen=True)
class ChartJet:
    """Position and partial derivatives of a chart up to total order three."""

    position: np.ndarray  # (..., 3)
    d1: np.ndarray  # (..., 2, 3)
    d2: np.ndarray  # (..., 2, 2, 3)
    d3: np.ndarray  # (..., 2, 2, 2, 3)


class Chart:
    """Smooth map from the rectangle [0, L1] x [0, L2] into 3-space.

    Subclasses implement :meth:`partial`, the mixed partial derivative
    d1^m d2^n theta for m + n <= 3, analytically.
    """

    name = "chart"

    def __init__(self, lengths=(1.0, 1.0), offset=(0.0, 0.0, 0.0)):
        self.lengths = (float(lengths[0]), float(lengths[1]))
        self.offset = np.asarray(offset, dtype=float).reshape(3)

    def partial(self, y: np.ndarray, m: int, n: int) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, y) -> np.ndarray:
        return self.partial(np.asarray(y, dtype=float), 0, 0)

    def jet(self, y) -> ChartJet:
        y = np.asarray(y, dtype=float)
        shape = y.shape[:-1]
        d1 = np.empty(shape + (2, 3))
        d2 = np.empty(shape + (2, 2, 3))
        d3 = np.empty(shape + (2, 2, 2, 3))
        for a in range(2):
            d1[..., a, :] = self.partial(y, 1 - a, a)
            for b in range(2):
                d2[..., a, b, :] = self.partial(y, 2 - a - b, a + b)
                for c in range(2):
                    k = a + b + c
                    d3[..., a, b, c, :] = self.partial(y, 3 - k, k)
        return ChartJet(self.partial(y, 0, 0), d1, d2, d3)

    def contains(self, y, tol=1e-12) -> bool:
        y = np.asarray(y, dtype=float)
        return bool(
            np.all(y[..., 0] >= -tol)
            and np.all(y[..., 0] <= self.lengths[0] + tol)
            and np.all(y[..., 1] >= -tol)
            and np.all(y[..., 1] <= self.lengths[1] + tol)
        )

    def __repr__(self):
        return f"{type(self).__name__}(lengths={self.lengths}, offset={self.offset.tolist()})"


class PlaneChart(Chart):
    """theta(y) = (y1, y2, 0) + offset."""

    name = "plane"

    def partial(self, y, m, n):
        out = np.zeros(y.shape[:-1] + (3,))
        if m == 0 and n == 0:
            out[..., 0] = y[..., 0]
            out[..., 1] = y[..., 1]
            out += self.offset
        elif m + n == 1:
            out[..., 0 if m else 1] = 1.0
        return out


class CylinderChart(Chart):
    """Cylinder panel of radius R parametrised by arc length along the circle.

    theta(y) = (R cos(phi), R sin(phi), y2) + offset with phi = phase + y1 / R.
    With R = 1 and phase = 0 this is the unit cylinder (cos y1, sin y1, y2).
    """

    name = "cylinder"

    def __init__(self, radius=1.0, phase=0.0, lengths=(1.0, 1.0), offset=(0.0, 0.0, 0.0)):
        super().__init__(lengths, offset)
        self.radius = float(radius)
        self.phase = float(phase)

    def partial(self, y, m, n):
        R = self.radius
        phi = self.phase + y[..., 0] / R
        out = np.zeros(y.shape[:-1] + (3,))
        if n == 0:
            scale = R ** (1 - m)
            out[..., 0] = scale * _cyc_cos(phi, m)
            out[..., 1] = scale * _cyc_sin(phi, m)
            if m == 0:
                out[..., 2] = y[..., 1]
                out += self.offset
        elif n == 1 and m == 0:
            out[..., 2] = 1.0
        return out


class SphereChart(Chart):
    """Spherical cap in colatitude/longitude angles.

    theta(y) = R (sin u cos v, sin u sin v, cos u) + offset,
    u = u0 + y1, v = v0 + y2.  The outward normal makes b_ab = -a_ab / R.
    """

    name = "sphere"

    def __init__(self, radius=2.0, u0=np.pi / 4, v0=0.0, lengths=(0.5, 0.5), offset=(0.0, 0.0, 0.0)):
        super().__init__(lengths, offset)
        self.radius = float(radius)
        self.u0 = float(u0)
        self.v0 = float(v0)

    def partial(self, y, m, n):
        R = self.radius
        u = self.u0 + y[..., 0]
        v = self.v0 + y[..., 1]
        out = np.empty(y.shape[:-1] + (3,))
        out[..., 0] = R * _cyc_sin(u, m) * _cyc_cos(v, n)
        out[..., 1] = R * _cyc_sin(u, m) * _cyc_sin(v, n)
        out[..., 2] = R * _cyc_cos(u, m) if n == 0 else 0.0
        if m == 0 and n == 0:
            out += self.offset
        return out


_CHARTS = {"plane": PlaneChart, "cylinder": CylinderChart, "sphere": SphereChart}


def make_chart(name: str, **kwargs) -> Chart:
    """Build one of the built-in charts by name (plane, cylinder, sphere)."""
    try:
        cls = _CHARTS[name]
    except KeyError:
        raise ValueError(f"unknown chart {name!r}; expected one of {sorted(_CHARTS)}") from None
    return cls(**kwargs)


@dataclass(frozen=True)
class SurfaceFrame:
    """Geometric record of the middle surface at one or many points."""

    y: np.ndarray
    position: np.ndarray
    a_cov: np.ndarray
    a_contra: np.ndarray
    metric_cov: np.ndarray
    metric_contra: np.ndarray
    area_sqrt: np.ndarray
    curv_cov: np.ndarray
    curv_mixed: np.ndarray
    christoffel: np.ndarray
    curv_mixed_grad: np.ndarray
    gauss: np.ndarray

    def expand(self, axis: int) -> "SurfaceFrame":
        """Insert a length-one batch axis so the frame broadcasts against jets."""
        nb = self.area_sqrt.ndim
        pos = axis if axis >= 0 else nb + 1 + axis
        kw = {}
        for name in self.__dataclass_fields__:
            arr = getattr(self, name)
            kw[name] = np.expand_dims(arr, pos)
        return SurfaceFrame(**kw)


def _inv2(m):
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    inv = np.empty_like(m)
    inv[..., 0, 0] = m[..., 1, 1] / det
    inv[..., 1, 1] = m[..., 0, 0] / det
    inv[..., 0, 1] = -m[..., 0, 1] / det
    inv[..., 1, 0] = -m[..., 1, 0] / det
    return inv, det


def _symmetrize_last2(x):
    return 0.5 * (x + np.swapaxes(x, -1, -2))


def build_surface_frame(chart: Chart, y) -> SurfaceFrame:
    """Evaluate bases, fundamental forms and Christoffel symbols at ``y``."""
    y = np.asarray(y, dtype=float)
    jet = chart.jet(y)
    a1 = jet.d1[..., 0, :]
    a2 = jet.d1[..., 1, :]
    cross = np.cross(a1, a2)
    norm = np.linalg.norm(cross, axis=-1)
    if np.any(norm < _IMMERSION_TOL):
        bad = y[norm < _IMMERSION_TOL] if norm.ndim else y
        raise ImmersionError(f"chart {chart.name} is not an immersion at y={np.atleast_2d(bad)[0].tolist()}")
    a3 = cross / norm[..., None]

    metric_cov = np.einsum("...ak,...bk->...ab", jet.d1, jet.d1)
    metric_cov = _symmetrize_last2(metric_cov)
    metric_contra, det = _inv2(metric_cov)
    metric_contra = _symmetrize_last2(metric_contra)
    tang_contra = np.einsum("...ab,...bk->...ak", metric_contra, jet.d1)

    shape = y.shape[:-1]
    a_cov = np.empty(shape + (3, 3))
    a_cov[..., :2, :] = jet.d1
    a_cov[..., 2, :] = a3
    a_contra = np.empty(shape + (3, 3))
    a_contra[..., :2, :] = tang_contra
    a_contra[..., 2, :] = a3

    curv_cov = _symmetrize_last2(np.einsum("...abk,...k->...ab", jet.d2, a3))
    curv_mixed = np.einsum("...st,...ta->...sa", metric_contra, curv_cov)
    christoffel = np.einsum("...abk,...sk->...sab", jet.d2, tang_contra)
    christoffel = _symmetrize_last2(christoffel)

    # d_c b_ab = d3_cab . a3 - b_cl Gamma^l_ab   (Weingarten: d_c a3 = -b_cl a^l)
    d_curv_cov = np.einsum("...cabk,...k->...cab", jet.d3, a3) - np.einsum(
        "...cl,...lab->...cab", curv_cov, christoffel
    )
    # d_c a_mn = d2_cm . a_n + a_m . d2_cn
    d_metric = np.einsum("...cmk,...nk->...cmn", jet.d2, jet.d1)
    d_metric = d_metric + np.swapaxes(d_metric, -1, -2)
    d_metric_contra = -np.einsum("...sm,...cmn,...nt->...cst", metric_contra, d_metric, metric_contra)
    curv_mixed_grad = np.einsum("...cst,...ta->...csa", d_metric_contra, curv_cov) + np.einsum(
        "...st,...cta->...csa", metric_contra, d_curv_cov
    )

    frame = SurfaceFrame(
        y=y,
        position=jet.position,
        a_cov=a_cov,
        a_contra=a_contra,
        metric_cov=metric_cov,
        metric_contra=metric_contra,
        area_sqrt=np.sqrt(det),
        curv_cov=curv_cov,
        curv_mixed=curv_mixed,
        christoffel=christoffel,
        curv_mixed_grad=curv_mixed_grad,
        gauss=np.zeros(shape),
    )
    object.__setattr__(frame, "gauss", gaussian_curvature(frame))
    return frame


def gaussian_curvature(frame: SurfaceFrame, which: str = "mixed") -> np.ndarray:
    """Gaussian curvature, either det(b^b_a) (``mixed``) or det(b_ab)/det(a_ab) (``ratio``)."""
    if which == "mixed":
        m = frame.curv_mixed
        return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    if which == "ratio":
        b = frame.curv_cov
        a = frame.metric_cov
        return (b[..., 0, 0] * b[..., 1, 1] - b[..., 0, 1] ** 2) / (a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] ** 2)
    raise ValueError(f"unknown formula {which!r}")


@dataclass(frozen=True)
class VolumeFrame:
    """Shell geometry at (y, x3) for half-thickness ``eps`` in scaled coordinates.

    ``g_cov[..., 2]`` is the derivative with respect to the physical transverse
    coordinate eps * x3, so it equals the unit normal a_3.
    """

    eps: float
    x3: np.ndarray
    surface: SurfaceFrame
    position: np.ndarray
    g_cov: np.ndarray
    g_contra: np.ndarray
    metric_contra: np.ndarray
    vol_sqrt: np.ndarray
    christoffel3: np.ndarray


def volume_frame_from_surface(frame: SurfaceFrame, eps: float, x3) -> VolumeFrame:
    """Exact shell geometry built from an already evaluated surface frame."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x3 = np.asarray(x3, dtype=float)
    shape = np.broadcast_shapes(frame.area_sqrt.shape, x3.shape)
    t = np.broadcast_to(eps * x3, shape)
    tang = frame.a_cov[..., :2, :]
    a3 = frame.a_cov[..., 2, :]
    # d_a a3 = -b^s_a a_s
    d_normal = -np.einsum("...sa,...sk->...ak", frame.curv_mixed, tang)

    g_tan = tang + t[..., None, None] * d_normal
    g_cov = np.empty(shape + (3, 3))
    g_cov[..., :2, :] = g_tan
    g_cov[..., 2, :] = a3
    det3 = np.einsum("...k,...k->...", np.cross(g_cov[..., 0, :], g_cov[..., 1, :]), g_cov[..., 2, :])
    if np.any(det3 < _IMMERSION_TOL):
        raise ImmersionError(f"shell map is not an immersion for eps={eps}; try a smaller eps")

    gm = _symmetrize_last2(np.einsum("...ak,...bk->...ab", g_tan, g_tan))
    gm_inv, gdet = _inv2(gm)
    gm_inv = _symmetrize_last2(gm_inv)
    g_contra = np.empty(shape + (3, 3))
    g_contra[..., :2, :] = np.einsum("...ab,...bk->...ak", gm_inv, g_tan)
    g_contra[..., 2, :] = a3
    metric_contra = np.zeros(shape + (3, 3))
    metric_contra[..., :2, :2] = gm_inv
    metric_contra[..., 2, 2] = 1.0

    # d_b g_a = d_b a_a - t (d_b b^s_a a_s + b^s_a d_b a_s)
    d2 = np.einsum("...sba,...sk->...bak", frame.christoffel, tang) + np.einsum(
        "...ba,...k->...bak", frame.curv_cov, a3
    )
    dg = d2 - t[..., None, None, None] * (
        np.einsum("...bsa,...sk->...bak", frame.curv_mixed_grad, tang)
        + np.einsum("...sa,...bsk->...bak", frame.curv_mixed, d2)
    )
    chr3 = np.zeros(shape + (3, 3, 3))
    chr3[..., :, :2, :2] = _symmetrize_last2(np.einsum("...bak,...pk->...pab", dg, g_contra))
    # Gamma^s_a3 = d_3 g_a . g^s ; Gamma^3_a3 = Gamma^p_33 = 0 structurally
    mixed = np.einsum("...ak,...sk->...sa", d_normal, g_contra[..., :2, :])
    chr3[..., :2, :2, 2] = mixed
    chr3[..., :2, 2, :2] = mixed

    position = frame.position + t[..., None] * a3
    return VolumeFrame(
        eps=float(eps),
        x3=np.broadcast_to(x3, shape),
        surface=frame,
        position=position,
        g_cov=g_cov,
        g_contra=g_contra,
        metric_contra=metric_contra,
        vol_sqrt=np.sqrt(gdet),
        christoffel3=chr3,
    )


def build_volume_frame(chart: Chart, eps: float, y, x3) -> VolumeFrame:
    """Shell geometry at the scaled point (y, x3), computed without truncation."""
    return volume_frame_from_surface(build_surface_frame(chart, y), eps, x3)


@dataclass(frozen=True)
class ExpansionRow:
    quantity: str
    eps: float
    sup_remainder: float
    fitted_slope: float


EXPANSION_QUANTITIES = (
    "A(eps)-A(0)",
    "g(eps)-a",
    "Gamma^s_a3(eps)+b^s_a",
    "g^a(eps)-a^a-eps*x3*b^a_s*a^s",
)


def _loglog_slope(eps_list, values):
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        return float("nan")
    return float(np.polyfit(np.log(eps_list), np.log(values), 1)[0])


def expansion_report(chart: Chart, eps_list, samples=64, seed=0, lame=None) -> list[ExpansionRow]:
    """Measure the remainders of the small-thickness expansions of the shell geometry.

    ``samples`` is either a count of random points (seeded) or an explicit
    ``(y, x3)`` pair of arrays.  Returns one row per (quantity, eps).
    """
    from .elasticity import LameParameters, tensor3d_exact, tensor3d_limit

    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 2:
        raise ValueError("at least two eps values are needed to fit a slope")
    if isinstance(samples, tuple):
        y, x3 = (np.asarray(s, dtype=float) for s in samples)
    else:
        rng = np.random.default_rng(seed)
        y = rng.uniform(0.0, 1.0, size=(int(samples), 2)) * np.array(chart.lengths)
        x3 = rng.uniform(-1.0, 1.0, size=int(samples))
    lame = lame or LameParameters(1.0, 1.0)
    frame = build_surface_frame(chart, y)
    A0 = tensor3d_limit(frame, lame).components
    sups = {q: [] for q in EXPANSION_QUANTITIES}
    for eps in eps_list:
        vf = volume_frame_from_surface(frame, eps, x3)
        A = tensor3d_exact(vf, lame).components
        sups["A(eps)-A(0)"].append(np.max(np.abs(A - A0)))
        sups["g(eps)-a"].append(np.max(np.abs(vf.vol_sqrt**2 - frame.area_sqrt**2)))
        sups["Gamma^s_a3(eps)+b^s_a"].append(np.max(np.abs(vf.christoffel3[..., :2, :2, 2] + frame.curv_mixed)))
        lin = frame.a_contra[..., :2, :] + eps * x3[..., None, None] * np.einsum(
            "...as,...sk->...ak", frame.curv_mixed, frame.a_contra[..., :2, :]
        )
        sups["g^a(eps)-a^a-eps*x3*b^a_s*a^s"].append(
            np.max(np.linalg.norm(vf.g_contra[..., :2, :] - lin, axis=-1))
        )
    rows = []
    for q in EXPANSION_QUANTITIES:
        slope = _loglog_slope(eps_list, sups[q])
        rows.extend(ExpansionRow(q, e, float(s), slope) for e, s in zip(eps_list, sups[q]))
    return rows
