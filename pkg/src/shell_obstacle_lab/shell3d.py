"""Trilinear hexahedral discretisation of the scaled penalised shell problem.

The fixed domain is the parameter rectangle times (-1, 1) in the scaled
transverse coordinate x3.  Unknowns are covariant components (v_1, v_2, v_3)
with respect to the shifted contravariant basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .elasticity import FieldJet3D, LameParameters, scaled_strains, tensor3d_exact
from .geometry import Chart, VolumeFrame, build_surface_frame, volume_frame_from_surface
from .penalty import InfeasibleError, ObstacleSpec, PenaltyConfig, PenaltyTerm, SolveReport, solve_penalized
from .shell2d import Mesh2D, gauss_legendre

__all__ = [
    "DisplacementField3D",
    "LoadSpec3D",
    "Mesh3D",
    "ScaledSolution",
    "ScaledSystem",
    "StrainDiagnostics",
    "assemble_scaled",
    "average_thickness",
    "build_scaled_system",
    "limit_strain_check",
    "solve_scaled",
]

SHEAR_MODES = ("full", "ans")

# reference corners of the unit cube, lexicographic in (t1, t2, t3) with t1 fastest
_CORNERS = np.array([(i, j, k) for k in (0, 1) for j in (0, 1) for i in (0, 1)], dtype=float)


@dataclass(frozen=True)
class Mesh3D:
    """The 2D grid extruded into ``n3`` equal layers over x3 in [-1, 1].

    Node (i, j, k) has id k * n_nodes_2d + j (n1 + 1) + i.  The clamped
    lateral faces are the extrusions of the 2D clamped edges.
    """

    base: Mesh2D
    n3: int = 4

    def __post_init__(self):
        if self.n3 < 1:
            raise ValueError("need at least one layer")

    @property
    def n_nodes(self):
        return self.base.n_nodes * (self.n3 + 1)

    @property
    def n_cells(self):
        return self.base.n_elements * self.n3

    @property
    def layer_coords(self):
        return np.linspace(-1.0, 1.0, self.n3 + 1)

    def node_coords(self) -> np.ndarray:
        """(n_nodes, 3) rows (y1, y2, x3)."""
        y = self.base.node_coords()
        x3 = self.layer_coords
        return np.column_stack([np.tile(y, (self.n3 + 1, 1)), np.repeat(x3, len(y))])

    def cell_nodes(self) -> np.ndarray:
        """(n_cells, 8) node ids in the local corner order; cell id = layer * n_el_2d + e2d."""
        en = self.base.element_nodes()  # (ll, lr, ur, ul)
        quad = en[:, [0, 1, 3, 2]]  # lexicographic (t1 fastest)
        nn = self.base.n_nodes
        cells = []
        for k in range(self.n3):
            cells.append(np.hstack([quad + k * nn, quad + (k + 1) * nn]))
        return np.vstack(cells)

    def cell_origin(self) -> np.ndarray:
        org = self.base.element_origin()
        dz = 2.0 / self.n3
        return np.vstack([np.column_stack([org, np.full(len(org), -1.0 + k * dz)]) for k in range(self.n3)])

    @property
    def h(self):
        h1, h2 = self.base.h
        return h1, h2, 2.0 / self.n3

    def clamped_nodes(self) -> np.ndarray:
        ids2 = np.unique(np.concatenate([self.base.edge_nodes(e) for e in self.base.clamped]))
        nn = self.base.n_nodes
        return np.concatenate([ids2 + k * nn for k in range(self.n3 + 1)])

    def constrained(self) -> np.ndarray:
        nodes = self.clamped_nodes()
        return np.sort(np.concatenate([nodes + c * self.n_nodes for c in range(3)]))

    def free(self) -> np.ndarray:
        mask = np.ones(3 * self.n_nodes, dtype=bool)
        mask[self.constrained()] = False
        return np.flatnonzero(mask)

    def cell_dofs(self) -> np.ndarray:
        cn = self.cell_nodes()
        return np.hstack([cn + c * self.n_nodes for c in range(3)])


def _trilinear(ref, h):
    """Values (np, 8) and physical gradients (np, 8, 3) at reference points in [0,1]^3."""
    ref = np.atleast_2d(ref)
    lin = np.where(_CORNERS[None, :, :] == 1.0, ref[:, None, :], 1.0 - ref[:, None, :])  # (np, 8, 3)
    dlin = np.where(_CORNERS[None, :, :] == 1.0, 1.0, -1.0) / np.asarray(h)
    N = lin.prod(axis=2)
    dN = np.empty(N.shape + (3,))
    for d in range(3):
        others = [k for k in range(3) if k != d]
        dN[..., d] = dlin[:, :, d] * lin[..., others[0]] * lin[..., others[1]]
    return N, dN


def _reference_quadrature(order=2):
    t, w = gauss_legendre(order)
    pts = np.array([(a, b, c) for c in t for b in t for a in t])
    wts = np.array([wa * wb * wc for wc in w for wb in w for wa in w])
    return pts, wts


@dataclass(frozen=True)
class LoadSpec3D:
    """Contravariant body-force components f^i, constants or callables of (y, x3)."""

    components: tuple = (0.0, 0.0, 0.0)

    def evaluate(self, y, x3) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = np.empty(y.shape[:-1] + (3,))
        for i, c in enumerate(self.components):
            out[..., i] = c(y, x3) if callable(c) else float(c)
        return out


@dataclass
class ScaledSystem:
    mesh: Mesh3D
    chart: Chart
    lame: LameParameters
    eps: float
    shear: str
    frames: VolumeFrame  # batch (n_cells, nq)
    weights: np.ndarray  # (n_cells, nq), includes sqrt(g)
    values: np.ndarray  # (nq, 24, 3) basis values per component
    strain_ops: np.ndarray  # (n_cells, nq, 24, 3, 3)
    stiffness: sp.csr_matrix


def _cell_jets(N, dN):
    """Local 24-DOF jets from scalar trilinear tables, shapes (np, 24, 3) and (np, 24, 3, 3)."""
    npnt = N.shape[0]
    values = np.zeros((npnt, 24, 3))
    grad = np.zeros((npnt, 24, 3, 3))
    for c in range(3):
        values[:, 8 * c : 8 * (c + 1), c] = N
        grad[:, 8 * c : 8 * (c + 1), c, :] = dN
    return values, grad


def _frames_at(mesh: Mesh3D, chart: Chart, eps: float, ref):
    """Volume frames at reference points ``ref`` (np, 3) of every cell: batch (n_cells, np)."""
    h = np.array(mesh.h)
    pts = mesh.cell_origin()[:, None, :] + ref[None, :, :] * h
    surf = build_surface_frame(chart, pts[..., :2])
    return volume_frame_from_surface(surf, eps, pts[..., 2])


def _strain_ops(mesh, chart, eps, ref):
    N, dN = _trilinear(ref, mesh.h)
    values, grad = _cell_jets(N, dN)
    vf = _frames_at(mesh, chart, eps, ref)
    nc = mesh.n_cells
    jets = FieldJet3D(
        np.broadcast_to(values, (nc,) + values.shape), np.broadcast_to(grad, (nc,) + grad.shape)
    )
    vf_exp = _expand_volume(vf, 2)
    return vf, values, scaled_strains(vf_exp, jets, eps)


def _expand_volume(vf: VolumeFrame, axis: int) -> VolumeFrame:
    return VolumeFrame(
        eps=vf.eps,
        x3=np.expand_dims(vf.x3, axis),
        surface=vf.surface.expand(axis),
        position=np.expand_dims(vf.position, axis),
        g_cov=np.expand_dims(vf.g_cov, axis),
        g_contra=np.expand_dims(vf.g_contra, axis),
        metric_contra=np.expand_dims(vf.metric_contra, axis),
        vol_sqrt=np.expand_dims(vf.vol_sqrt, axis),
        christoffel3=np.expand_dims(vf.christoffel3, axis),
    )


def _ans_shear(mesh, chart, eps, ref, ops):
    """Replace e_13 and e_23 by assumed fields tied at cell edge midpoints.

    e_13 is sampled on the lines t1 = 1/2, t2 in {0, 1} and interpolated
    linearly in t2; e_23 on t2 = 1/2, t1 in {0, 1}, interpolated in t1.  The
    transverse position t3 is that of each quadrature point.
    """
    ops = ops.copy()
    for comp, (free_axis, tie_axis) in ((0, (0, 1)), (1, (1, 0))):
        lo = ref.copy()
        hi = ref.copy()
        lo[:, free_axis] = hi[:, free_axis] = 0.5
        lo[:, tie_axis] = 0.0
        hi[:, tie_axis] = 1.0
        _, _, e_lo = _strain_ops(mesh, chart, eps, lo)
        _, _, e_hi = _strain_ops(mesh, chart, eps, hi)
        s = ref[:, tie_axis][None, :, None]
        tied = (1.0 - s) * e_lo[..., comp, 2] + s * e_hi[..., comp, 2]
        ops[..., comp, 2] = tied
        ops[..., 2, comp] = tied
    return ops


def build_scaled_system(mesh: Mesh3D, chart: Chart, lame: LameParameters, eps: float, shear: str = "full") -> ScaledSystem:
    if shear not in SHEAR_MODES:
        raise ValueError(f"unknown shear treatment {shear!r}; expected one of {SHEAR_MODES}")
    ref, rw = _reference_quadrature(2)
    vf, values, ops = _strain_ops(mesh, chart, eps, ref)
    if shear == "ans":
        ops = _ans_shear(mesh, chart, eps, ref, ops)
    weights = rw[None, :] * np.prod(mesh.h) * vf.vol_sqrt
    A = tensor3d_exact(vf, lame).components
    stress = np.einsum("cqijkl,cqnkl->cqnij", A, ops)
    local = np.einsum("cq,cqmij,cqnij->cmn", weights, ops, stress)
    dofs = mesh.cell_dofs()
    rows = np.repeat(dofs, 24, axis=1).ravel()
    cols = np.tile(dofs, (1, 24)).ravel()
    n = 3 * mesh.n_nodes
    K = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    return ScaledSystem(mesh, chart, lame, float(eps), shear, vf, weights, values, ops, K)


def assemble_scaled(mesh: Mesh3D, chart: Chart, lame: LameParameters, eps: float, shear: str = "full") -> sp.csr_matrix:
    """Matrix of int A^{ijkl}(eps) e_kl(eps; u) e_ij(eps; v) sqrt(g(eps)) dx over all DOFs."""
    return build_scaled_system(mesh, chart, lame, eps, shear).stiffness


@dataclass
class DisplacementField3D:
    mesh: Mesh3D
    coefficients: np.ndarray

    def components(self) -> np.ndarray:
        """(n_nodes, 3) nodal covariant components."""
        return self.coefficients.reshape(3, self.mesh.n_nodes).T


def average_thickness(u: DisplacementField3D) -> np.ndarray:
    """Half the x3-integral of the trilinear field at every 2D node, shape (n_nodes_2d, 3).

    The field is linear in x3 on each layer, so the trapezoid rule over layers is exact.
    """
    mesh = u.mesh
    nn = mesh.base.n_nodes
    layers = u.components().reshape(mesh.n3 + 1, nn, 3)
    dz = 2.0 / mesh.n3
    w = np.full(mesh.n3 + 1, dz)
    w[0] = w[-1] = 0.5 * dz
    return 0.5 * np.einsum("k,kni->ni", w, layers)


@dataclass
class StrainDiagnostics:
    transverse_shear: float  # || e_a3 / eps ||
    transverse_normal: float  # || e_33 / eps + lam/(lam+2mu) a^{ab} e_ab / eps ||
    strain_norm: float  # || e(eps; u) ||


def limit_strain_check(system: ScaledSystem, u: DisplacementField3D) -> StrainDiagnostics:
    """Discrete L2 norms over the quadrature points of the limit-strain relations."""
    eps = system.eps
    local = u.coefficients[system.mesh.cell_dofs()]  # (n_cells, 24)
    e = np.einsum("cqnij,cn->cqij", system.strain_ops, local)
    w = system.weights
    shear = np.sum(e[..., :2, 2] ** 2, axis=-1) / eps**2
    ainv = system.frames.surface.metric_contra
    trace = np.einsum("cqab,cqab->cq", ainv, e[..., :2, :2])
    normal = (e[..., 2, 2] + system.lame.transverse_ratio * trace) / eps
    return StrainDiagnostics(
        float(np.sqrt(np.sum(w * shear))),
        float(np.sqrt(np.sum(w * normal**2))),
        float(np.sqrt(np.sum(w * np.sum(e**2, axis=(-1, -2))))),
    )


@dataclass
class ScaledSolution:
    field: DisplacementField3D
    report: SolveReport
    kappa: float
    violation_norm: float
    min_slack: float
    diagnostics: StrainDiagnostics
    energy: float
    system: ScaledSystem = field(repr=False, default=None)


def load_vector_3d(system: ScaledSystem, load: LoadSpec3D) -> np.ndarray:
    vf = system.frames
    f = load.evaluate(vf.surface.y, vf.x3)  # (n_cells, nq, 3)
    local = system.eps**2 * np.einsum("cq,cqi,qni->cn", system.weights, f, system.values)
    F = np.zeros(3 * system.mesh.n_nodes)
    np.add.at(F, system.mesh.cell_dofs().ravel(), local.ravel())
    return F


def obstacle_operator_3d(system: ScaledSystem, obstacle: ObstacleSpec):
    """Affine map coefficients -> (theta + eps x3 a_3 + v_i g^i) . q at quadrature points."""
    q = obstacle.vector
    vf = system.frames
    offset = (vf.position @ q).ravel()
    proj = vf.g_contra @ q  # (n_cells, nq, 3)
    local = np.einsum("qni,cqi->cqn", system.values, proj)
    nc, nq, nloc = local.shape
    dofs = system.mesh.cell_dofs()
    rows = np.repeat(np.arange(nc * nq), nloc)
    cols = np.repeat(dofs, nq, axis=0).ravel()
    P = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(nc * nq, 3 * system.mesh.n_nodes)).tocsr()
    P.sum_duplicates()
    return offset, P, system.weights.ravel()


def solve_scaled(
    mesh: Mesh3D,
    chart: Chart,
    lame: LameParameters,
    load: LoadSpec3D,
    obstacle: ObstacleSpec | None,
    eps: float,
    config: PenaltyConfig | None = None,
    *,
    shear: str = "full",
    system: ScaledSystem | None = None,
) -> ScaledSolution:
    """Solve the scaled penalised problem; kappa defaults to sqrt(eps)."""
    if config is None:
        config = PenaltyConfig(kappa=float(np.sqrt(eps)))
    system = system or build_scaled_system(mesh, chart, lame, eps, shear)
    free = mesh.free()
    K = system.stiffness[free][:, free].tocsc()
    F = load_vector_3d(system, load)[free]
    penalty = None
    min_slack = float("inf")
    if obstacle is not None:
        offset, P, w = obstacle_operator_3d(system, obstacle)
        if offset.min() < 0:
            raise InfeasibleError(f"undeformed shell violates the obstacle: min slack {offset.min():.3e}")
        penalty = PenaltyTerm(offset, P[:, free], w, eps / config.kappa)
    report = solve_penalized(K, F, penalty, config)
    u = np.zeros(3 * mesh.n_nodes)
    u[free] = report.solution
    fld = DisplacementField3D(mesh, u)
    viol = 0.0
    if penalty is not None:
        viol = penalty.violation_norm(report.solution)
        min_slack = float(penalty.position(report.solution).min())
    energy = 0.5 * float(report.solution @ (K @ report.solution))
    return ScaledSolution(fld, report, config.kappa, viol, min_slack, limit_strain_check(system, fld), energy, system)
