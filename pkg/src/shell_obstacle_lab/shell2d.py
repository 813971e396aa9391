"""Finite-element discretisation of the flexural limit problem on a rectangle.

Unknowns are the covariant components (eta_1, eta_2, eta_3) of the middle
surface displacement.  eta_3 lives in the C1 bicubic Hermite space with
nodal DOFs (v, d1 v, d2 v, d12 v).  The tangential components use either
C0 bilinear elements (default) or the same Hermite space, which avoids
membrane locking on curved charts.  Inextensibility is imposed with a large
membrane penalty, the obstacle with the negative-part penalty at quadrature
points.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .elasticity import FieldJet2D, LameParameters, gamma_strain, rho_strain, tensor2d
from .geometry import Chart, SurfaceFrame, build_surface_frame
from .penalty import (
    ObstacleSpec,
    OracleResult,
    PenaltyConfig,
    PenaltyTerm,
    SolveReport,
    solve_penalized,
    vi_oracle,
)

__all__ = [
    "DEFAULT_CLAMPED",
    "DisplacementField2D",
    "LimitSolution",
    "LoadSpec2D",
    "Mesh2D",
    "ShellSystem2D",
    "assemble_flexural",
    "assemble_membrane",
    "assemble_plate_bending",
    "build_system",
    "component_h1_norms",
    "descale_2d",
    "gauss_legendre",
    "hermite_1d",
    "load_vector",
    "obstacle_operator",
    "energy_norm",
    "solve_limit",
]

EDGES = ("y1=0", "y1=L1", "y2=0", "y2=L2")

# plates are clamped all round; the cylinder panel only along the generatrix y1 = 0
DEFAULT_CLAMPED = {
    "plane": EDGES,
    "cylinder": ("y1=0",),
    "sphere": EDGES,
}


def gauss_legendre(n: int):
    """Gauss points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def hermite_1d(t, h):
    """Cubic Hermite shape functions on an interval of length h.

    Returns arrays (4, ...) of values, first and second derivatives with
    respect to the physical coordinate, ordered (v_left, dv_left, v_right,
    dv_right).
    """
    t = np.asarray(t, dtype=float)
    v = np.stack([1 - 3 * t**2 + 2 * t**3, h * (t - 2 * t**2 + t**3), 3 * t**2 - 2 * t**3, h * (-(t**2) + t**3)])
    d = np.stack([(-6 * t + 6 * t**2) / h, 1 - 4 * t + 3 * t**2, (6 * t - 6 * t**2) / h, -2 * t + 3 * t**2])
    dd = np.stack([(-6 + 12 * t) / h**2, (-4 + 6 * t) / h, (6 - 12 * t) / h**2, (-2 + 6 * t) / h])
    return v, d, dd


def _linear_1d(t, h):
    t = np.asarray(t, dtype=float)
    return np.stack([1 - t, t]), np.stack([-np.ones_like(t), np.ones_like(t)]) / h


@dataclass(frozen=True)
class Mesh2D:
    """Uniform n1 x n2 grid of rectangles on [0, L1] x [0, L2].

    Node (i, j) sits at (i h1, j h2) and has id j (n1 + 1) + i; element (i, j)
    has lower-left node (i, j) and id j n1 + i.
    """

    n1: int
    n2: int
    lengths: tuple = (1.0, 1.0)
    clamped: tuple = EDGES
    quad_order: int = 3

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("mesh needs at least one element per direction")
        if self.lengths[0] <= 0 or self.lengths[1] <= 0:
            raise ValueError("element sizes must be positive")
        bad = set(self.clamped) - set(EDGES)
        if bad:
            raise ValueError(f"unknown edge tags {sorted(bad)}; expected a subset of {EDGES}")
        if not self.clamped:
            raise ValueError("at least one clamped edge is required")
        object.__setattr__(self, "lengths", (float(self.lengths[0]), float(self.lengths[1])))
        object.__setattr__(self, "clamped", tuple(e for e in EDGES if e in self.clamped))

    @classmethod
    def for_chart(cls, chart: Chart, n1: int, n2: int, clamped=None, **kw) -> "Mesh2D":
        if clamped is None:
            clamped = DEFAULT_CLAMPED.get(chart.name, EDGES)
        return cls(n1, n2, chart.lengths, tuple(clamped), **kw)

    @property
    def h(self):
        return self.lengths[0] / self.n1, self.lengths[1] / self.n2

    @property
    def n_nodes(self):
        return (self.n1 + 1) * (self.n2 + 1)

    @property
    def n_elements(self):
        return self.n1 * self.n2

    def node_coords(self) -> np.ndarray:
        y1 = np.linspace(0.0, self.lengths[0], self.n1 + 1)
        y2 = np.linspace(0.0, self.lengths[1], self.n2 + 1)
        Y1, Y2 = np.meshgrid(y1, y2)
        return np.column_stack([Y1.ravel(), Y2.ravel()])

    def element_nodes(self) -> np.ndarray:
        """(n_elements, 4) node ids, counter-clockwise from the lower-left corner."""
        i, j = np.meshgrid(np.arange(self.n1), np.arange(self.n2))
        i, j = i.ravel(), j.ravel()
        s = self.n1 + 1
        ll = j * s + i
        return np.column_stack([ll, ll + 1, ll + s + 1, ll + s])

    def element_origin(self) -> np.ndarray:
        h1, h2 = self.h
        i, j = np.meshgrid(np.arange(self.n1), np.arange(self.n2))
        return np.column_stack([i.ravel() * h1, j.ravel() * h2])

    def quadrature(self):
        """Reference points (nq, 2) in [0,1]^2 and weights (nq,) including the element area."""
        t, w = gauss_legendre(self.quad_order)
        T1, T2 = np.meshgrid(t, t)
        W1, W2 = np.meshgrid(w, w)
        h1, h2 = self.h
        return np.column_stack([T1.ravel(), T2.ravel()]), (W1 * W2).ravel() * h1 * h2

    def quad_points(self) -> np.ndarray:
        """Physical quadrature points, shape (n_elements, nq, 2)."""
        ref, _ = self.quadrature()
        return self.element_origin()[:, None, :] + ref[None, :, :] * np.array(self.h)

    def edge_nodes(self, edge: str) -> np.ndarray:
        s = self.n1 + 1
        ids = np.arange(self.n_nodes).reshape(self.n2 + 1, s)
        return {"y1=0": ids[:, 0], "y1=L1": ids[:, -1], "y2=0": ids[0, :], "y2=L2": ids[-1, :]}[edge]


SPACES = ("bilinear", "hermite")


def _element_tables(mesh: Mesh2D, space: str):
    """Local shape tables at reference quadrature points.

    Returns (tang, bend) where each is a tuple (N, dN, d2N) with shapes
    (nq, nloc), (nq, nloc, 2), (nq, nloc, 2, 2).  Local ordering for the
    Hermite space is node-major with per-node DOFs (v, d1, d2, d12).
    """
    ref, _ = mesh.quadrature()
    h1, h2 = mesh.h
    t1, t2 = ref[:, 0], ref[:, 1]
    v1, d1, dd1 = hermite_1d(t1, h1)
    v2, d2, dd2 = hermite_1d(t2, h2)
    corners = ((0, 0), (1, 0), (1, 1), (0, 1))
    nq = ref.shape[0]
    N = np.zeros((nq, 16))
    dN = np.zeros((nq, 16, 2))
    d2N = np.zeros((nq, 16, 2, 2))
    for a, (cx, cy) in enumerate(corners):
        for k, (sx, sy) in enumerate(((0, 0), (1, 0), (0, 1), (1, 1))):
            ix, iy = 2 * cx + sx, 2 * cy + sy
            col = 4 * a + k
            N[:, col] = v1[ix] * v2[iy]
            dN[:, col, 0] = d1[ix] * v2[iy]
            dN[:, col, 1] = v1[ix] * d2[iy]
            d2N[:, col, 0, 0] = dd1[ix] * v2[iy]
            d2N[:, col, 1, 1] = v1[ix] * dd2[iy]
            d2N[:, col, 0, 1] = d2N[:, col, 1, 0] = d1[ix] * d2[iy]
    bend = (N, dN, d2N)
    if space == "hermite":
        return bend, bend
    l1, g1 = _linear_1d(t1, h1)
    l2, g2 = _linear_1d(t2, h2)
    Nl = np.zeros((nq, 4))
    dNl = np.zeros((nq, 4, 2))
    for a, (cx, cy) in enumerate(corners):
        Nl[:, a] = l1[cx] * l2[cy]
        dNl[:, a, 0] = g1[cx] * l2[cy]
        dNl[:, a, 1] = l1[cx] * g2[cy]
    return (Nl, dNl, np.zeros((nq, 4, 2, 2))), bend


@dataclass
class DofMap:
    """Global numbering: [eta_1 block | eta_2 block | eta_3 block]."""

    mesh: Mesh2D
    space: str

    @property
    def per_node_tangential(self):
        return 1 if self.space == "bilinear" else 4

    @property
    def block_sizes(self):
        nn = self.mesh.n_nodes
        k = self.per_node_tangential
        return (k * nn, k * nn, 4 * nn)

    @property
    def n_dofs(self):
        return sum(self.block_sizes)

    def offsets(self):
        b = self.block_sizes
        return (0, b[0], b[0] + b[1])

    def element_dofs(self) -> np.ndarray:
        """(n_elements, nloc) global DOFs ordered [eta1 local | eta2 local | eta3 local]."""
        en = self.mesh.element_nodes()
        k = self.per_node_tangential
        off = self.offsets()
        tang = (en[:, :, None] * k + np.arange(k)).reshape(len(en), -1)
        bend = (en[:, :, None] * 4 + np.arange(4)).reshape(len(en), -1)
        return np.hstack([tang + off[0], tang + off[1], bend + off[2]])

    def constrained(self) -> np.ndarray:
        """Sorted DOFs fixed to zero on the clamped edges."""
        mesh = self.mesh
        k = self.per_node_tangential
        off = self.offsets()
        fixed = set()
        for edge in mesh.clamped:
            nodes = mesh.edge_nodes(edge)
            # derivative along the edge: d2 on y1 edges, d1 on y2 edges
            tangential = 2 if edge.startswith("y1") else 1
            for n in nodes:
                for comp in range(2):
                    base = off[comp] + k * n
                    fixed.add(base)
                    if k == 4:
                        fixed.add(base + tangential)
                fixed.update(off[2] + 4 * n + np.arange(4))
        return np.array(sorted(fixed), dtype=int)

    def free(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.constrained()] = False
        return np.flatnonzero(mask)


@dataclass(frozen=True)
class LoadSpec2D:
    """Contravariant surface load components p^i, constants or callables of y (shape (..., 2))."""

    components: tuple = (0.0, 0.0, 0.0)

    def evaluate(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = np.empty(y.shape[:-1] + (3,))
        for i, c in enumerate(self.components):
            out[..., i] = c(y) if callable(c) else float(c)
        return out

    @classmethod
    def from_3d(cls, f3d, nodes=5) -> "LoadSpec2D":
        """Integrate a body force f^i(y, x3) through the thickness.

        Constant components integrate to twice their value; callables are
        integrated with Gauss-Legendre rule of ``nodes`` points (exact for
        polynomials in x3 of degree < 2 nodes).
        """
        x, w = np.polynomial.legendre.leggauss(nodes)
        comps = []
        for c in f3d:
            if callable(c):
                comps.append(lambda y, c=c: sum(wi * c(y, xi) for xi, wi in zip(x, w)))
            else:
                comps.append(2.0 * float(c))
        return cls(tuple(comps))

    def scaled(self, factor: float) -> "LoadSpec2D":
        comps = tuple((lambda y, c=c: factor * c(y)) if callable(c) else factor * float(c) for c in self.components)
        return LoadSpec2D(comps)


@dataclass
class ShellSystem2D:
    """Assembled discrete operators for one mesh/chart/material."""

    mesh: Mesh2D
    chart: Chart
    lame: LameParameters
    space: str
    dofmap: DofMap
    frames: SurfaceFrame  # batch shape (n_elements, nq)
    weights: np.ndarray  # (n_elements, nq), quadrature weight times sqrt(a)
    values: np.ndarray  # (n_elements, nq, nloc, 3) basis values per component
    grads: np.ndarray  # (n_elements, nq, nloc, 3, 2) basis parameter gradients
    gamma_ops: np.ndarray  # (n_elements, nq, nloc, 2, 2)
    rho_ops: np.ndarray
    flexural: sp.csr_matrix  # without the flexural factor
    membrane: sp.csr_matrix


def _local_jets(mesh: Mesh2D, space: str, n_el: int):
    """Jets of every local basis function, shape (n_el, nq, nloc, ...)."""
    (Nt, dNt, _), (Nb, dNb, d2Nb) = _element_tables(mesh, space)
    nq, kt = Nt.shape
    kb = Nb.shape[1]
    nloc = 2 * kt + kb
    values = np.zeros((nq, nloc, 3))
    grad = np.zeros((nq, nloc, 3, 2))
    hess = np.zeros((nq, nloc, 2, 2))
    for comp in range(2):
        sl = slice(comp * kt, (comp + 1) * kt)
        values[:, sl, comp] = Nt
        grad[:, sl, comp, :] = dNt
    sl = slice(2 * kt, nloc)
    values[:, sl, 2] = Nb
    grad[:, sl, 2, :] = dNb
    hess[:, sl] = d2Nb
    shape = (n_el, nq, nloc)
    return FieldJet2D(
        np.broadcast_to(values, shape + (3,)),
        np.broadcast_to(grad, shape + (3, 2)),
        np.broadcast_to(hess, shape + (2, 2)),
    )


def _assemble(dofmap: DofMap, local: np.ndarray) -> sp.csr_matrix:
    """Deterministic scatter of element matrices (n_el, nloc, nloc)."""
    edofs = dofmap.element_dofs()
    nloc = edofs.shape[1]
    rows = np.repeat(edofs, nloc, axis=1).ravel()
    cols = np.tile(edofs, (1, nloc)).ravel()
    n = dofmap.n_dofs
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    return mat


def _energy_matrix(tensor, ops_a, ops_b, weights):
    # sum_q w_q A^{abst} op_st[j] op_ab[i]
    stress = np.einsum("eqabst,eqjst->eqjab", tensor, ops_b)
    return np.einsum("eq,eqiab,eqjab->eij", weights, ops_a, stress)


def build_system(mesh: Mesh2D, chart: Chart, lame: LameParameters, space: str = "bilinear") -> ShellSystem2D:
    if space not in SPACES:
        raise ValueError(f"unknown tangential space {space!r}; expected one of {SPACES}")
    frames = build_surface_frame(chart, mesh.quad_points())
    _, qw = mesh.quadrature()
    weights = qw[None, :] * frames.area_sqrt
    dofmap = DofMap(mesh, space)
    jets = _local_jets(mesh, space, mesh.n_elements)
    fx = frames.expand(2)
    gam = gamma_strain(fx, jets)
    rho = rho_strain(fx, jets)
    A = tensor2d(frames, lame).components
    flex = _assemble(dofmap, _energy_matrix(A, rho, rho, weights))
    memb = _assemble(dofmap, _energy_matrix(A, gam, gam, weights))
    return ShellSystem2D(mesh, chart, lame, space, dofmap, frames, weights, jets.values, jets.grad, gam, rho, flex, memb)


def assemble_flexural(mesh: Mesh2D, chart: Chart, lame: LameParameters, space="bilinear", factor=1.0 / 3.0):
    """Matrix of factor * int a^{abst} rho_st(zeta) rho_ab(eta) sqrt(a) dy (all DOFs, no BCs)."""
    return factor * build_system(mesh, chart, lame, space).flexural


def assemble_membrane(mesh: Mesh2D, chart: Chart, lame: LameParameters, space="bilinear"):
    """Matrix of int a^{abst} gamma_st(zeta) gamma_ab(eta) sqrt(a) dy (all DOFs, no BCs)."""
    return build_system(mesh, chart, lame, space).membrane


def load_vector(system: ShellSystem2D, load: LoadSpec2D) -> np.ndarray:
    p = load.evaluate(system.frames.y)  # (n_el, nq, 3)
    local = np.einsum("eq,eqi,eqji->ej", system.weights, p, system.values)
    F = np.zeros(system.dofmap.n_dofs)
    np.add.at(F, system.dofmap.element_dofs().ravel(), local.ravel())
    return F


def obstacle_operator(system: ShellSystem2D, obstacle: ObstacleSpec):
    """Affine map coefficients -> (theta + eta_i a^i) . q at every quadrature point."""
    q = obstacle.vector
    fr = system.frames
    offset = (fr.position @ q).ravel()
    proj_i = fr.a_contra @ q  # (n_el, nq, 3)
    local = np.einsum("eqji,eqi->eqj", system.values, proj_i)
    n_el, nq, nloc = local.shape
    edofs = system.dofmap.element_dofs()
    rows = np.repeat(np.arange(n_el * nq), nloc)
    cols = np.repeat(edofs, nq, axis=0).ravel()
    P = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n_el * nq, system.dofmap.n_dofs)).tocsr()
    P.sum_duplicates()
    return offset, P, system.weights.ravel()


@dataclass
class DisplacementField2D:
    mesh: Mesh2D
    space: str
    coefficients: np.ndarray

    @property
    def dofmap(self):
        return DofMap(self.mesh, self.space)

    def nodal(self):
        """Per-node arrays: dict with eta1, eta2, eta3 values and available derivative DOFs."""
        off = self.dofmap.offsets()
        nn = self.mesh.n_nodes
        k = self.dofmap.per_node_tangential
        c = self.coefficients
        out = {}
        for comp in range(2):
            block = c[off[comp] : off[comp] + k * nn].reshape(nn, k)
            out[f"eta{comp + 1}"] = block[:, 0]
            if k == 4:
                out[f"d1eta{comp + 1}"] = block[:, 1]
                out[f"d2eta{comp + 1}"] = block[:, 2]
                out[f"d12eta{comp + 1}"] = block[:, 3]
        block = c[off[2] :].reshape(nn, 4)
        out["eta3"] = block[:, 0]
        out["d1eta3"] = block[:, 1]
        out["d2eta3"] = block[:, 2]
        out["d12eta3"] = block[:, 3]
        return out

    @classmethod
    def from_nodal(cls, mesh: Mesh2D, space: str, nodal: dict) -> "DisplacementField2D":
        dm = DofMap(mesh, space)
        nn = mesh.n_nodes
        parts = []
        for comp in (1, 2):
            if dm.per_node_tangential == 4:
                cols = [nodal[f"eta{comp}"], nodal[f"d1eta{comp}"], nodal[f"d2eta{comp}"], nodal[f"d12eta{comp}"]]
                parts.append(np.column_stack(cols).ravel())
            else:
                parts.append(np.asarray(nodal[f"eta{comp}"], dtype=float).reshape(nn))
        parts.append(np.column_stack([nodal["eta3"], nodal["d1eta3"], nodal["d2eta3"], nodal["d12eta3"]]).ravel())
        return cls(mesh, space, np.concatenate(parts))


@dataclass
class LimitSolution:
    field: DisplacementField2D
    report: SolveReport
    flexural_energy: float
    membrane_energy: float
    min_slack: float
    membrane_weight: float
    coercivity: float | None = None
    oracle: OracleResult | None = None
    oracle_error: float | None = None
    system: ShellSystem2D | None = field(default=None, repr=False)
    flexural_factor: float = 1.0 / 3.0


def _membrane_weight(flex, memb, free, relative):
    fd = flex.diagonal()[free]
    md = memb.diagonal()[free]
    if md.max() <= 0:
        return 0.0
    return float(fd.max() / md.max() / relative)


def energy_norm(K, u):
    return float(np.sqrt(max(float(u @ (K @ u)), 0.0)))


def solve_limit(
    mesh: Mesh2D,
    chart: Chart,
    lame: LameParameters,
    load: LoadSpec2D,
    obstacle: ObstacleSpec | None,
    config: PenaltyConfig = PenaltyConfig(kappa=1e-6),
    *,
    space: str = "bilinear",
    membrane_relative: float = 1e-8,
    tol_m: float = 1e-6,
    flexural_factor: float = 1.0 / 3.0,
    oracle_check: bool | None = None,
    coercivity: bool = False,
    system: ShellSystem2D | None = None,
) -> LimitSolution:
    """Solve the penalised flexural obstacle problem.

    The membrane energy carries weight (max flexural diagonal)/(max membrane
    diagonal)/``membrane_relative``, so the inextensibility penalty scales
    with the flexural operator.  ``oracle_check`` (default: automatic when
    there are at most 200 free unknowns) additionally solves the same
    discrete QP exactly and records the relative energy-norm gap.
    """
    system = system or build_system(mesh, chart, lame, space)
    free = system.dofmap.free()
    KF = flexural_factor * system.flexural
    w_m = _membrane_weight(KF, system.membrane, free, membrane_relative)
    K = (KF + w_m * system.membrane).tocsr()
    Kf = K[free][:, free].tocsc()
    F = load_vector(system, load)[free]

    penalty = None
    if obstacle is not None:
        offset, P, wq = obstacle_operator(system, obstacle)
        min_slack = float(offset.min())
        if min_slack < 0:
            from .penalty import InfeasibleError

            raise InfeasibleError(f"undeformed surface violates the obstacle: min slack {min_slack:.3e}")
        P = P[:, free]
        penalty = PenaltyTerm(offset, P, wq, 1.0 / config.kappa)
    report = solve_penalized(Kf, F, penalty, config)
    u = np.zeros(system.dofmap.n_dofs)
    u[free] = report.solution

    e_flex = 0.5 * float(u @ (KF @ u))
    e_mem = 0.5 * float(u @ (system.membrane @ u))
    if e_mem > tol_m * max(e_flex, np.finfo(float).tiny):
        warnings.warn(
            f"membrane energy {e_mem:.3e} exceeds {tol_m:g} x flexural energy; the mesh may admit no adequate "
            "inextensional approximation",
            RuntimeWarning,
            stacklevel=2,
        )
    if obstacle is not None:
        pos = penalty.position(report.solution)
        min_slack = float(pos.min())
    else:
        min_slack = float("inf")

    sol = LimitSolution(
        DisplacementField2D(mesh, system.space, u), report, e_flex, e_mem, min_slack, w_m, system=system,
        flexural_factor=flexural_factor,
    )
    if coercivity:
        from scipy.sparse.linalg import eigsh

        sol.coercivity = float(eigsh(Kf, k=1, sigma=0, which="LM", return_eigenvectors=False)[0])
    if oracle_check is None:
        oracle_check = obstacle is not None and free.size <= 200
    if oracle_check and obstacle is not None:
        orc = vi_oracle(Kf.toarray(), F, penalty.offset, penalty.projection.toarray())
        sol.oracle = orc
        ref = energy_norm(Kf, orc.solution)
        sol.oracle_error = energy_norm(Kf, report.solution - orc.solution) / max(ref, np.finfo(float).tiny)
    return sol


def component_h1_norms(system: ShellSystem2D, coefficients) -> np.ndarray:
    """H1(omega) norms of eta_1, eta_2, eta_3 in parameter coordinates, by quadrature."""
    local = np.asarray(coefficients)[system.dofmap.element_dofs()]
    vals = np.einsum("eqni,en->eqi", system.values, local)
    grads = np.einsum("eqnia,en->eqia", system.grads, local)
    dens = vals**2 + np.sum(grads**2, axis=-1)
    return np.sqrt(np.einsum("eq,eqi->i", system.weights, dens))


def descale_2d(field: DisplacementField2D, eps: float, load: LoadSpec2D):
    """Return the physical-domain data: unchanged displacement, loads eps^3 p, flexural factor eps^3 / 3."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    e3 = eps**3
    return DisplacementField2D(field.mesh, field.space, field.coefficients.copy()), load.scaled(e3), e3 / 3.0


def assemble_plate_bending(mesh: Mesh2D, lame: LameParameters) -> sp.csr_matrix:
    """Clamped-plate bending stiffness for the eta_3 Hermite block in Cartesian form.

    Uses D [nu (lap w)^2 + (1 - nu) w_ij w_ij] with Young's modulus and
    Poisson ratio derived from the Lame pair; written independently of the
    curvilinear machinery so it can serve as a cross-check on flat charts.
    """
    lam, mu = lame.lam, lame.mu
    E = mu * (3 * lam + 2 * mu) / (lam + mu)
    nu = lam / (2 * (lam + mu))
    D = 2 * E / (3 * (1 - nu**2))
    h1, h2 = mesh.h
    t, w = gauss_legendre(mesh.quad_order)
    v1, d1, dd1 = hermite_1d(t, h1)
    v2, d2, dd2 = hermite_1d(t, h2)
    ke = np.zeros((16, 16))
    corners = ((0, 0), (1, 0), (1, 1), (0, 1))
    idx = [(2 * cx + sx, 2 * cy + sy) for cx, cy in corners for sx, sy in ((0, 0), (1, 0), (0, 1), (1, 1))]
    for a in range(len(t)):
        for b in range(len(t)):
            wxx = np.array([dd1[i, a] * v2[j, b] for i, j in idx])
            wyy = np.array([v1[i, a] * dd2[j, b] for i, j in idx])
            wxy = np.array([d1[i, a] * d2[j, b] for i, j in idx])
            lap = wxx + wyy
            ke += (
                w[a] * w[b] * h1 * h2 * D
                * (nu * np.outer(lap, lap) + (1 - nu) * (np.outer(wxx, wxx) + np.outer(wyy, wyy) + 2 * np.outer(wxy, wxy)))
            )
    en = mesh.element_nodes()
    edofs = (en[:, :, None] * 4 + np.arange(4)).reshape(len(en), -1)
    rows = np.repeat(edofs, 16, axis=1).ravel()
    cols = np.tile(edofs, (1, 16)).ravel()
    n = 4 * mesh.n_nodes
    data = np.tile(ke.ravel(), len(en))
    mat = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    return mat
