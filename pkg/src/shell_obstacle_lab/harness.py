"""Experiment orchestration and all file I/O: configs, sweep CSVs, field dumps."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .elasticity import LameParameters, c0_exact, tensor3d_exact
from .geometry import Chart, expansion_report, make_chart
from .penalty import ObstacleSpec, PenaltyConfig, PenaltyTerm, solve_penalized, vi_oracle
from .shell2d import (
    DisplacementField2D,
    LoadSpec2D,
    Mesh2D,
    build_system,
    energy_norm,
    load_vector,
    obstacle_operator,
    solve_limit,
)
from .shell3d import (
    DisplacementField3D,
    LoadSpec3D,
    Mesh3D,
    _trilinear,
    average_thickness,
    solve_scaled,
)

__all__ = [
    "ConvergenceRow",
    "ExperimentConfig",
    "FIELD_HEADER",
    "KappaRow",
    "emit_field_dump",
    "h1_error",
    "load_config",
    "load_field_dump",
    "parse_config",
    "run_eps_sweep",
    "run_geometry_check",
    "run_kappa_sweep",
    "write_csv",
]

log = logging.getLogger(__name__)

FIELD_HEADER = "# shell-obstacle-lab field v1"
CONFIG_KEYS = ("chart", "mesh2d", "mesh3d", "lambda", "mu", "load", "q", "offset", "eps_list", "kappa_rule", "out_dir")


def _floats(text, n=None):
    vals = [float(v) for v in str(text).replace(" ", "").split(",") if v != ""]
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _dims(text, n):
    parts = str(text).lower().split("x")
    if len(parts) != n:
        raise ValueError(f"expected a size like {'x'.join(['N'] * n)}, got {text!r}")
    return tuple(int(p) for p in parts)


def parse_chart(text: str, offset=(0.0, 0.0, 0.0)) -> Chart:
    """``name`` or ``name:key=value;key=value``; lengths are given as ``L1xL2``."""
    name, _, opts = str(text).partition(":")
    kwargs = {}
    for item in filter(None, (o.strip() for o in opts.split(";"))):
        key, _, val = item.partition("=")
        key = key.strip()
        if key == "lengths":
            l1, l2 = (float(v) for v in val.lower().split("x"))
            kwargs["lengths"] = (l1, l2)
        else:
            kwargs[key] = float(val)
    return make_chart(name.strip(), offset=offset, **kwargs)


@dataclass(frozen=True)
class ExperimentConfig:
    chart: str = "plane"
    mesh2d: str = "8x8"
    mesh3d: str = "8x8x4"
    lam: float = 1.0
    mu: float = 1.0
    load: tuple = (0.0, 0.0, -1.0)
    q: tuple = (0.0, 0.0, 1.0)
    offset: tuple = (0.0, 0.0, 0.0)
    eps_list: tuple = (0.2, 0.1, 0.05)
    kappa_rule: str = "sqrt"
    out_dir: str = "out"

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        if not eps or any(e <= 0 for e in eps):
            raise ValueError("eps_list must hold positive values")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError(f"eps_list must be strictly decreasing, got {eps}")
        object.__setattr__(self, "eps_list", eps)
        self.make_chart()
        self.kappa(eps[0])
        self.space
        _dims(self.mesh3d, 3)

    # derived objects -------------------------------------------------
    def make_chart(self) -> Chart:
        return parse_chart(self.chart, self.offset)

    @property
    def lame(self) -> LameParameters:
        return LameParameters(self.lam, self.mu)

    @property
    def space(self) -> str:
        _, _, sp = self.mesh2d.partition("/")
        sp = sp or "bilinear"
        if sp not in ("bilinear", "hermite"):
            raise ValueError(f"unknown tangential space {sp!r}")
        return sp

    def make_mesh2d(self) -> Mesh2D:
        n1, n2 = _dims(self.mesh2d.partition("/")[0], 2)
        return Mesh2D.for_chart(self.make_chart(), n1, n2)

    def make_mesh3d(self) -> Mesh3D:
        n1, n2, n3 = _dims(self.mesh3d, 3)
        return Mesh3D(Mesh2D.for_chart(self.make_chart(), n1, n2), n3)

    @property
    def obstacle(self) -> ObstacleSpec:
        return ObstacleSpec(self.q)

    @property
    def load3d(self) -> LoadSpec3D:
        return LoadSpec3D(tuple(self.load))

    @property
    def load2d(self) -> LoadSpec2D:
        return LoadSpec2D.from_3d(tuple(self.load))

    def kappa(self, eps: float) -> float:
        rule = self.kappa_rule.strip()
        if rule == "sqrt":
            return math.sqrt(eps)
        kind, _, val = rule.partition(":")
        if kind == "fixed" and val:
            k = float(val)
            if k > 0:
                return k
        raise ValueError(f"kappa_rule must be 'sqrt' or 'fixed:<value>', got {rule!r}")


def parse_config(text: str) -> ExperimentConfig:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        if key not in CONFIG_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}; allowed keys are {', '.join(CONFIG_KEYS)}")
        raw[key] = val.strip()
    kw = {}
    for key, val in raw.items():
        if key in ("chart", "mesh2d", "mesh3d", "kappa_rule", "out_dir"):
            kw[key] = val
        elif key == "lambda":
            kw["lam"] = float(val)
        elif key == "mu":
            kw["mu"] = float(val)
        elif key in ("load", "q", "offset"):
            kw[key] = tuple(_floats(val, 3))
        elif key == "eps_list":
            kw[key] = tuple(_floats(val))
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        return parse_config(path.read_text())
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc


# CSV ------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


class _CsvWriter:
    """Row-by-row CSV writer that flushes after every row."""

    def __init__(self, path, columns):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(columns)
        self._fh.flush()

    def write(self, values):
        self._w.writerow([_fmt(v) for v in values])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_csv(path, rows):
    """Write dataclass rows with a header taken from the field names."""
    rows = list(rows)
    if not rows:
        raise ValueError("nothing to write")
    cols = [f.name for f in fields(rows[0])]
    with _CsvWriter(path, cols) as w:
        for r in rows:
            w.write([getattr(r, c) for c in cols])
    return Path(path)


# errors ---------------------------------------------------------------


def _nodal_weights(mesh: Mesh2D):
    h1, h2 = mesh.h
    w = np.full((mesh.n2 + 1, mesh.n1 + 1), h1 * h2)
    w[0, :] *= 0.5
    w[-1, :] *= 0.5
    w[:, 0] *= 0.5
    w[:, -1] *= 0.5
    return w.ravel()


def _grid_gradient(mesh: Mesh2D, v):
    """Second-order difference quotients (one-sided at the boundary) of nodal values."""
    h1, h2 = mesh.h
    grid = np.asarray(v, dtype=float).reshape(mesh.n2 + 1, mesh.n1 + 1)
    d2, d1 = np.gradient(grid, h2, h1, edge_order=2)
    return d1.ravel(), d2.ravel()


def h1_error(zeta: DisplacementField2D, averaged: np.ndarray) -> float:
    """Discrete H1 distance between a limit solution and a thickness-averaged field on the shared grid.

    Values and first derivatives are compared at nodes with trapezoid
    weights.  Derivatives of zeta come from its Hermite DOFs when available,
    otherwise from difference quotients; those of the average always from
    difference quotients.
    """
    mesh = zeta.mesh
    nod = zeta.nodal()
    w = _nodal_weights(mesh)
    total = 0.0
    for i in range(3):
        key = f"eta{i + 1}"
        ref = nod[key]
        if f"d1{key}" in nod:
            r1, r2 = nod[f"d1{key}"], nod[f"d2{key}"]
        else:
            r1, r2 = _grid_gradient(mesh, ref)
        a1, a2 = _grid_gradient(mesh, averaged[:, i])
        total += float(np.sum(w * ((averaged[:, i] - ref) ** 2 + (a1 - r1) ** 2 + (a2 - r2) ** 2)))
    return math.sqrt(total)


def _korn_ratio(sol) -> float:
    """eps^2 * sum_i ||u_i||_H1^2 / sum ||e(eps; u)||^2 over the quadrature points."""
    system = sol.system
    mesh = system.mesh
    from .shell3d import _reference_quadrature

    ref, _ = _reference_quadrature(2)
    N, dN = _trilinear(ref, mesh.h)
    comps = sol.field.components()[mesh.cell_nodes()]  # (n_cells, 8, 3)
    vals = np.einsum("qn,cni->cqi", N, comps)
    grads = np.einsum("qnj,cni->cqij", dN, comps)
    w = system.weights
    h1 = float(np.sum(w * (np.sum(vals**2, -1) + np.sum(grads**2, (-1, -2)))))
    e2 = sol.diagnostics.strain_norm**2
    if e2 == 0.0:
        return float("nan")
    return system.eps**2 * h1 / e2


# sweeps ---------------------------------------------------------------


@dataclass
class ConvergenceRow:
    eps: float
    kappa: float
    h1_error: float
    violation_norm: float
    violation_over_kappa: float
    iterations: int
    c0: float
    g0: float
    g1: float
    shear_diagnostic: float
    normal_diagnostic: float
    korn_ratio: float
    zeta_oracle_gap: float


@dataclass
class EpsSweepResult:
    rows: list
    csv_path: Path
    timing_path: Path
    zeta: object = field(repr=False, default=None)


def run_eps_sweep(config: ExperimentConfig, out_dir=None, name="eps_sweep.csv", shear="full") -> EpsSweepResult:
    """Solve the limit problem once and the scaled 3D problem for every eps; write one row per eps.

    Wall-clock times go to a separate ``*_timing.csv`` so that the main CSV
    is a deterministic function of the config.
    """
    out = Path(out_dir or config.out_dir)
    chart = config.make_chart()
    lame = config.lame
    mesh3 = config.make_mesh3d()
    mesh2 = mesh3.base
    if config.make_mesh2d().n1 != mesh2.n1 or config.make_mesh2d().n2 != mesh2.n2:
        raise ValueError("mesh2d and the in-plane part of mesh3d must coincide for the nodal comparison")
    obstacle = config.obstacle
    zeta = solve_limit(mesh2, chart, lame, config.load2d, obstacle, PenaltyConfig(kappa=1e-6), space=config.space)
    gap = zeta.oracle_error if zeta.oracle_error is not None else float("nan")

    rows = []
    csv_path = out / name
    timing_path = out / (Path(name).stem + "_timing.csv")
    cols = [f.name for f in fields(ConvergenceRow)]
    with _CsvWriter(csv_path, cols) as w, _CsvWriter(timing_path, ["eps", "wall_seconds"]) as tw:
        for eps in config.eps_list:
            t0 = time.perf_counter()
            kappa = config.kappa(eps)
            sol = solve_scaled(mesh3, chart, lame, config.load3d, obstacle, eps, PenaltyConfig(kappa=kappa), shear=shear)
            avg = average_thickness(sol.field)
            vf = sol.system.frames
            g = vf.vol_sqrt**2
            row = ConvergenceRow(
                eps=eps,
                kappa=kappa,
                h1_error=h1_error(zeta.field, avg),
                violation_norm=sol.violation_norm,
                violation_over_kappa=sol.violation_norm / kappa,
                iterations=sol.report.iterations,
                c0=c0_exact(tensor3d_exact(vf, lame)),
                g0=float(g.min()),
                g1=float(g.max()),
                shear_diagnostic=sol.diagnostics.transverse_shear,
                normal_diagnostic=sol.diagnostics.transverse_normal,
                korn_ratio=_korn_ratio(sol),
                zeta_oracle_gap=gap,
            )
            rows.append(row)
            w.write([getattr(row, c) for c in cols])
            tw.write([eps, time.perf_counter() - t0])
            log.info("eps=%g h1_error=%.6g", eps, row.h1_error)
    return EpsSweepResult(rows, csv_path, timing_path, zeta)


@dataclass
class KappaRow:
    kappa: float
    error: float
    violation_norm: float
    violation_over_kappa: float
    iterations: int


DEFAULT_KAPPAS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)


def run_kappa_sweep(config: ExperimentConfig, kappas=DEFAULT_KAPPAS, out_dir=None, name="kappa_sweep.csv"):
    """Penalty consistency on the 2D instance of ``config``: relative energy-norm gap to the exact QP solution."""
    out = Path(out_dir or config.out_dir)
    chart = config.make_chart()
    mesh = config.make_mesh2d()
    system = build_system(mesh, chart, config.lame, config.space)
    free = system.dofmap.free()
    if free.size > 200:
        raise ValueError(f"instance has {free.size} unknowns; the exact oracle is limited to 200")
    # assemble the same operator that solve_limit uses, then reuse it for every kappa
    base = solve_limit(mesh, chart, config.lame, config.load2d, None, space=config.space, system=system)
    K = (base.flexural_factor * system.flexural + base.membrane_weight * system.membrane)[free][:, free].tocsc()
    F = load_vector(system, config.load2d)[free]
    offset, P, wq = obstacle_operator(system, config.obstacle)
    if offset.min() < 0:
        raise ValueError("undeformed surface violates the obstacle")
    P = P[:, free]
    oracle = vi_oracle(K.toarray(), F, offset, P.toarray())
    ref = max(energy_norm(K, oracle.solution), np.finfo(float).tiny)
    rows = []
    with _CsvWriter(out / name, [f.name for f in fields(KappaRow)]) as w:
        for kappa in kappas:
            pen = PenaltyTerm(offset, P, wq, 1.0 / kappa)
            rep = solve_penalized(K, F, pen, PenaltyConfig(kappa=kappa))
            viol = pen.violation_norm(rep.solution)
            row = KappaRow(kappa, energy_norm(K, rep.solution - oracle.solution) / ref, viol, viol / kappa, rep.iterations)
            rows.append(row)
            w.write([row.kappa, row.error, row.violation_norm, row.violation_over_kappa, row.iterations])
    return rows, out / name


def run_geometry_check(chart: Chart | str, eps_list, samples=100, seed=0, out_path=None):
    if isinstance(chart, str):
        chart = parse_chart(chart)
    rows = expansion_report(chart, eps_list, samples=samples, seed=seed)
    if out_path is not None:
        write_csv(out_path, rows)
    return rows


# field dumps ----------------------------------------------------------

_COLS_2D = ["node", "y1", "y2", "eta1", "eta2", "eta3", "d1eta3", "d2eta3", "d12eta3"]
_EXTRA_HERMITE = [f"{d}eta{c}" for c in (1, 2) for d in ("d1", "d2", "d12")]
_COLS_3D = ["node", "y1", "y2", "x3", "v1", "v2", "v3"]


def emit_field_dump(fld, path, mesh_note=None):
    """Write a field as whitespace-separated text.

    2D columns: node y1 y2 eta1 eta2 eta3 d1eta3 d2eta3 d12eta3, plus the
    tangential derivative DOFs when the Hermite space is used.  3D columns:
    node y1 y2 x3 v1 v2 v3.  Every float is written in shortest round-trip
    form so loading returns identical coefficients.
    """
    path = Path(path)
    if isinstance(fld, DisplacementField2D):
        mesh = fld.mesh
        cols = _COLS_2D + (_EXTRA_HERMITE if fld.space == "hermite" else [])
        nod = fld.nodal()
        coords = mesh.node_coords()
        data = [np.arange(mesh.n_nodes), coords[:, 0], coords[:, 1]] + [nod[c] for c in cols[3:]]
        meta = f"# kind=2d n1={mesh.n1} n2={mesh.n2} L1={mesh.lengths[0]!r} L2={mesh.lengths[1]!r} space={fld.space} clamped={','.join(mesh.clamped)}"
    elif isinstance(fld, DisplacementField3D):
        mesh = fld.mesh
        cols = _COLS_3D
        coords = mesh.node_coords()
        comps = fld.components()
        data = [np.arange(mesh.n_nodes), coords[:, 0], coords[:, 1], coords[:, 2], comps[:, 0], comps[:, 1], comps[:, 2]]
        b = mesh.base
        meta = f"# kind=3d n1={b.n1} n2={b.n2} n3={mesh.n3} L1={b.lengths[0]!r} L2={b.lengths[1]!r} clamped={','.join(b.clamped)}"
    else:
        raise TypeError(f"cannot dump {type(fld).__name__}")
    lines = [FIELD_HEADER, meta, "# " + " ".join(cols)]
    if mesh_note:
        lines.append(f"# {mesh_note}")
    for row in zip(*data):
        lines.append(" ".join([str(int(row[0]))] + [repr(float(x)) for x in row[1:]]))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write field dump {path}: {exc}") from exc
    return path


def load_field_dump(path):
    path = Path(path)
    try:
        text = path.read_text().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read field dump {path}: {exc}") from exc
    if not text or text[0] != FIELD_HEADER:
        raise ValueError(f"{path}: missing header {FIELD_HEADER!r}")
    meta = dict(item.split("=", 1) for item in text[1][1:].split())
    cols = text[2][1:].split()
    body = np.array([[float(x) for x in ln.split()] for ln in text[3:] if ln and not ln.startswith("#")])
    table = {c: body[:, i] for i, c in enumerate(cols)}
    clamped = tuple(meta["clamped"].split(","))
    lengths = (float(meta["L1"]), float(meta["L2"]))
    base = Mesh2D(int(meta["n1"]), int(meta["n2"]), lengths, clamped)
    if meta["kind"] == "2d":
        return DisplacementField2D.from_nodal(base, meta["space"], table)
    mesh = Mesh3D(base, int(meta["n3"]))
    return DisplacementField3D(mesh, np.concatenate([table["v1"], table["v2"], table["v3"]]))
