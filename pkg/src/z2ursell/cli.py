"""Command-line experiments writing CSV reports.

Configuration is resolved as: command defaults, then a key=value config file,
then flags (flags win). Every CSV starts with '#' comment lines holding the
resolved configuration; the only timestamp lives in those comments.

Beta conventions: exact and Monte Carlo commands use the model coupling
(one term per plaquette). Cluster commands use the vortex-activity coupling
exp(-4 beta |supp|), which is model coupling 2 beta; both columns are written.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import logging
import math
import random
import sys
from collections import Counter
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, fields, replace

from . import __version__, cluster, loops, model, ursell
from .dec import BoxGeometry, Chain, KCell, boundary_chain, edge
from .errors import CapacityError, DegenerateInputError, DomainError

log = logging.getLogger("z2ursell")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECK = 3
EXIT_CAPACITY = 4


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    box: tuple[int, ...] | None = None
    dim: int | None = None
    beta: tuple[float, ...] = ()
    loop: str | None = None
    edges: str | None = None
    base: tuple[int, ...] | None = None
    n: int | None = None
    method: str = "exact"
    sweeps: int = 20000
    seed: int | None = None
    cutoff: int = 8
    probe: int = 2
    exclude_boundary: bool | None = None
    interaction: str | None = None
    max_len: int = 14
    simple_parts: bool = True
    tuples: int = 50
    tol: float | None = None
    workers: int | None = None
    out: str | None = None

    def resolved(self) -> list[tuple[str, str]]:
        return [(f.name, _show(getattr(self, f.name))) for f in fields(self)]


def _show(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_show(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


# --- parsing ---------------------------------------------------------------

def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.replace(" ", "").split(",") if x != "")
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.replace(" ", "").split(",") if x != "")
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def _float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}") from None


_CONVERT: dict[str, Callable[[str], object]] = {
    "box": _ints, "base": _ints, "beta": _floats,
    "dim": _int, "n": _int, "sweeps": _int, "seed": _int, "cutoff": _int, "probe": _int,
    "max_len": _int, "tuples": _int, "workers": _int,
    "exclude_boundary": _bool, "simple_parts": _bool,
    "tol": _float,
    "loop": str, "edges": str, "method": str, "interaction": str, "out": str,
}


def read_config_file(path: str) -> dict[str, object]:
    out: dict[str, object] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{no}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "command":
            continue
        if key not in _CONVERT:
            raise ConfigError(f"{path}:{no}: unknown key {key!r}")
        out[key] = _CONVERT[key](value)
    return out


def parse_edges(text: str) -> list[KCell]:
    """'x,y,z:d' items separated by ';' (d is the axis; a leading '-' reverses the edge)."""
    out = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        try:
            base, d = item.split(":")
        except ValueError:
            raise ConfigError(f"edge {item!r} is not of the form x,y,z:d") from None
        sign = -1 if d.startswith("-") else 1
        out.append(edge(_ints(base), _int(d.lstrip("-")), sign))
    if not out:
        raise ConfigError("empty edge list")
    return out


# --- output ----------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


@dataclass
class Report:
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    failed: list[str] = field(default_factory=list)

    def add(self, *row) -> None:
        if len(row) != len(self.columns):
            raise AssertionError("row width does not match the header")
        self.rows.append(list(row))

    def check(self, ok: bool, what: str) -> bool:
        if not ok:
            self.failed.append(what)
        return ok


def render(cfg: ExperimentConfig, report: Report, stamp: str | None = None) -> str:
    buf = io.StringIO()
    buf.write(f"# z2ursell {__version__} {cfg.command}\n")
    if stamp:
        buf.write(f"# run at {stamp}\n")
    for k, v in cfg.resolved():
        buf.write(f"# {k} = {v}\n")
    for note in report.notes:
        buf.write(f"# {note}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(report.columns)
    for row in report.rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


# --- helpers ---------------------------------------------------------------

def _box(cfg: ExperimentConfig) -> BoxGeometry:
    if cfg.box is None:
        raise ConfigError("box is required")
    if cfg.dim is not None and cfg.dim != len(cfg.box):
        raise ConfigError(f"box {cfg.box} does not have dimension {cfg.dim}")
    if any(s < 2 for s in cfg.box):
        raise ConfigError("every box extent must be at least 2 vertices")
    return BoxGeometry(cfg.box)


def _fits(box: BoxGeometry, chain: Chain, what: str) -> None:
    for c in chain.coeffs:
        if not box.contains(c):
            raise ConfigError(f"{what} does not fit in the box {box.shape}")


def _edges_of_config(cfg: ExperimentConfig, box: BoxGeometry) -> list[KCell]:
    if cfg.edges:
        es = parse_edges(cfg.edges)
        for e in es:
            if len(e.base) != box.m or not box.contains(e):
                raise ConfigError(f"edge {e} is not inside the box")
        return es
    gamma = _named_loop(cfg, box)
    return sorted(gamma.signed_cells())


def _named_loop(cfg: ExperimentConfig, box: BoxGeometry | None) -> Chain:
    kind = cfg.loop or "rectangle"
    base = cfg.base if cfg.base is not None else (box.lo if box is not None else None)
    try:
        gamma = loops.special_loop(kind, base, None)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    if box is not None:
        _fits(box, gamma, kind)
    return gamma


def _method(cfg: ExperimentConfig, allowed: Sequence[str]) -> str:
    if cfg.method not in allowed:
        raise ConfigError(f"method must be one of {', '.join(allowed)}")
    if cfg.method == "mcmc" and cfg.seed is None:
        raise ConfigError("seed is required when method = mcmc")
    return cfg.method


def _betas(cfg: ExperimentConfig) -> tuple[float, ...]:
    if not cfg.beta:
        raise ConfigError("beta grid is empty")
    if any(not math.isfinite(b) or b <= 0 for b in cfg.beta):
        raise ConfigError("beta values must be positive and finite")
    return cfg.beta


def _policy(cfg: ExperimentConfig, exclude_default: bool) -> cluster.TruncationPolicy:
    ex = exclude_default if cfg.exclude_boundary is None else cfg.exclude_boundary
    return cluster.TruncationPolicy(max_total_support=cfg.cutoff, exclude_boundary=ex, remainder_probe=cfg.probe)


# --- commands --------------------------------------------------------------

DEFAULTS: dict[str, dict[str, object]] = {
    "verify-2d-exact": {"box": (5, 5), "beta": (0.3, 0.7, 1.2), "tol": 1e-12},
    "verify-elitzur": {"box": (3, 3), "beta": (0.5, 1.0), "tol": 1e-12, "seed": 0, "tuples": 50},
    "ursell-edges": {"box": (3, 3, 3), "beta": (1.0,), "loop": "rectangle"},
    "ursell-wilson": {"box": (2, 2, 3), "beta": (1.0,), "n": 2},
    "decompose": {"loop": "fig3_10edge"},
    "appendixA-search": {"max_len": 14},
    "vortex-census": {"box": (4, 4, 4), "cutoff": 8, "exclude_boundary": True},
    "cluster-psi": {"box": (9, 9, 10), "base": (4, 4, 4), "beta": (1.5, 2.0), "n": 2, "interaction": "0,1"},
    "cluster-logw": {"box": (3, 3, 3), "beta": (1.5,), "base": (0, 0, 1), "exclude_boundary": False,
                     "probe": 0, "tol": 0.1},
    "factorize": {"box": (2, 2, 3), "beta": (1.0,), "n": 3, "seed": 0, "tol": 1e-12},
    "theorem2-suite": {"box": (4, 4, 4), "beta": (1.2,), "method": "mcmc", "seed": 1, "tol": 0.9},
    "theorem1-desk": {"beta": (0.5, 1.0, 1.5, 2.0, 2.5), "tol": 1e-9},
}

# exact U_n of n stacked unit loops at the lowest corner, from full enumeration
THEOREM1_BASELINE: dict[tuple[int, tuple[int, ...]], dict[float, float]] = {
    (2, (2, 2, 3)): {
        0.5: 0.02710323936640588, 1.0: 0.026155969966194514, 1.5: 0.0022683121840089138,
        2.0: 0.00012153681418924922, 2.5: 6.109072859250553e-06,
    },
    (3, (2, 2, 4)): {
        0.5: -0.0009435595055323487, 1.0: -0.004540006945359609, 1.5: -0.00021518511165741216,
        2.0: -4.426286325687201e-06, 2.5: -8.226366809971353e-08,
    },
}


def cmd_verify_2d_exact(cfg: ExperimentConfig) -> Report:
    box = _box(cfg)
    if box.m != 2:
        raise ConfigError("verify-2d-exact needs a 2-dimensional box")
    rep = Report(["beta", "L1", "L2", "area", "exact", "closed_form", "abs_err"])
    base = cfg.base if cfg.base is not None else tuple(lo + 1 for lo in box.lo)
    shapes = [(1, 1), (1, 2), (2, 2)]
    surfaces = []
    for L1, L2 in shapes:
        q = loops.rectangle_surface(base, L1, L2)
        _fits(box, q, f"{L1}x{L2} rectangle at {base}")
        surfaces.append(q)
    table = model.state_count_table(box, model.loop_parities(box, [q.loop for q in surfaces]),
                                    workers=cfg.workers)
    for b in _betas(cfg):
        for bit, (L1, L2) in enumerate(shapes):
            exact = table.moment(b, 1 << bit)
            closed = math.tanh(b) ** (L1 * L2)
            err = abs(exact - closed)
            rep.check(err < cfg.tol, f"beta={b} area={L1 * L2}")
            rep.add(b, L1, L2, L1 * L2, exact, closed, err)
    return rep


def cmd_verify_elitzur(cfg: ExperimentConfig) -> Report:
    box = _box(cfg)
    rep = Report(["kind", "item", "n", "beta", "value", "abs_value"])
    edge_tol = min(cfg.tol, 1e-14)
    edges_all = box.cells(1)
    for b in _betas(cfg):
        params = model.ModelParams(box, b)
        for i, e in enumerate(edges_all):
            v = model.exact_expectation(params, [e], gauge_fix=False, workers=cfg.workers)
            rep.check(abs(v) < edge_tol, f"E[sigma({e})] at beta={b}")
            rep.add("edge", _edge_label(e), 1, b, v, abs(v))
    rng = random.Random(cfg.seed)
    sizes = [n for n in (2, 3, 5) if n <= len(edges_all)]
    for t in range(cfg.tuples):
        n = sizes[t % len(sizes)]
        tup = rng.sample(edges_all, n)
        b = cfg.beta[t % len(cfg.beta)]
        v, _ = ursell.ursell_edges_estimate(model.ModelParams(box, b), tup, "exact", shortcut=False,
                                            workers=cfg.workers)
        rep.check(abs(v) < cfg.tol, f"U_{n} tuple {t}")
        rep.add("ursell", ";".join(_edge_label(e) for e in tup), n, b, v, abs(v))
    return rep


def cmd_ursell_edges(cfg: ExperimentConfig) -> Report:
    box = _box(cfg)
    method = _method(cfg, ("exact", "mcmc"))
    es = _edges_of_config(cfg, box)
    parts = ursell.closed_block_partitions(es)
    rep = Report(["beta", "n", "method", "value", "stderr", "nonzero_partitions"])
    for b in _betas(cfg):
        v, se = ursell.ursell_edges_estimate(model.ModelParams(box, b), es, method, sweeps=cfg.sweeps,
                                             seed=cfg.seed or 0, workers=cfg.workers)
        rep.add(b, len(es), method, v, se, len(parts))
    return rep


def _stacked(cfg: ExperimentConfig, box: BoxGeometry) -> loops.StackedLoopFamily:
    base = cfg.base if cfg.base is not None else box.lo
    try:
        return loops.build_stacked_family(base, 1, 1, cfg.n, box)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def cmd_ursell_wilson(cfg: ExperimentConfig) -> Report:
    box = _box(cfg)
    method = _method(cfg, ("exact", "mcmc"))
    if cfg.loop:
        gammas = [_named_loop(replace(cfg, loop=item.strip()), box) for item in cfg.loop.split(";")]
    else:
        gammas = list(_stacked(cfg, box).loops)
    rep = Report(["beta", "n", "method", "value", "stderr"])
    for b in _betas(cfg):
        v, se = ursell.ursell_wilson_estimate(model.ModelParams(box, b), gammas, method, sweeps=cfg.sweeps,
                                              seed=cfg.seed or 0, workers=cfg.workers)
        rep.add(b, len(gammas), method, v, se)
    return rep


def _edge_label(e: KCell) -> str:
    return f"{','.join(map(str, e.base))}:{e.dirs[0]}"


def _edge_list(chain: Chain) -> str:
    return ";".join(_edge_label(c) for c in sorted(chain.support()))


def cmd_decompose(cfg: ExperimentConfig) -> Report:
    gamma = _named_loop(cfg, None)
    rep = Report(["index", "size_first", "size_second", "first", "second"])
    pairs = loops.decompose_two_loops(gamma, cfg.simple_parts)
    for i, p in enumerate(pairs):
        a, b = p.loops()
        rep.add(i, len(a.support()), len(b.support()), _edge_list(a), _edge_list(b))
    rep.notes.append(f"decompositions = {len(pairs)}")
    return rep


def cmd_appendix_search(cfg: ExperimentConfig) -> Report:
    res = loops.min_doubly_decomposable_search(2, cfg.max_len, cfg.simple_parts)
    rep = Report(["length", "decompositions", "segments"])
    for segs, k in sorted(res.hits_mod_symmetry.items(), key=lambda kv: (len(kv[0]), kv[0])):
        rep.add(len(segs), k, ";".join(f"{a[0]},{a[1]}-{b[0]},{b[1]}" for a, b in segs))
    rep.notes.append(f"loops examined = {res.loops_examined} ({res.loops_examined_mod_symmetry} up to symmetry)")
    rep.notes.append(f"hits = {len(res.hits)} ({len(res.hits_mod_symmetry)} up to symmetry)")
    return rep


def cmd_vortex_census(cfg: ExperimentConfig) -> Report:
    box = _box(cfg)
    if box.m < 3:
        raise ConfigError("vortices need m >= 3")
    pol = _policy(cfg, True)
    try:
        pol.check(box.m)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    g = cluster.build_plaquette_graph(box)
    vs = cluster.enumerate_vortices(box, g, pol)
    counts = Counter((v.size, cluster.classify_vortex_shape(v, box) if v.size <= 6 else "") for v in vs)
    rep = Report(["size", "shape", "count"])
    for (s, shape), k in sorted(counts.items()):
        rep.add(s, shape, k)
    return rep


def cmd_cluster_psi(cfg: ExperimentConfig) -> Report:
    box = _box(cfg)
    fam = _stacked(cfg, box)
    I = frozenset(_ints(cfg.interaction or ""))
    if not I or any(not 0 <= i < cfg.n for i in I):
        raise ConfigError(f"interaction set must be nonempty indices below n={cfg.n}")
    pol = _policy(cfg, True)
    if pol.exclude_boundary and any(box.is_boundary_cell(c) for q in fam.surfaces for c in q.coeffs):
        raise ConfigError("a surface lies on the box boundary, whose plaquettes are excluded")
    try:
        sc = cluster.SurfaceClusters(box, fam.surfaces, pol)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    lead_size = 4 * (box.m - 1) - 2
    rep = Report(["beta", "model_beta", "I", "value", "leading", "ratio", "remainder", "clusters"])
    for b in _betas(cfg):
        r = sc.psi(I, b)
        lead = fam.loop_length * math.exp(-4.0 * lead_size * b)
        rep.add(b, cluster.model_beta(b), " ".join(map(str, sorted(I))), r.value, lead, r.value / lead,
                r.remainder, r.n_clusters)
    return rep


def cmd_cluster_logw(cfg: ExperimentConfig) -> Report:
    box = _box(cfg)
    if box.m < 3:
        raise ConfigError("the cluster expansion needs m >= 3")
    base = cfg.base if cfg.base is not None else box.lo
    q = loops.rectangle_surface(base, 1, 1)
    _fits(box, q, "unit square")
    pol = _policy(cfg, False)
    sc = cluster.SurfaceClusters(box, [q], pol)
    compare = cfg.method == "exact"
    table = None
    if compare:
        table = model.state_count_table(box, model.loop_parities(box, [boundary_chain(q)]), workers=cfg.workers)
    rep = Report(["beta", "model_beta", "truncated", "exact", "rel_err", "remainder", "clusters"])
    for b in _betas(cfg):
        r = sc.neg_log_wilson(b)
        if table is not None:
            ex = table.neg_log_moment(cluster.model_beta(b), 1)
            rel = abs(r.value - ex) / ex
            rep.check(rel < cfg.tol, f"beta={b}")
        else:
            ex = rel = float("nan")
        rep.add(b, cluster.model_beta(b), r.value, ex, rel, r.remainder, r.n_clusters)
    return rep


def cmd_factorize(cfg: ExperimentConfig) -> Report:
    if cfg.n is None or not 1 <= cfg.n <= 8:
        raise ConfigError("n must be between 1 and 8")
    rep = Report(["source", "beta", "n", "direct", "reconstructed", "abs_err"])
    box = _box(cfg)
    fam = _stacked(cfg, box)
    pars = model.loop_parities(box, fam.loops)
    table = model.state_count_table(box, pars, workers=cfg.workers)
    for b in _betas(cfg):
        def mom(block, b=b):
            return table.moment(b, sum(1 << i for i in block))
        _factor_row(rep, cfg, "exact", b, mom)
    rng = random.Random(cfg.seed)
    for t in range(cfg.tuples if cfg.tuples else 0):
        vals = {}

        def synth(block):
            key = frozenset(block)
            if not key:
                return 1.0
            if key not in vals:
                vals[key] = rng.uniform(0.2, 1.0)
            return vals[key]
        _factor_row(rep, cfg, f"synthetic-{t}", float("nan"), synth)
    return rep


def _factor_row(rep: Report, cfg: ExperimentConfig, source: str, b: float, mom) -> None:
    try:
        f = loops.factorize_ursell(cfg.n, mom)
    except DegenerateInputError as exc:
        rep.notes.append(f"{source}: {exc}")
        return
    direct = ursell.ursell(cfg.n, mom)
    err = abs(direct - f.value)
    rep.check(err < cfg.tol, f"{source} beta={b}")
    rep.add(source, b, cfg.n, direct, f.value, err)


def cmd_theorem2_suite(cfg: ExperimentConfig) -> Report:
    """Parts (a)-(d): Elitzur, odd-n vanishing, rectangle positivity, negative U_10."""
    rep = Report(["part", "quantity", "value", "stderr", "threshold", "pass"])
    small2 = BoxGeometry((3, 3))
    small3 = BoxGeometry((2, 2, 2))
    p2 = model.ModelParams(small2, 1.0)
    worst = max(abs(model.exact_expectation(p2, [e], gauge_fix=False)) for e in small2.cells(1))
    rep.add("a", "max |E[sigma(e)]| on 3x3", worst, 0.0, 1e-14, rep.check(worst < 1e-14, "a"))
    rng = random.Random(0)
    worst_u = 0.0
    for t in range(30):
        box = small2 if t % 2 else small3
        tup = rng.sample(box.cells(1), (2, 3, 5)[t % 3])
        worst_u = max(worst_u, abs(ursell.ursell_edges(model.ModelParams(box, 0.8), tup, shortcut=False)))
    rep.add("b", "max |U_n| odd or open tuples", worst_u, 0.0, 1e-12, rep.check(worst_u < 1e-12, "b"))
    sq_box = BoxGeometry((3, 3, 3))
    sq = loops.special_loop("rectangle", (0, 0, 1))
    p3 = model.ModelParams(sq_box, 1.0)
    u4 = ursell.ursell_edges(p3, sorted(sq.signed_cells()))
    ew = model.exact_expectation(p3, sq)
    rep.add("c", "U_4(square) - E[W]", u4 - ew, 0.0, 1e-14, rep.check(abs(u4 - ew) < 1e-14 and ew > 0, "c"))
    box = _box(cfg)
    method = _method(cfg, ("exact", "mcmc"))
    base = cfg.base if cfg.base is not None else tuple(lo + 1 for lo in box.lo)
    gamma = loops.special_loop("fig3_10edge", base)
    _fits(box, gamma, "fig3_10edge")
    pairs = loops.decompose_two_loops(gamma, cfg.simple_parts)
    rep.add("d", "decompositions", float(len(pairs)), 0.0, 3.0, rep.check(len(pairs) == 3, "d decompositions"))
    b = _betas(cfg)[0]
    terms = ursell.partition_terms_estimate(model.ModelParams(box, b), sorted(gamma.signed_cells()), method,
                                            sweeps=cfg.sweeps, seed=cfg.seed or 0, workers=cfg.workers)
    u = 0.0
    var = 0.0
    for term in terms:
        low = term.product - 3.0 * term.stderr
        rep.add("d", f"term {term.partition}", term.product, term.stderr, cfg.tol,
                rep.check(low > cfg.tol, f"d term {term.partition}"))
        u += term.weight * term.product
        var += term.stderr ** 2
    se = math.sqrt(var)
    rep.add("d", "U_10", u, se, -1.0, rep.check(u + 3.0 * se < -1.0, "d U_10"))
    return rep


def cmd_theorem1_desk(cfg: ExperimentConfig) -> Report:
    rep = Report(["n", "box", "beta", "U_n", "baseline", "rel_err", "positive"])
    for (n, shape), base in THEOREM1_BASELINE.items():
        if cfg.n is not None and cfg.n != n:
            continue
        box = BoxGeometry(shape)
        fam = loops.build_stacked_family(box.lo, 1, 1, n, box)
        for b in _betas(cfg):
            u = ursell.ursell_wilson(model.ModelParams(box, b), fam.loops, workers=cfg.workers)
            ref = base.get(b)
            rel = abs(u - ref) / abs(ref) if ref else float("nan")
            if n == 2:
                rep.check(u > 0, f"U_2 > 0 at beta={b}")
            if ref is not None:
                rep.check(rel < cfg.tol, f"U_{n} baseline at beta={b}")
            rep.add(n, "x".join(map(str, shape)), b, u, float("nan") if ref is None else ref, rel, u > 0)
    return rep


COMMANDS: dict[str, Callable[[ExperimentConfig], Report]] = {
    "verify-2d-exact": cmd_verify_2d_exact,
    "verify-elitzur": cmd_verify_elitzur,
    "ursell-edges": cmd_ursell_edges,
    "ursell-wilson": cmd_ursell_wilson,
    "decompose": cmd_decompose,
    "appendixA-search": cmd_appendix_search,
    "vortex-census": cmd_vortex_census,
    "cluster-psi": cmd_cluster_psi,
    "cluster-logw": cmd_cluster_logw,
    "factorize": cmd_factorize,
    "theorem2-suite": cmd_theorem2_suite,
    "theorem1-desk": cmd_theorem1_desk,
}

VERIFYING = {"verify-2d-exact", "verify-elitzur", "cluster-logw", "factorize", "theorem2-suite", "theorem1-desk"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="z2ursell", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--out", metavar="PATH", help="CSV path (default: stdout)")
    p.add_argument("--beta", metavar="LIST")
    p.add_argument("--box", metavar="Lx,Ly,Lz")
    p.add_argument("--dim", metavar="M")
    p.add_argument("--method", choices=("exact", "mcmc", "cluster"))
    p.add_argument("--sweeps", metavar="N")
    p.add_argument("--seed", metavar="N")
    p.add_argument("--cutoff", metavar="N", help="cluster support cap")
    p.add_argument("--workers", metavar="N")
    p.add_argument("--loop", metavar="NAME")
    p.add_argument("--edges", metavar="LIST", help="'x,y,z:d;...'")
    p.add_argument("--base", metavar="x,y,z")
    p.add_argument("--n", metavar="N")
    p.add_argument("--max-len", dest="max_len", metavar="N")
    p.add_argument("--tol", metavar="X", help="check tolerance or threshold")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="any other config key")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve(argv: Sequence[str] | None = None) -> ExperimentConfig:
    args = build_parser().parse_args(argv)
    values: dict[str, object] = dict(DEFAULTS[args.command])
    if args.config:
        values.update(read_config_file(args.config))
    for key in ("out", "beta", "box", "dim", "method", "sweeps", "seed", "cutoff", "workers",
                "loop", "edges", "base", "n", "max_len", "tol"):
        raw = getattr(args, key)
        if raw is not None:
            values[key] = _CONVERT[key](raw)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        k = k.replace("-", "_")
        if k not in _CONVERT:
            raise ConfigError(f"unknown key {k!r}")
        values[k] = _CONVERT[k](v)
    if args.verbose:
        logging.basicConfig(level=logging.INFO)
    return ExperimentConfig(command=args.command, **values)


def run(cfg: ExperimentConfig, stamp: bool = True) -> tuple[int, str]:
    """Execute one command; returns (exit code, CSV text or error message)."""
    try:
        report = COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        return EXIT_CONFIG, f"invalid configuration: {exc}"
    except CapacityError as exc:
        need = f" (required: {exc.required})" if getattr(exc, "required", None) is not None else ""
        return EXIT_CAPACITY, f"capacity exceeded: {exc}{need}"
    except (DomainError, DegenerateInputError) as exc:
        return EXIT_CONFIG, f"invalid configuration: {exc}"
    when = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds") if stamp else None
    text = render(cfg, report, when)
    code = EXIT_OK
    if report.failed:
        code = EXIT_CHECK if cfg.command in VERIFYING else EXIT_OK
    return code, text


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = resolve(argv)
    except ConfigError as exc:
        print(f"z2ursell: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code, text = run(cfg)
    if code in (EXIT_CONFIG, EXIT_CAPACITY):
        print(f"z2ursell: {text}", file=sys.stderr)
        return code
    if cfg.out:
        try:
            with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"z2ursell: cannot write {cfg.out}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    else:
        sys.stdout.write(text)
    if code == EXIT_CHECK:
        print(f"z2ursell: {cfg.command} check failed", file=sys.stderr)
    return code
