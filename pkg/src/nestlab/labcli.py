"""Parameter scans, the random exclusion model, SVG rendering and the CLI."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .maps import ParameterError, QuadraticMap
from .nest import NestError, build_nest, nest_report
from .numerics import PrecisionContext, PrecisionExhausted, format_real
from .orbitstats import CriticalHit, ce_exponent, recurrence_exponent
from .renorm import BudgetExceeded, NotInDelta, classify, detect_renormalizations

CSV_TAG = "nestlab-csv-v1"
SCAN_COLUMNS = ("a", "classification", "period", "ce_liminf_proxy", "rec_exponent_proxy",
                "nest_depth_reached", "c_1", "s_1", "flags")


class SchemaError(ValueError):
    """Input file does not follow the expected report layout."""


# -- scan -------------------------------------------------------------------------

@dataclass(frozen=True)
class ScanRecord:
    a: str
    classification: str
    period: int | None = None
    ce_liminf_proxy: float | None = None
    rec_exponent_proxy: float | None = None
    nest_depth_reached: int = 0
    c_1: str | None = None
    s_1: int | None = None
    runtime_ms: int = 0
    flags: tuple = ()

    def row(self):
        def cell(v):
            if v is None:
                return ""
            return repr(v) if isinstance(v, float) else str(v)
        return [self.a, self.classification, cell(self.period), cell(self.ce_liminf_proxy),
                cell(self.rec_exponent_proxy), str(self.nest_depth_reached), cell(self.c_1),
                cell(self.s_1), ";".join(self.flags)]


DEFAULT_BUDGETS = {"iter_budget": 4000, "n_max": 1000, "depth": 2, "bits": 256}


def scan_one(a: str, budgets=None) -> ScanRecord:
    """Evaluate every observable at one parameter; failures become flags."""
    b = dict(DEFAULT_BUDGETS, **(budgets or {}))
    t0 = time.perf_counter()
    fmap = QuadraticMap(a, PrecisionContext(bits=b["bits"]))
    flags = []
    cls = classify(fmap, iter_budget=b["iter_budget"])
    try:
        ce = ce_exponent(fmap, n_max=b["n_max"]).liminf_proxy
    except CriticalHit:
        ce = None
        flags.append("ce:CriticalHit")
    try:
        rec = recurrence_exponent(fmap, n_max=b["n_max"]).exponent_proxy
    except CriticalHit:
        rec = None
        flags.append("rec:CriticalHit")
    try:
        levels = build_nest(fmap, kappa="auto", depth=b["depth"], coverage_target=0.0,
                            max_branches=0)
    except NotInDelta:
        levels = []
        flags.append("nest:NotInDelta")
    except (NestError, PrecisionExhausted, BudgetExceeded) as exc:
        levels = list(getattr(exc, "levels", ()))
        flags.append(f"nest:{type(exc).__name__}")
    c1 = s1 = None
    if len(levels) > 1:
        c1 = format_real(levels[1].c, levels[1].fmap.ctx)
        s1 = levels[1].s
    ms = int(1000 * (time.perf_counter() - t0))
    return ScanRecord(a, cls.tag, cls.period, ce, rec, len(levels), c1, s1, ms, tuple(flags))


def scan_parameters(a_lo, a_hi, n: int, seed=None):
    """``n`` parameters, one per equal cell of ``[a_lo, a_hi]``.

    Without a seed the cell midpoints are used; with one, a uniform point of
    each cell drawn from a Philox stream keyed by the seed.
    """
    lo, hi = float(a_lo), float(a_hi)
    if not (0.5 <= lo < hi <= 2.0):
        raise ParameterError("scan range must satisfy 1/2 <= lo < hi <= 2")
    if n < 0:
        raise ValueError("n must be >= 0")
    if seed is None:
        u = np.full(n, 0.5)
    else:
        u = np.random.Generator(np.random.Philox(key=int(seed))).random(n)
    return [repr(float(min(hi, lo + (hi - lo) * (k + u[k]) / n))) for k in range(n)]


def scan(a_lo, a_hi, n_samples: int, budgets=None, workers: int = 1, seed=None):
    """Records sorted by parameter; identical for any worker count."""
    params = scan_parameters(a_lo, a_hi, n_samples, seed)
    if workers > 1 and len(params) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(scan_one, params, [budgets] * len(params),
                                    chunksize=max(1, len(params) // (4 * workers))))
    else:
        records = [scan_one(a, budgets) for a in params]
    return sorted(records, key=lambda r: float(r.a))


def scan_summary(records):
    counts = {}
    for r in records:
        counts[r.classification] = counts.get(r.classification, 0) + 1
    n = len(records)
    return {tag: counts[tag] / n for tag in sorted(counts)}


def write_scan_csv(records, stream):
    """Version row, column row, one row per record, then ``summary`` rows.

    Wall-clock timings are left out so the bytes depend only on the inputs.
    """
    w = csv.writer(stream, lineterminator="\n")
    w.writerow([CSV_TAG])
    w.writerow(SCAN_COLUMNS)
    for r in records:
        w.writerow(r.row())
    for tag, frac in scan_summary(records).items():
        w.writerow(["summary", tag, repr(frac)])


def read_scan_csv(stream):
    rows = list(csv.reader(stream))
    if not rows or rows[0] != [CSV_TAG]:
        raise SchemaError(f"missing {CSV_TAG} header row")
    if len(rows) < 2 or tuple(rows[1]) != SCAN_COLUMNS:
        raise SchemaError("unexpected scan columns")
    return [dict(zip(SCAN_COLUMNS, r)) for r in rows[2:] if r and r[0] != "summary"]


# -- random exclusion model ------------------------------------------------------------

@dataclass(frozen=True)
class ExclusionModel:
    c_schedule: tuple
    trials: int = 100000
    seed: int = 0

    def __post_init__(self):
        cs = tuple(float(c) for c in self.c_schedule)
        object.__setattr__(self, "c_schedule", cs)
        if not cs:
            raise ValueError("empty schedule")
        if any(not (0 < c < 1) for c in cs):
            raise ValueError("every c_n must lie in (0, 1)")
        if any(b >= a for a, b in zip(cs, cs[1:])):
            raise ValueError("schedule must be strictly decreasing")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class ExclusionLevel:
    c: float
    trials: int
    median_ratio: float
    window_prob: float | None = None
    escape_prob: float | None = None
    escape_bound: float | None = None
    escape_sigma: float | None = None
    escape_ok: bool | None = None
    tails: dict = field(default_factory=dict)  # k -> (empirical, exact, sigma)
    flags: tuple = ()


def exclusion_simulation(model: ExclusionModel, eps: float = 0.1):
    """Draw ``s_n ~ Geometric(c_n)`` and summarize ``ln s_n / ln(1/c_n)``.

    Level ``n`` uses its own Philox substream spawned from the seed, so
    adding levels never changes earlier ones.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    streams = np.random.SeedSequence(model.seed).spawn(len(model.c_schedule))
    out = []
    for c, ss in zip(model.c_schedule, streams):
        rng = np.random.Generator(np.random.Philox(ss))
        s = rng.geometric(c, size=model.trials)
        L = math.log(1 / c)
        ratio = np.log(s) / L
        med = float(np.median(ratio))
        tails = {}
        for k in (1, math.ceil(1 / c)):
            exact = (1 - c) ** k
            tails[k] = (float(np.mean(s > k)), exact,
                        math.sqrt(exact * (1 - exact) / model.trials))
        if model.trials < 2:
            out.append(ExclusionLevel(c, model.trials, med, tails=tails, flags=("LowTrials",)))
            continue
        lo, hi = c ** (-1 + 2 * eps), c ** (-1 - eps)
        inside = float(np.mean((s > lo) & (s < hi)))
        esc = 1 - inside
        bound = c ** eps
        sigma = math.sqrt(max(esc * (1 - esc), 1 / model.trials) / model.trials)
        out.append(ExclusionLevel(c, model.trials, med, inside, esc, bound, sigma,
                                  esc <= bound + 3 * sigma, tails))
    return out


# -- rendering ---------------------------------------------------------------------

def _svg(width, height, body):
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n')
    return head + '<rect width="100%" height="100%" fill="white"/>\n' + "".join(body) + "</svg>\n"


def _fmt(x):
    return f"{x:.3f}"


def render_bifurcation(params, width=800, height=500, burn=500, keep=64):
    """Attractor samples of ``f_a`` (vertical) against ``a`` (horizontal)."""
    pad = 40
    body = [f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" '
            'stroke="black"/>\n',
            f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>\n']
    if not params:
        return _svg(width, height, body)
    a_vals = sorted(float(a) for a in params)
    lo, hi = a_vals[0], a_vals[-1]
    span = hi - lo or 1.0
    body.append(f'<text x="{pad}" y="{height - 10}" font-size="12">a={lo:g}</text>\n')
    body.append(f'<text x="{width - pad - 60}" y="{height - 10}" font-size="12">a={hi:g}</text>\n')
    for a in a_vals:
        x = 0.0
        for _ in range(burn):
            x = a - 1 - a * x * x
        px = pad + (a - lo) / span * (width - 2 * pad)
        for _ in range(keep):
            x = a - 1 - a * x * x
            py = pad + (1 - (x + 1) / 2) * (height - 2 * pad)
            body.append(f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="0.6" fill="black"/>\n')
    return _svg(width, height, body)


def render_nest(report, width=800, row=60, scale="linear"):
    """Nested-interval ladder: one row per level, branches as ticks.

    ``scale="log"`` maps ``x`` to ``sign(x) log10(|x| / floor)`` with the
    floor set by the innermost central interval, so torrential levels stay
    visible.
    """
    if not isinstance(report, dict) or report.get("schema") != "nestlab-nest-v1":
        raise SchemaError("not a nestlab-nest-v1 report")
    try:
        return _ladder(report, width, row, scale)
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise SchemaError(f"malformed nest report: {exc!r}") from None


def _ladder(report, width, row, scale):
    levels = report["levels"]
    pad = 40
    height = pad * 2 + row * max(1, len(levels))
    body = []
    if not levels:
        return _svg(width, height, body)
    R = float(levels[0]["I"][1])
    innermost = min(float(b["hi"]) for lv in levels for b in lv["branches"] if b["j"] == 0)
    floor = max(innermost / 10, 1e-300)

    def pos(x):
        x = float(x)
        if scale == "log":
            m = math.log10(max(abs(x), floor) / floor) / math.log10(R / floor)
            u = math.copysign(m, x)
        else:
            u = x / R
        return pad + (u + 1) / 2 * (width - 2 * pad)

    for i, lv in enumerate(levels):
        y = pad + row * i + row / 2
        lo, hi = lv["I"]
        body.append(f'<line x1="{_fmt(pos(lo))}" y1="{_fmt(y)}" x2="{_fmt(pos(hi))}" '
                    f'y2="{_fmt(y)}" stroke="black" stroke-width="2"/>\n')
        body.append(f'<text x="4" y="{_fmt(y + 4)}" font-size="12">I{lv["n"]}</text>\n')
        for b in lv["branches"]:
            colour = "red" if b["j"] == 0 else "steelblue"
            x0, x1 = pos(b["lo"]), pos(b["hi"])
            body.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y - 8)}" width="{_fmt(max(x1 - x0, 0.2))}" '
                        f'height="16" fill="{colour}" fill-opacity="0.4"/>\n')
    return _svg(width, height, body)


def render(path_in, fmt: str, path_out, scale="linear"):
    with open(path_in) as fh:
        text = fh.read()
    if fmt == "svg-bifurcation":
        rows = read_scan_csv(io.StringIO(text))
        svg = render_bifurcation([r["a"] for r in rows])
    elif fmt == "svg-nest-intervals":
        try:
            report = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from None
        svg = render_nest(report, scale=scale)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path_out, "w") as fh:
        fh.write(svg)
    return path_out


# -- command line ---------------------------------------------------------------------

EXIT_OK, EXIT_INPUT, EXIT_BUDGET = 0, 2, 3


def _format(args, default="json"):
    return args.out_format or default


def _emit(args, payload, rows=None):
    """JSON by default; CSV when requested and a row form exists."""
    if _format(args) == "csv" and rows is not None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow([CSV_TAG])
        for r in rows:
            w.writerow(r)
    else:
        json.dump(payload, sys.stdout, indent=2, default=str)
        sys.stdout.write("\n")


def _ctx(args):
    return PrecisionContext(bits=args.bits, tol=args.tol)


def _map(args):
    return QuadraticMap(args.a, _ctx(args))


def cmd_classify(args):
    c = classify(_map(args), iter_budget=args.iters, period_budget=args.max_period)
    payload = {"a": args.a, "classification": c.tag, "period": c.period,
               "multiplier": c.multiplier, "kappa": c.kappa, "describe": c.describe()}
    _emit(args, payload, [list(payload), list(payload.values())])
    return EXIT_OK


def cmd_nest(args):
    fmap = _map(args)
    kappa = args.kappa if args.kappa == "auto" else int(args.kappa)
    code = EXIT_OK
    try:
        levels = build_nest(fmap, kappa=kappa, depth=args.depth, coverage_target=args.coverage,
                            max_branches=args.max_branches)
    except NestError as exc:
        levels = list(exc.levels)
        code = EXIT_BUDGET
        print(f"nestlab: {type(exc).__name__}: {exc}", file=sys.stderr)
    report = nest_report(levels, levels[0].fmap if levels else fmap)
    rows = [["n", "lo", "hi", "c", "s", "v", "tau", "coverage"]]
    rows += [[lv["n"], *lv["I"], lv["c"], lv["s"], lv["v"], lv["tau"], lv["coverage"]]
             for lv in report["levels"]]
    _emit(args, report, rows)
    return code


def cmd_renorm(args):
    fmap = _map(args)
    chain = detect_renormalizations(fmap, m_max=args.max_period)
    payload = [{"period": r.period, "T": [format_real(x, fmap.ctx) for x in r.T],
                "hatT": [format_real(x, fmap.ctx) for x in r.hatT]} for r in chain]
    rows = [["period", "T_lo", "T_hi"]] + [[p["period"], *p["T"]] for p in payload]
    _emit(args, payload, rows)
    return EXIT_OK


def cmd_kneading(args):
    from .parameter import kneading
    w = kneading(_map(args), args.len)
    payload = {"a": args.a, "kneading": w.symbols, "terminal": w.terminal}
    _emit(args, payload, [list(payload), list(payload.values())])
    return EXIT_OK


def cmd_window(args):
    from .parameter import window
    fmap = _map(args)
    w = window(fmap, args.level, args.kind, j=args.j, kappa=args.kappa_, tol=args.tol_param)
    payload = {"a": args.a, "level": w.level, "kind": w.kind, "j": w.j, "kappa": w.kappa,
               "lo": format_real(w.interval.lo, fmap.ctx),
               "hi": format_real(w.interval.hi, fmap.ctx)}
    _emit(args, payload, [list(payload), list(payload.values())])
    return EXIT_OK


def cmd_xi(args):
    from .capacity import MonotonePairs, qs_constant
    from .parameter import write_pairs_csv, xi_sample
    fmap = _map(args)
    xs = xi_sample(fmap, args.level, args.endpoints, kappa=args.kappa_, tol=args.tol_param)
    k = qs_constant(MonotonePairs.oriented(xs.pairs)) if len(xs.pairs) >= 3 else None
    if _format(args) == "csv":
        write_pairs_csv(sys.stdout, xs.addresses, xs.pairs)
    else:
        _emit(args, {"a": args.a, "level": args.level, "qs_constant": k,
                     "pairs": [{"address": ad, "phase_x": format_real(x, fmap.ctx),
                                "param_a": format_real(a, fmap.ctx)}
                               for ad, (x, a) in zip(xs.addresses, xs.pairs)]})
    return EXIT_OK


def cmd_capacity(args):
    from .capacity import (PowerFamily, capacity_lower_bound, qs_constant,
                           tree_subadditivity_check)
    with open(args.spec) as fh:
        spec = json.load(fh)
    payload = {}
    if "pairs" in spec:
        payload["qs_constant"] = qs_constant([tuple(p) for p in spec["pairs"]])
    if "T" in spec:
        fam = PowerFamily(**spec.get("family", {}))
        X = [tuple(x) for x in spec.get("X", [])]
        est = capacity_lower_bound(X, tuple(spec["T"]), spec["k"], fam)
        payload["capacity"] = {"value": est.value, "k": est.k, "family": est.family,
                               "direction": est.direction}
        if "children" in spec:
            tc = tree_subadditivity_check([tuple(c) for c in spec["children"]], X,
                                          tuple(spec["T"]), spec["k"], fam)
            payload["tree"] = asdict(tc)
    _emit(args, payload)
    return EXIT_OK


def cmd_scan(args):
    try:
        lo, hi = (float(v) for v in args.range.split(":"))
    except ValueError:
        raise ValueError("--range must look like lo:hi") from None
    records = scan(lo, hi, args.n, {"bits": args.bits}, workers=args.workers, seed=args.seed)
    if _format(args, "csv") == "json":
        _emit(args, {"records": [asdict(r) for r in records],
                     "summary": scan_summary(records)})
    else:
        write_scan_csv(records, sys.stdout)
    return EXIT_OK


def cmd_simulate(args):
    cs = tuple(float(c) for c in args.schedule.split(","))
    res = exclusion_simulation(ExclusionModel(cs, args.trials, args.seed), args.eps)
    payload = [asdict(r) for r in res]
    rows = [["c", "trials", "median_ratio", "window_prob", "escape_prob", "escape_bound",
             "escape_ok", "flags"]]
    rows += [[r.c, r.trials, r.median_ratio, r.window_prob, r.escape_prob, r.escape_bound,
              r.escape_ok, ";".join(r.flags)] for r in res]
    _emit(args, payload, rows)
    return EXIT_OK


def cmd_render(args):
    render(args.input, args.format, args.output, scale=args.scale)
    return EXIT_OK


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--bits", type=int, default=argparse.SUPPRESS)
    common.add_argument("--tol", type=float, default=argparse.SUPPRESS)
    common.add_argument("--out", dest="out_format", choices=("csv", "json"),
                        default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="nestlab", description=__doc__)
    p.add_argument("--bits", type=int, default=256)
    p.add_argument("--tol", type=float, default=1e-40)
    p.add_argument("--out", dest="out_format", choices=("csv", "json"), default=None,
                   help="output format (default: csv for scan, json otherwise)")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, parents=(common,)):
        sp = sub.add_parser(name, parents=list(parents))
        sp.set_defaults(func=fn)
        return sp

    sp = add("classify", cmd_classify)
    sp.add_argument("--a", required=True)
    sp.add_argument("--iters", type=int, default=4000)
    sp.add_argument("--max-period", type=int, default=64)

    sp = add("nest", cmd_nest)
    sp.add_argument("--a", required=True)
    sp.add_argument("--kappa", default="auto")
    sp.add_argument("--depth", type=int, default=2)
    sp.add_argument("--coverage", type=float, default=0.99)
    sp.add_argument("--max-branches", type=int, default=20000)

    sp = add("renorm", cmd_renorm)
    sp.add_argument("--a", required=True)
    sp.add_argument("--max-period", type=int, default=8)

    sp = add("kneading", cmd_kneading)
    sp.add_argument("--a", required=True)
    sp.add_argument("--len", type=int, default=30)

    for name, fn in (("window", cmd_window), ("xi", cmd_xi)):
        sp = add(name, fn)
        sp.add_argument("--a", required=True)
        sp.add_argument("--level", type=int, required=True)
        sp.add_argument("--kappa", dest="kappa_", default="auto")
        sp.add_argument("--param-tol", dest="tol_param", type=float, default=1e-10)
        if name == "window":
            sp.add_argument("--kind", choices=("J", "Jj"), default="J")
            sp.add_argument("--j", type=int, default=None)
        else:
            sp.add_argument("--endpoints", type=int, default=8)

    sp = add("capacity", cmd_capacity)
    sp.add_argument("--spec", required=True)

    sp = add("scan", cmd_scan)
    sp.add_argument("--range", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--seed", type=int, default=None)

    sp = add("simulate-exclusion", cmd_simulate)
    sp.add_argument("--schedule", required=True)
    sp.add_argument("--trials", type=int, default=100000)
    sp.add_argument("--eps", type=float, default=0.1)
    sp.add_argument("--seed", type=int, default=0)

    # render takes --out as the output path, so it does not inherit the format flag
    sp = add("render", cmd_render, parents=())
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--format", required=True, choices=("svg-bifurcation", "svg-nest-intervals"))
    sp.add_argument("--out", dest="output", required=True)
    sp.add_argument("--scale", choices=("linear", "log"), default="linear")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except (PrecisionExhausted, BudgetExceeded, NestError) as exc:
        print(f"nestlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ValueError, OSError, SchemaError) as exc:
        print(f"nestlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
