"""Command-line entry point: ``walkoverlap {scaling,simulate,compare,persistence,plot}``.

Exit codes: 0 success, 1 runtime or input failure, 2 divergence (analytic
request at d >= 4), 3 comparison failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile

import numpy as np

from .analytic import NO_SCALING_MESSAGE, DivergenceError, ScalingQuery, phi, phi_series, phi_value
from .experiment import (
    DEFAULT_SEPARATIONS,
    EnsembleConfig,
    collapse,
    compare,
    fit_loglog_slope,
    fmt,
    persistence_curve,
    read_results_csv,
    run_ensemble,
    write_results_csv,
)
from .numerics import PrecisionBudget, QuadratureError
from .simulator import default_checkpoints

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_DIVERGENCE = 2
EXIT_COMPARE = 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_FAILURE):
        super().__init__(message)
        self.code = code


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return v


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


# ---------------------------------------------------------------------------
# scaling


def cmd_scaling(args) -> int:
    if args.dim >= 4:
        raise DivergenceError(args.dim)
    if args.points < 1 or args.xi_min < 0 or args.xi_max < args.xi_min:
        raise CliError("need points >= 1 and 0 <= xi-min <= xi-max")
    if args.method == "series" and args.dim not in (1, 2, 3):
        raise CliError("the series method exists only for d in {1, 2, 3}")
    budget = PrecisionBudget(abs_tol=args.tol, rel_tol=args.tol, max_subdivisions=4000)
    xis = np.linspace(args.xi_min, args.xi_max, args.points)
    lines = ["xi,phi,error_estimate"]
    for x in xis:
        x = float(x)
        if args.method == "series":
            value = phi_series(x, int(args.dim))
            err = abs(value - phi_value(x, args.dim, "closed"))
        else:
            v = phi(ScalingQuery(x, args.dim, budget), args.method)
            value, err = v.phi, v.error_estimate
        lines.append(f"{fmt(x)},{fmt(value)},{fmt(err)}")
    _emit(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def _emit(out, text: str) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        _atomic_write(out, text)


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    seps = tuple(args.radius) if args.radius else DEFAULT_SEPARATIONS
    cp = default_checkpoints(args.steps)
    if args.checkpoint:
        extra = [c for c in args.checkpoint if not 0 <= c <= args.steps]
        if extra:
            raise CliError(f"checkpoints must lie in [0, {args.steps}]")
        cp = np.unique(np.concatenate([cp, np.asarray(args.checkpoint, dtype=np.int64)]))
    config = EnsembleConfig(
        dim=args.dim, master_seed=args.seed, separations=seps, steps=args.steps,
        realizations=args.reals, workers=args.workers, checkpoints=tuple(int(c) for c in cp),
    )
    result, manifest = run_ensemble(config)
    csv_path = args.out_prefix + ".csv"
    man_path = args.out_prefix + ".manifest.json"
    d = os.path.dirname(os.path.abspath(csv_path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".csv")
    os.close(fd)
    try:
        write_results_csv(result, tmp)
        _atomic_write(man_path, manifest.to_json())
        os.replace(tmp, csv_path)
    except BaseException:
        for p in (tmp, man_path):
            if os.path.exists(p):
                os.remove(p)
        raise
    print(f"wrote {csv_path} and {man_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare


def _load_results(paths):
    out = []
    for p in paths:
        try:
            out.extend(read_results_csv(p))
        except (KeyError, ValueError) as exc:
            raise CliError(f"malformed results file: {exc}") from None
    return out


def cmd_compare(args) -> int:
    results = _load_results([args.results])
    if any(r.dim >= 4 for r in results):
        dims = sorted({r.dim for r in results if r.dim >= 4})
        report = {"passed": False, "error": NO_SCALING_MESSAGE, "dims": dims, "series": []}
        _emit(args.out, json.dumps(report, indent=2, sort_keys=True) + "\n")
        print(f"comparison refused: {NO_SCALING_MESSAGE}", file=sys.stderr)
        return EXIT_COMPARE
    series, total, within = [], 0, 0
    for res in results:
        if 0 not in res.separations:
            raise CliError(f"dimension {res.dim}: results lack the R=0 baseline")
        for R in res.separations:
            if R == 0:
                continue
            rep = compare(collapse(res, R))
            total += len(rep.points)
            within += sum(int(abs(p.pull) <= rep.threshold) for p in rep.points)
            series.append({
                "summary": rep.summary(),
                "points": [
                    {"t": p.t, "xi": p.xi, "measured": p.measured, "sigma": p.sigma,
                     "expected": p.expected, "residual": p.residual, "pull": p.pull}
                    for p in rep.points
                ],
            })
    fraction = within / total if total else 0.0
    passed = total > 0 and fraction >= 0.95
    report = {
        "passed": bool(passed),
        "points": total,
        "fraction_within": fraction,
        "threshold_sigma": 3.0,
        "pass_fraction": 0.95,
        "xi_range": [0.05, 2.0],
        "series": series,
    }
    _emit(args.out, json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"{within}/{total} points within 3 sigma: {'pass' if passed else 'fail'}", file=sys.stderr)
    return EXIT_OK if passed else EXIT_COMPARE


# ---------------------------------------------------------------------------
# persistence


def cmd_persistence(args) -> int:
    res = persistence_curve(args.dim, args.steps, args.reals, args.seed, workers=args.workers)
    lines = ["t,q_hat,stderr"]
    for t, q, s in zip(res.t, res.q_hat, res.stderr):
        lines.append(f"{int(t)},{fmt(q)},{fmt(s)}")
    _emit(args.out, "\n".join(lines) + "\n")
    try:
        slope, err = fit_loglog_slope(res.t, res.q_hat, res.stderr, t_min=args.steps / 10)
        print(f"log-log slope over t in [{args.steps / 10:g}, {args.steps}]: {slope:.4f} +- {err:.4f}",
              file=sys.stderr)
    except ValueError as exc:
        print(f"slope not available: {exc}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# plot

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_MARKERS = ("circle", "diamond", "triangle", "star")


def _marker(kind: str, x: float, y: float, color: str) -> str:
    if kind == "circle":
        return f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="none" stroke="{color}"/>'
    if kind == "diamond":
        pts = [(x, y - 4), (x + 4, y), (x, y + 4), (x - 4, y)]
    elif kind == "triangle":
        pts = [(x, y - 4), (x + 4, y + 3), (x - 4, y + 3)]
    else:
        pts = []
        for k in range(10):
            r = 4.5 if k % 2 == 0 else 2.0
            a = math.pi / 2 + k * math.pi / 5
            pts.append((x + r * math.cos(a), y - r * math.sin(a)))
    body = " ".join(f"{px:.2f},{py:.2f}" for px, py in pts)
    return f'<polygon points="{body}" fill="none" stroke="{color}"/>'


class _Axes:
    W, H = 640, 440
    LEFT, RIGHT, TOP, BOTTOM = 70, 150, 20, 50

    def __init__(self, xlim, ylim, logx):
        self.logx = logx
        self.x0, self.x1 = (math.log10(v) for v in xlim) if logx else xlim
        self.y0, self.y1 = ylim

    def x(self, v):
        v = math.log10(v) if self.logx else v
        return self.LEFT + (v - self.x0) / (self.x1 - self.x0) * (self.W - self.LEFT - self.RIGHT)

    def y(self, v):
        return self.H - self.BOTTOM - (v - self.y0) / (self.y1 - self.y0) * (self.H - self.TOP - self.BOTTOM)


def _ticks(lo, hi, logx):
    if logx:
        return [10.0**k for k in range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1)
                if lo <= 10.0**k <= hi]
    step = 10 ** math.floor(math.log10((hi - lo) / 4))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (m * step) <= 6:
            step *= m
            break
    start = math.ceil(lo / step) * step
    return [round(start + k * step, 10) for k in range(int((hi - start) / step + 1e-9) + 1)]


def render_svg(series, logx=False) -> str:
    """Deterministic SVG for a list of ``(label, xs, ys, style)`` series.

    ``style`` is ``"line"`` (one polyline) or a marker name.
    """
    xs = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    if logx:
        xs = xs[xs > 0]
    if xs.size == 0:
        raise CliError("nothing to plot")
    xlim = (float(xs.min()), float(xs.max()))
    if xlim[0] == xlim[1]:
        xlim = (xlim[0] / 2, xlim[0] * 2) if logx else (xlim[0] - 0.5, xlim[0] + 0.5)
    ax = _Axes(xlim, (0.0, 1.05), logx)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{ax.W}" height="{ax.H}" viewBox="0 0 {ax.W} {ax.H}">',
        '<rect x="0" y="0" width="100%" height="100%" fill="white"/>',
        '<g id="axes" stroke="black" fill="none">',
        f'<line x1="{ax.LEFT}" y1="{ax.y(0):.2f}" x2="{ax.W - ax.RIGHT}" y2="{ax.y(0):.2f}"/>',
        f'<line x1="{ax.LEFT}" y1="{ax.y(0):.2f}" x2="{ax.LEFT}" y2="{ax.TOP}"/>',
        "</g>",
        '<g id="ticks" font-family="sans-serif" font-size="11">',
    ]
    for v in _ticks(*xlim, logx):
        px = ax.x(v)
        out.append(f'<line x1="{px:.2f}" y1="{ax.y(0):.2f}" x2="{px:.2f}" y2="{ax.y(0) + 5:.2f}" stroke="black"/>')
        out.append(f'<text x="{px:.2f}" y="{ax.y(0) + 18:.2f}" text-anchor="middle">{v:g}</text>')
    for v in (0.0, 0.25, 0.5, 0.75, 1.0):
        py = ax.y(v)
        out.append(f'<line x1="{ax.LEFT - 5}" y1="{py:.2f}" x2="{ax.LEFT}" y2="{py:.2f}" stroke="black"/>')
        out.append(f'<text x="{ax.LEFT - 8}" y="{py + 4:.2f}" text-anchor="end">{v:g}</text>')
    out.append("</g>")
    out.append(f'<text x="{(ax.LEFT + ax.W - ax.RIGHT) / 2:.1f}" y="{ax.H - 10}" '
               'font-family="sans-serif" font-size="13" text-anchor="middle">xi</text>')
    out.append(f'<text x="18" y="{(ax.TOP + ax.H - ax.BOTTOM) / 2:.1f}" font-family="sans-serif" '
               f'font-size="13" text-anchor="middle" transform="rotate(-90 18 {(ax.TOP + ax.H - ax.BOTTOM) / 2:.1f})">Phi</text>')
    legend = ['<g id="legend" font-family="sans-serif" font-size="11">']
    for k, (label, sx, sy, style) in enumerate(series):
        color = "black" if style == "line" else _COLORS[k % len(_COLORS)]
        pts = [(ax.x(a), ax.y(b)) for a, b in zip(sx, sy) if not (logx and a <= 0)]
        out.append(f'<g class="series" id="series-{k}">')
        if style == "line":
            body = " ".join(f"{px:.2f},{py:.2f}" for px, py in pts)
            out.append(f'<polyline points="{body}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        else:
            out.extend(_marker(style, px, py, color) for px, py in pts)
        out.append("</g>")
        ly = ax.TOP + 10 + 18 * k
        lx = ax.W - ax.RIGHT + 15
        if style == "line":
            legend.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 16}" y2="{ly}" stroke="{color}"/>')
        else:
            legend.append(_marker(style, lx + 8, ly, color))
        legend.append(f'<text x="{lx + 22}" y="{ly + 4}">{label}</text>')
    legend.append("</g>")
    out.extend(legend)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_plot(args) -> int:
    results = _load_results(args.results or [])
    if args.dim is not None:
        results = [r for r in results if r.dim == args.dim]
    series = []
    for res in results:
        for R in res.separations:
            if R == 0:
                continue
            curve = collapse(res, R)
            xs, ys, _ = curve.arrays()
            style = _MARKERS[len(series) % len(_MARKERS)]
            series.append((f"d={res.dim} R={R}", xs, ys, style))
    if args.analytic:
        dims = sorted({r.dim for r in results}) if args.dim is None else [args.dim]
        if not dims:
            raise CliError("--analytic needs --dim or a results file")
        if series:
            lo = min(float(np.min(s[1][s[1] > 0])) for s in series) if args.logx else 0.0
            hi = max(float(np.max(s[1])) for s in series)
        else:
            lo, hi = (0.01, 3.0) if args.logx else (0.0, 3.0)
        grid = np.geomspace(lo, hi, 121) if args.logx else np.linspace(lo, hi, 121)
        for d in dims:
            if d >= 4:
                raise DivergenceError(d)
            series.append((f"Phi_{d} analytic", grid, [phi_value(float(x), d) for x in grid], "line"))
    if not series:
        raise CliError("nothing to plot: pass --results and/or --analytic")
    _emit(args.out, render_svg(series, logx=args.logx))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="walkoverlap", description="Overlap of two lattice random walks.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scaling", help="tabulate the analytic scaling function")
    s.add_argument("--dim", type=float, required=True)
    s.add_argument("--xi-min", type=float, default=0.0)
    s.add_argument("--xi-max", type=float, default=3.0)
    s.add_argument("--points", type=_positive_int, default=61)
    s.add_argument("--method", choices=("closed", "quadrature", "series"), default="closed")
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_scaling)

    s = sub.add_parser("simulate", help="run a Monte Carlo campaign")
    s.add_argument("--dim", type=_positive_int, required=True)
    s.add_argument("--radius", type=_nonneg_int, action="append",
                   help="separation R (repeatable; default 5 10 20 50)")
    s.add_argument("--steps", type=_positive_int, required=True)
    s.add_argument("--reals", type=_positive_int, required=True)
    s.add_argument("--seed", type=_seed, required=True)
    s.add_argument("--workers", type=_positive_int, default=1)
    s.add_argument("--checkpoint", type=_nonneg_int, action="append",
                   help="extra checkpoint besides the powers of two (repeatable)")
    s.add_argument("--out-prefix", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("compare", help="compare measured collapse with the analytic curve")
    s.add_argument("--results", required=True)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("persistence", help="empirical no-return probability q(t)")
    s.add_argument("--dim", type=_positive_int, required=True)
    s.add_argument("--steps", type=_positive_int, required=True)
    s.add_argument("--reals", type=_positive_int, required=True)
    s.add_argument("--seed", type=_seed, required=True)
    s.add_argument("--workers", type=_positive_int, default=1)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_persistence)

    s = sub.add_parser("plot", help="write an SVG of measured and analytic curves")
    s.add_argument("--results", nargs="*", default=[])
    s.add_argument("--analytic", action="store_true")
    s.add_argument("--dim", type=int)
    s.add_argument("--logx", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except QuadratureError as exc:
        print(f"error: quadrature did not converge: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ValueError, KeyError, OSError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
