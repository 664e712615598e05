"""Ensembles of pair walks, scaling collapse and comparison with the analytic curves.

Stream assignment: separations are laid out in slots, slot 0 being the R = 0
baseline and slots 1.. the requested R values in the given order (duplicates
and an explicit 0 dropped). Realization ``i`` of slot ``k`` uses stream index
``k * n + i``; its two walkers use walker keys 0 and 1 of that stream.

Per-realization counts are summed as exact integers (and squared integers)
before any floating-point statistics, so results do not depend on how the
realizations are split across workers.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import rng as _rng
from .analytic import DivergenceError, phi_value
from .simulator import default_checkpoints, run_pairs, run_singles

CSV_COLUMNS = ("dim", "R", "t", "xi", "mean_w2", "stderr_w2", "mean_w1", "stderr_w1", "n")
STREAM_RULE = "stream = slot * n + realization; slot 0 is R=0, slots 1.. follow the separations"

DEFAULT_SEPARATIONS = (5, 10, 20, 50)
DESK_STEPS = 2**14
DESK_REALIZATIONS = 2**14


def fmt(x: float) -> str:
    """17 significant digits; enough to round-trip any double."""
    return format(float(x), ".17g")


def xi_of(R, t):
    """Scaling variable R / sqrt(2t) in lattice units."""
    return np.asarray(R, dtype=float) / np.sqrt(2.0 * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class EnsembleConfig:
    dim: int
    master_seed: int
    separations: tuple[int, ...] = DEFAULT_SEPARATIONS
    steps: int = DESK_STEPS
    realizations: int = DESK_REALIZATIONS
    workers: int = 1
    checkpoints: tuple[int, ...] | None = None
    backend: str | None = None

    def __post_init__(self):
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if any(int(r) < 0 for r in self.separations):
            raise ValueError("separations must be nonnegative")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        # squared counts summed over n realizations must stay inside int64
        if self.realizations * (self.steps + 1) ** 2 >= 2**62:
            raise ValueError("steps and realizations too large for exact int64 sums")
        cp = default_checkpoints(self.steps) if self.checkpoints is None else self.checkpoints
        object.__setattr__(self, "checkpoints", tuple(int(c) for c in cp))
        object.__setattr__(self, "separations", tuple(int(r) for r in self.separations))

    @property
    def slots(self) -> tuple[int, ...]:
        out = [0]
        for r in self.separations:
            if r not in out:
                out.append(r)
        return tuple(out)

    def stream_range(self, R: int) -> tuple[int, int]:
        k = self.slots.index(R)
        return k * self.realizations, (k + 1) * self.realizations


def _stderr(s1: int, s2: int, n: int) -> float:
    # sample variance with n-1 normalization, divided by n; exact integer numerator
    if n < 2:
        return 0.0
    num = n * s2 - s1 * s1
    return math.sqrt(num / (n * n * (n - 1)))


@dataclass
class EnsembleResult:
    """Means and standard errors per (R, checkpoint).

    Arrays are indexed ``[slot, checkpoint]`` with ``separations[0] == 0``.
    """

    dim: int
    separations: tuple[int, ...]
    checkpoints: np.ndarray
    n: int
    mean_w2: np.ndarray
    stderr_w2: np.ndarray
    mean_w1: np.ndarray
    stderr_w1: np.ndarray
    stderr_defined: bool = True

    @classmethod
    def from_sums(cls, dim, separations, checkpoints, n, sums) -> "EnsembleResult":
        shape = (len(separations), len(checkpoints))
        out = {k: np.zeros(shape) for k in ("mean_w2", "stderr_w2", "mean_w1", "stderr_w1")}
        for i in range(shape[0]):
            for j in range(shape[1]):
                s1, s2, v1, v2 = (int(sums[k][i, j]) for k in ("w2", "w2sq", "w1", "w1sq"))
                out["mean_w2"][i, j] = s1 / n
                out["stderr_w2"][i, j] = _stderr(s1, s2, n)
                out["mean_w1"][i, j] = v1 / n
                out["stderr_w1"][i, j] = _stderr(v1, v2, n)
        return cls(dim, tuple(separations), np.asarray(checkpoints, dtype=np.int64), n,
                   stderr_defined=n >= 2, **out)

    def slot(self, R: int) -> int:
        try:
            return self.separations.index(int(R))
        except ValueError:
            raise KeyError(f"no rows for R={R}") from None

    def rows(self):
        for i, R in enumerate(self.separations):
            for j, t in enumerate(self.checkpoints):
                xi = float(xi_of(R, t)) if t > 0 else math.inf
                yield (self.dim, R, int(t), xi, self.mean_w2[i, j], self.stderr_w2[i, j],
                       self.mean_w1[i, j], self.stderr_w1[i, j], self.n)


@dataclass
class RunManifest:
    config: dict
    master_seed: int
    code_version: str
    timestamp: str
    stream_ranges: dict
    stream_rule: str = STREAM_RULE
    rng: str = "splitmix64 counter streams; one 64-bit draw per step"
    conventions: dict = field(default_factory=lambda: {
        "start_sites_visited_at_t0": True,
        "walker2_start": "R * e_1",
        "stepping": "alternating single steps, walker 1 first",
        "xi": "R / sqrt(2 t)",
        "stderr": "sample std (n-1) / sqrt(n)",
    })

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def _pair_chunk(args):
    dim, R, steps, checkpoints, seed, first, count, backend = args
    streams = np.arange(first, first + count, dtype=np.int64)
    k1 = _rng.walker_keys(seed, streams, 0)
    k2 = _rng.walker_keys(seed, streams, 1)
    ov, v1, _, _ = run_pairs(dim, R, steps, np.asarray(checkpoints), k1, k2, backend)
    return ov.sum(0), (ov * ov).sum(0), v1.sum(0), (v1 * v1).sum(0)


def _chunks(first: int, n: int, workers: int):
    size = n if workers == 1 else max(1, min(4096, -(-n // (4 * workers))))
    for start in range(0, n, size):
        yield first + start, min(size, n - start)


def _map(func, tasks, workers):
    if workers == 1 or len(tasks) == 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(func, tasks))


def run_ensemble(config: EnsembleConfig) -> tuple[EnsembleResult, RunManifest]:
    """Run every slot of the campaign and aggregate exact integer sums."""
    slots = config.slots
    n = config.realizations
    cp = config.checkpoints
    tasks, owner = [], []
    for k, R in enumerate(slots):
        first, _ = config.stream_range(R)
        for start, count in _chunks(first, n, config.workers):
            tasks.append((config.dim, R, config.steps, cp, config.master_seed, start, count, config.backend))
            owner.append(k)
    parts = _map(_pair_chunk, tasks, config.workers)

    shape = (len(slots), len(cp))
    sums = {k: np.zeros(shape, dtype=np.int64) for k in ("w2", "w2sq", "w1", "w1sq")}
    # merged in stream-index order; integer addition is exact so order is immaterial anyway
    for k, part in zip(owner, parts):
        for name, arr in zip(("w2", "w2sq", "w1", "w1sq"), part):
            sums[name][k] += arr
    result = EnsembleResult.from_sums(config.dim, slots, cp, n, sums)
    manifest = RunManifest(
        config={
            "dim": config.dim,
            "separations": list(slots),
            "steps": config.steps,
            "realizations": n,
            "checkpoints": list(cp),
            "workers": config.workers,
        },
        master_seed=int(config.master_seed),
        code_version=__version__,
        timestamp=_timestamp(),
        stream_ranges={str(R): list(config.stream_range(R)) for R in slots},
    )
    return result, manifest


# ---------------------------------------------------------------------------
# derived curves


@dataclass(frozen=True)
class CurvePoint:
    t: int
    xi: float
    phi: float
    sigma: float


@dataclass(frozen=True)
class ScalingCurve:
    dim: int
    R: int
    points: tuple[CurvePoint, ...]
    provenance: str = "measured"

    def arrays(self):
        return (np.array([p.xi for p in self.points]),
                np.array([p.phi for p in self.points]),
                np.array([p.sigma for p in self.points]))


def collapse(res: EnsembleResult, R: int) -> ScalingCurve:
    """Phi(t) = mean_w2(R, t) / mean_w2(0, t) with delta-method errors.

    The two ensembles use disjoint streams and are treated as independent.
    """
    i = res.slot(R)
    try:
        b = res.slot(0)
    except KeyError:
        raise KeyError("collapse needs the R=0 baseline rows") from None
    pts = []
    for j, t in enumerate(res.checkpoints):
        if t <= 0:
            continue
        num, den = res.mean_w2[i, j], res.mean_w2[b, j]
        sn, sd = res.stderr_w2[i, j], res.stderr_w2[b, j]
        ratio = num / den
        sigma = math.sqrt((sn / den) ** 2 + (num * sd / den**2) ** 2)
        pts.append(CurvePoint(int(t), float(xi_of(R, t)), ratio, sigma))
    return ScalingCurve(res.dim, int(R), tuple(pts), "measured")


def analytic_curve(dim: float, xis, method: str = "auto") -> ScalingCurve:
    pts = tuple(CurvePoint(0, float(x), phi_value(float(x), dim, method), 0.0) for x in xis)
    return ScalingCurve(dim, 0, pts, "analytic")


@dataclass(frozen=True)
class FractionCurve:
    R: int
    t: np.ndarray
    f: np.ndarray
    sigma: np.ndarray
    t_at_max: int
    f_max: float


def fraction_curve(res: EnsembleResult, R: int) -> FractionCurve:
    """Overlap fraction w2(R, t) / w1(t) and its maximum over the checkpoints.

    Numerator and denominator come from the same realizations; the error bar
    ignores their (positive) correlation and is therefore conservative.
    """
    i = res.slot(R)
    mask = res.checkpoints > 0
    w2, s2 = res.mean_w2[i, mask], res.stderr_w2[i, mask]
    w1, s1 = res.mean_w1[i, mask], res.stderr_w1[i, mask]
    f = w2 / w1
    sigma = np.sqrt((s2 / w1) ** 2 + (w2 * s1 / w1**2) ** 2)
    t = res.checkpoints[mask]
    k = int(np.argmax(f))
    return FractionCurve(int(R), t, f, sigma, int(t[k]), float(f[k]))


# ---------------------------------------------------------------------------
# comparison


@dataclass(frozen=True)
class ComparePoint:
    t: int
    xi: float
    measured: float
    sigma: float
    expected: float
    residual: float
    pull: float


@dataclass(frozen=True)
class CompareReport:
    dim: int
    R: int
    points: tuple[ComparePoint, ...]
    max_abs_pull: float
    fraction_within: float
    threshold: float
    pass_fraction: float

    @property
    def passed(self) -> bool:
        return len(self.points) > 0 and self.fraction_within >= self.pass_fraction

    def summary(self) -> dict:
        return {
            "dim": self.dim, "R": self.R, "points": len(self.points),
            "max_abs_pull": float(self.max_abs_pull), "fraction_within": self.fraction_within,
            "threshold_sigma": self.threshold, "pass_fraction": self.pass_fraction,
            "passed": bool(self.passed),
        }


def _pull(residual: float, sigma: float) -> float:
    if sigma > 0:
        return residual / sigma
    return 0.0 if residual == 0 else math.copysign(math.inf, residual)


def compare(measured: ScalingCurve, analytic=None, xi_range=(0.05, 2.0),
            threshold: float = 3.0, pass_fraction: float = 0.95) -> CompareReport:
    """Residuals and pulls of a measured curve against the analytic Phi_d.

    ``analytic`` is a callable ``xi -> phi`` (default: :func:`phi_value` for the
    curve's dimension) or a :class:`ScalingCurve` sampled at the same xi values.
    """
    if measured.dim >= 4 and analytic is None:
        raise DivergenceError(measured.dim)
    if isinstance(analytic, ScalingCurve):
        table = {p.xi: p.phi for p in analytic.points}
        source = table.__getitem__
    elif analytic is None:
        source = lambda x: phi_value(x, measured.dim)  # noqa: E731
    else:
        source = analytic
    lo, hi = xi_range
    pts = []
    for p in measured.points:
        if not lo <= p.xi <= hi:
            continue
        expected = source(p.xi)
        res = p.phi - expected
        pts.append(ComparePoint(p.t, p.xi, p.phi, p.sigma, expected, res, _pull(res, p.sigma)))
    pulls = np.array([abs(p.pull) for p in pts])
    return CompareReport(
        measured.dim, measured.R, tuple(pts),
        float(pulls.max()) if pts else 0.0,
        float(np.mean(pulls <= threshold)) if pts else 0.0,
        threshold, pass_fraction,
    )


def compare_series(a: ScalingCurve, b: ScalingCurve, xi_range=(0.05, 2.0)) -> list[tuple[float, float]]:
    """Joint pulls between two measured curves at the xi values they share."""
    lookup = {round(p.xi, 12): p for p in b.points}
    out = []
    for p in a.points:
        q = lookup.get(round(p.xi, 12))
        if q is None or not xi_range[0] <= p.xi <= xi_range[1]:
            continue
        out.append((p.xi, _pull(p.phi - q.phi, math.hypot(p.sigma, q.sigma))))
    return out


# ---------------------------------------------------------------------------
# persistence


@dataclass(frozen=True)
class PersistenceResult:
    dim: int
    t: np.ndarray
    q_hat: np.ndarray
    stderr: np.ndarray
    n: int
    mean_visited: np.ndarray


def _single_chunk(args):
    dim, steps, checkpoints, seed, first, count, backend = args
    keys = _rng.walker_keys(seed, np.arange(first, first + count, dtype=np.int64), 0)
    vis, ret = run_singles(dim, steps, np.asarray(checkpoints), keys, backend)
    return ret, vis.sum(0)


def persistence_curve(dim: int, steps: int, realizations: int, master_seed: int,
                      workers: int = 1, checkpoints=None, backend=None) -> PersistenceResult:
    """Empirical q(t) = P(no return to the start site within t steps)."""
    cp = default_checkpoints(steps) if checkpoints is None else np.asarray(checkpoints, dtype=np.int64)
    tasks = [(dim, steps, tuple(cp), master_seed, s, c, backend)
             for s, c in _chunks(0, realizations, workers)]
    parts = _map(_single_chunk, tasks, workers)
    ret = np.concatenate([p[0] for p in parts])
    vis_sum = sum(p[1] for p in parts)
    survived = np.array([np.count_nonzero((ret < 0) | (ret > t)) for t in cp], dtype=np.int64)
    n = realizations
    q = survived / n
    stderr = np.sqrt(q * (1 - q) / n)
    return PersistenceResult(dim, np.asarray(cp), q, stderr, n, vis_sum / n)


def fit_loglog_slope(t, y, sigma, t_min=None, t_max=None) -> tuple[float, float]:
    """Weighted least-squares slope of log y against log t, and its standard error."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    sel = (y > 0) & (sigma > 0)
    if t_min is not None:
        sel &= t >= t_min
    if t_max is not None:
        sel &= t <= t_max
    if sel.sum() < 2:
        raise ValueError("need at least two points with positive values to fit")
    x = np.log(t[sel])
    z = np.log(y[sel])
    w = (y[sel] / sigma[sel]) ** 2
    coef, cov = np.polyfit(x, z, 1, w=np.sqrt(w), cov="unscaled")
    return float(coef[0]), float(math.sqrt(cov[0, 0]))


# ---------------------------------------------------------------------------
# files


def write_results_csv(res: EnsembleResult, path) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for dim, R, t, xi, m2, s2, m1, s1, n in res.rows():
        lines.append(",".join([str(dim), str(R), str(t), fmt(xi), fmt(m2), fmt(s2), fmt(m1), fmt(s1), str(n)]))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_results_csv(path) -> list[EnsembleResult]:
    """Parse a results file back into one :class:`EnsembleResult` per dimension."""
    import csv

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(CSV_COLUMNS)}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    by_dim: dict[int, list] = {}
    for row in rows:
        by_dim.setdefault(int(row["dim"]), []).append(row)
    out = []
    for dim, drows in sorted(by_dim.items()):
        seps = sorted({int(r["R"]) for r in drows})
        cps = sorted({int(r["t"]) for r in drows})
        shape = (len(seps), len(cps))
        arrs = {k: np.full(shape, np.nan) for k in ("mean_w2", "stderr_w2", "mean_w1", "stderr_w1")}
        ns = set()
        for r in drows:
            i, j = seps.index(int(r["R"])), cps.index(int(r["t"]))
            for k in arrs:
                arrs[k][i, j] = float(r[k])
            ns.add(int(r["n"]))
        if any(np.isnan(a).any() for a in arrs.values()):
            raise ValueError(f"{path}: dimension {dim} rows do not cover every (R, t) pair")
        n = min(ns)
        out.append(EnsembleResult(dim, tuple(seps), np.array(cps, dtype=np.int64), n,
                                  stderr_defined=n >= 2, **arrs))
    return out
