"""Simple symmetric random walks on Z^d: visited sets, pair overlap, first return.

Walker 1 starts at the origin, walker 2 at ``R * e_1``. Both start sites count
as visited at t = 0, and the two walkers advance alternately one step each, so
every checkpoint ``t`` reports the state after t steps of both walkers.

Two backends produce the same integers from the same keys:

* ``numba``: one open-addressing hash table keyed by full coordinates, with a
  per-site two-bit mask (walker 1, walker 2). When a walker reaches a site it
  has not visited before, the overlap counter is incremented iff the other
  walker's bit is already set. Expected O(1) per step.
* ``numpy``: whole trajectories at once, first-visit times via ``np.unique``,
  and |A & B|(t) = #{sites with max(first_A, first_B) <= t}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from ._accel import njit, resolve_backend

MAX_DIM = 8
MAX_COORD = 2**31 - 1

# per-axis hash multipliers (odd, 64-bit); the table hash is mix64(sum c_k * m_k)
_HASH_MULTS = np.array(
    [
        0x9E3779B97F4A7C15, 0xC2B2AE3D27D4EB4F, 0x165667B19E3779F9, 0xD6E8FEB86659FD93,
        0xFF51AFD7ED558CCD, 0xC4CEB9FE1A85EC53, 0x2545F4914F6CDD1D, 0x4F1BBCDCBFA53E0B,
    ],
    dtype=np.uint64,
)

NO_RETURN = -1


def default_checkpoints(t_max: int) -> np.ndarray:
    """Powers of two up to ``t_max``, plus ``t_max`` itself."""
    pts = []
    t = 1
    while t <= t_max:
        pts.append(t)
        t *= 2
    if pts[-1] != t_max:
        pts.append(t_max)
    return np.array(pts, dtype=np.int64)


def _validate_checkpoints(checkpoints, t_max: int) -> np.ndarray:
    cp = np.asarray(checkpoints, dtype=np.int64)
    if cp.ndim != 1 or cp.size == 0:
        raise ValueError("checkpoints must be a nonempty 1-d sequence")
    if np.any(np.diff(cp) <= 0):
        raise ValueError("checkpoints must be strictly increasing")
    if cp[0] < 0 or cp[-1] > t_max:
        raise ValueError(f"checkpoints must lie in [0, {t_max}]")
    return cp


@dataclass(frozen=True)
class PairRunConfig:
    dim: int
    separation: int
    steps: int
    checkpoints: np.ndarray = field(default=None)

    def __post_init__(self):
        if not 1 <= self.dim <= MAX_DIM:
            raise ValueError(f"dim must be in [1, {MAX_DIM}], got {self.dim}")
        if self.separation < 0:
            raise ValueError("separation must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.steps + self.separation > MAX_COORD:
            raise ValueError("steps + separation exceeds the coordinate range")
        cp = default_checkpoints(self.steps) if self.checkpoints is None else self.checkpoints
        object.__setattr__(self, "checkpoints", _validate_checkpoints(cp, self.steps))


@dataclass(frozen=True)
class OverlapTrace:
    """Counts at each checkpoint of one realization (walker 1 = A, walker 2 = B)."""

    checkpoints: np.ndarray
    overlap: np.ndarray
    visited_1: np.ndarray
    visited_2: np.ndarray
    first_return_1: int | None


@dataclass(frozen=True)
class PersistenceTrace:
    first_return_time: int | None


# ---------------------------------------------------------------------------
# numba kernels


@njit
def _table_capacity(t_max):
    need = 4 * (t_max + 1)
    cap = 16
    while cap < need:
        cap *= 2
    return cap


# table row layout: [generation stamp, walker bit mask, coord_0 .. coord_{d-1}]
_STAMP = 0
_FLAGS = 1
_C0 = 2


@njit
def _probe(table, gen, mask, pos, h, dim):
    # slot holding pos, or the empty slot where it belongs
    slot = np.int64(_rng.mix64(h) & np.uint64(mask))
    while True:
        row = table[slot]
        if row[_STAMP] != gen:
            return slot
        same = True
        for k in range(dim):
            if row[_C0 + k] != pos[k]:
                same = False
                break
        if same:
            return slot
        slot = (slot + 1) & mask


@njit
def _claim(table, gen, slot, pos, dim):
    # returns the walker bit mask the site had before this visit
    row = table[slot]
    if row[_STAMP] != gen:
        row[_STAMP] = gen
        row[_FLAGS] = 0
        for k in range(dim):
            row[_C0 + k] = pos[k]
        return 0
    return row[_FLAGS]


@njit
def _move(pos, h, mults, d):
    ax = d >> 1
    if d & 1:
        pos[ax] -= 1
        return h - mults[ax]
    pos[ax] += 1
    return h + mults[ax]


@njit
def _at_origin(pos, dim):
    for k in range(dim):
        if pos[k] != 0:
            return False
    return True


@njit
def _pair_kernel(dim, sep, t_max, checkpoints, keys1, keys2,
                 out_overlap, out_vis1, out_vis2, out_ret1):
    n = keys1.shape[0]
    ncp = checkpoints.shape[0]
    cap = _table_capacity(t_max)
    mask = cap - 1
    table = np.zeros((cap, _C0 + dim), dtype=np.int32)
    mults = _HASH_MULTS[:dim].copy()
    two_d = 2 * dim
    pos1 = np.zeros(dim, dtype=np.int32)
    pos2 = np.zeros(dim, dtype=np.int32)
    for r in range(n):
        gen = r + 1
        pos1[:] = 0
        pos2[:] = 0
        pos2[0] = sep
        h1 = np.uint64(0)
        h2 = np.uint64(sep) * mults[0]
        s = _probe(table, gen, mask, pos1, h1, dim)
        table[s, _FLAGS] = _claim(table, gen, s, pos1, dim) | 1
        s = _probe(table, gen, mask, pos2, h2, dim)
        table[s, _FLAGS] = _claim(table, gen, s, pos2, dim) | 2
        overlap = 1 if sep == 0 else 0
        vis1 = 1
        vis2 = 1
        ret1 = -1
        key1 = keys1[r]
        key2 = keys2[r]
        ci = 0
        if checkpoints[0] == 0:
            out_overlap[r, 0] = overlap
            out_vis1[r, 0] = vis1
            out_vis2[r, 0] = vis2
            ci = 1
        for t in range(1, t_max + 1):
            c = np.uint64(t)
            h1 = _move(pos1, h1, mults, _rng.draw_direction(key1, c, two_d))
            s = _probe(table, gen, mask, pos1, h1, dim)
            f = _claim(table, gen, s, pos1, dim)
            if not (f & 1):
                table[s, _FLAGS] = f | 1
                vis1 += 1
                if f & 2:
                    overlap += 1
            if ret1 < 0 and _at_origin(pos1, dim):
                ret1 = t
            h2 = _move(pos2, h2, mults, _rng.draw_direction(key2, c, two_d))
            s = _probe(table, gen, mask, pos2, h2, dim)
            f = _claim(table, gen, s, pos2, dim)
            if not (f & 2):
                table[s, _FLAGS] = f | 2
                vis2 += 1
                if f & 1:
                    overlap += 1
            if ci < ncp and checkpoints[ci] == t:
                out_overlap[r, ci] = overlap
                out_vis1[r, ci] = vis1
                out_vis2[r, ci] = vis2
                ci += 1
        out_ret1[r] = ret1


@njit
def _single_kernel(dim, t_max, checkpoints, keys, out_vis, out_ret):
    n = keys.shape[0]
    ncp = checkpoints.shape[0]
    cap = _table_capacity(t_max)
    mask = cap - 1
    table = np.zeros((cap, _C0 + dim), dtype=np.int32)
    mults = _HASH_MULTS[:dim].copy()
    two_d = 2 * dim
    pos = np.zeros(dim, dtype=np.int32)
    for r in range(n):
        gen = r + 1
        pos[:] = 0
        h = np.uint64(0)
        s = _probe(table, gen, mask, pos, h, dim)
        _claim(table, gen, s, pos, dim)
        vis = 1
        ret = -1
        key = keys[r]
        ci = 0
        if checkpoints[0] == 0:
            out_vis[r, 0] = vis
            ci = 1
        for t in range(1, t_max + 1):
            h = _move(pos, h, mults, _rng.draw_direction(key, np.uint64(t), two_d))
            s = _probe(table, gen, mask, pos, h, dim)
            if table[s, _STAMP] != gen:
                _claim(table, gen, s, pos, dim)
                vis += 1
            elif ret < 0 and _at_origin(pos, dim):
                ret = t
            if ci < ncp and checkpoints[ci] == t:
                out_vis[r, ci] = vis
                ci += 1
        out_ret[r] = ret


# ---------------------------------------------------------------------------
# numpy route


def trajectory(key: int, dim: int, steps: int, start=None) -> np.ndarray:
    """Positions at t = 0..steps as an ``(steps + 1, dim)`` int64 array."""
    dirs = _rng.directions(key, steps, dim)
    moves = np.zeros((steps, dim), dtype=np.int64)
    moves[np.arange(steps), dirs >> 1] = 1 - 2 * (dirs & 1)
    path = np.zeros((steps + 1, dim), dtype=np.int64)
    np.cumsum(moves, axis=0, out=path[1:])
    if start is not None:
        path += np.asarray(start, dtype=np.int64)
    return path


def _site_codes(path: np.ndarray, bound: int) -> np.ndarray:
    """Injective integer (or byte-string) code per row, for |coord| <= bound."""
    dim = path.shape[1]
    width = 2 * bound + 1
    if width**dim < 2**62:
        code = np.zeros(path.shape[0], dtype=np.int64)
        for k in range(dim):
            code = code * width + (path[:, k] + bound)
        return code
    rows = np.ascontiguousarray(path)
    return rows.view(np.dtype((np.void, rows.dtype.itemsize * dim))).ravel()


def _first_visits(codes: np.ndarray):
    uniq, first = np.unique(codes, return_index=True)
    return uniq, first


def _pairs_numpy(dim, sep, t_max, checkpoints, keys1, keys2):
    n = len(keys1)
    ncp = len(checkpoints)
    overlap = np.empty((n, ncp), dtype=np.int64)
    vis1 = np.empty((n, ncp), dtype=np.int64)
    vis2 = np.empty((n, ncp), dtype=np.int64)
    ret1 = np.empty(n, dtype=np.int64)
    bound = t_max + sep
    start2 = np.zeros(dim, dtype=np.int64)
    start2[0] = sep
    for r in range(n):
        pa = trajectory(int(keys1[r]), dim, t_max)
        pb = trajectory(int(keys2[r]), dim, t_max, start2)
        ca = _site_codes(pa, bound)
        cb = _site_codes(pb, bound)
        ua, fa = _first_visits(ca)
        ub, fb = _first_visits(cb)
        _, ia, ib = np.intersect1d(ua, ub, assume_unique=True, return_indices=True)
        both = np.sort(np.maximum(fa[ia], fb[ib]))
        overlap[r] = np.searchsorted(both, checkpoints, side="right")
        vis1[r] = np.searchsorted(np.sort(fa), checkpoints, side="right")
        vis2[r] = np.searchsorted(np.sort(fb), checkpoints, side="right")
        home = np.flatnonzero(ca[1:] == ca[0])
        ret1[r] = home[0] + 1 if home.size else NO_RETURN
    return overlap, vis1, vis2, ret1


def _singles_numpy(dim, t_max, checkpoints, keys):
    n = len(keys)
    vis = np.empty((n, len(checkpoints)), dtype=np.int64)
    ret = np.empty(n, dtype=np.int64)
    for r in range(n):
        path = trajectory(int(keys[r]), dim, t_max)
        codes = _site_codes(path, t_max)
        _, first = _first_visits(codes)
        vis[r] = np.searchsorted(np.sort(first), checkpoints, side="right")
        home = np.flatnonzero(codes[1:] == codes[0])
        ret[r] = home[0] + 1 if home.size else NO_RETURN
    return vis, ret


# ---------------------------------------------------------------------------
# public API


def run_pairs(dim: int, separation: int, steps: int, checkpoints, keys1, keys2,
              backend: str | None = None):
    """Run one pair realization per entry of ``keys1``/``keys2``.

    Returns ``(overlap, visited_1, visited_2, first_return_1)``; the first three
    are ``(n, len(checkpoints))`` int64 arrays, the last is length ``n`` with
    ``-1`` where walker 1 never returned within ``steps``.
    """
    cfg = PairRunConfig(dim, separation, steps, checkpoints)
    keys1 = np.ascontiguousarray(keys1, dtype=np.uint64)
    keys2 = np.ascontiguousarray(keys2, dtype=np.uint64)
    if keys1.shape != keys2.shape or keys1.ndim != 1:
        raise ValueError("keys1 and keys2 must be 1-d arrays of equal length")
    cp = cfg.checkpoints
    if resolve_backend(backend) == "numpy":
        return _pairs_numpy(dim, separation, steps, cp, keys1, keys2)
    n = keys1.shape[0]
    overlap = np.empty((n, cp.size), dtype=np.int64)
    vis1 = np.empty((n, cp.size), dtype=np.int64)
    vis2 = np.empty((n, cp.size), dtype=np.int64)
    ret1 = np.empty(n, dtype=np.int64)
    _pair_kernel(dim, separation, steps, cp, keys1, keys2, overlap, vis1, vis2, ret1)
    return overlap, vis1, vis2, ret1


def run_singles(dim: int, steps: int, checkpoints, keys, backend: str | None = None):
    """Visited-set sizes ``(n, len(checkpoints))`` and first-return times of single walks."""
    cfg = PairRunConfig(dim, 0, steps, checkpoints)
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    cp = cfg.checkpoints
    if resolve_backend(backend) == "numpy":
        return _singles_numpy(dim, steps, cp, keys)
    vis = np.empty((keys.shape[0], cp.size), dtype=np.int64)
    ret = np.empty(keys.shape[0], dtype=np.int64)
    _single_kernel(dim, steps, cp, keys, vis, ret)
    return vis, ret


def run_pair(config: PairRunConfig, stream: _rng.RngStream, backend: str | None = None) -> OverlapTrace:
    """One realization: walker 1 uses the stream's walker-0 key, walker 2 its walker-1 key."""
    k1 = np.array([stream.key(0)], dtype=np.uint64)
    k2 = np.array([stream.key(1)], dtype=np.uint64)
    ov, v1, v2, r1 = run_pairs(config.dim, config.separation, config.steps,
                               config.checkpoints, k1, k2, backend)
    return OverlapTrace(config.checkpoints, ov[0], v1[0], v2[0],
                        None if r1[0] == NO_RETURN else int(r1[0]))


def run_single(dim: int, steps: int, checkpoints, stream: _rng.RngStream,
               backend: str | None = None) -> tuple[np.ndarray, PersistenceTrace]:
    vis, ret = run_singles(dim, steps, checkpoints, np.array([stream.key(0)], dtype=np.uint64), backend)
    return vis[0], PersistenceTrace(None if ret[0] == NO_RETURN else int(ret[0]))


def step(pos, gen: _rng.CounterGenerator) -> tuple[int, ...]:
    """Move ``pos`` to a uniformly chosen nearest neighbour, using one draw of ``gen``."""
    pos = tuple(int(c) for c in pos)
    d = gen.direction(len(pos))
    ax = d >> 1
    out = list(pos)
    out[ax] += -1 if d & 1 else 1
    return tuple(out)
