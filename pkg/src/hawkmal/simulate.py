"""Hawkes path simulation by thinning, with a counter-based RNG so batches
are bit-reproducible under any parallelism.

The proposal envelope between candidates is

    lambda_bar = sup_{[t_now, T]} lambda_base  +  gamma(S(t_now))

where S(t_now) is the excitation sum including any jump at t_now.  This
dominates the true intensity on (t_now, next jump] whenever mu is
nonincreasing and gamma is nondecreasing, which the simulator requires.
A guard raises if a proposal ever exceeds the envelope (symptom of a
non-monotone custom gamma or a bad baseline bound).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, List, Optional

import numpy as np

from .model import AssumptionError, HawkesModel

__all__ = [
    "HawkesPath",
    "RngStream",
    "PathBatch",
    "simulate_path",
    "simulate_batch",
    "compensator",
    "compensator_batch",
]

# Fixed chunk width for batch fan-out.  Chunk boundaries depend only on path
# index, never on the worker count, so reductions downstream see identical
# arrays no matter how the work was scheduled.
_CHUNK = 4096
_MAX_ROUNDS = 500_000  # lockstep safety cap (candidates per path)
_ENVELOPE_SLACK = 1e-12


# ---------------------------------------------------------------------------
# counter-based RNG (Philox-4x32, 10 rounds)
# ---------------------------------------------------------------------------
# Each draw is addressed by (master_seed, path_index, draw_counter): the seed
# is the 2x32 key, the path index fills counter words 2-3 and the draw
# counter words 0-1.  One double in (0,1) per tick, from output words 0-1.

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_BUMP0 = np.uint32(0x9E3779B9)
_BUMP1 = np.uint32(0xBB67AE85)
_U32 = np.uint64(0xFFFFFFFF)


def _philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds on uint32 arrays; returns the four output words."""
    with np.errstate(over="ignore"):  # uint32 wrap-around is the algorithm
        for rnd in range(10):
            p0 = _M0 * c0.astype(np.uint64)
            p1 = _M1 * c2.astype(np.uint64)
            hi0 = (p0 >> np.uint64(32)).astype(np.uint32)
            lo0 = (p0 & _U32).astype(np.uint32)
            hi1 = (p1 >> np.uint64(32)).astype(np.uint32)
            lo1 = (p1 & _U32).astype(np.uint32)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
            if rnd < 9:
                k0 = k0 + _BUMP0
                k1 = k1 + _BUMP1
    return c0, c1, c2, c3


def _uniforms_at(master_seed: int, path_index: np.ndarray, draw: np.ndarray) -> np.ndarray:
    """Uniforms in (0,1), one per (path_index, draw) pair."""
    pi = np.asarray(path_index, dtype=np.uint64)
    dc = np.asarray(draw, dtype=np.uint64)
    c0 = (dc & _U32).astype(np.uint32)
    c1 = (dc >> np.uint64(32)).astype(np.uint32)
    c2 = (pi & _U32).astype(np.uint32)
    c3 = (pi >> np.uint64(32)).astype(np.uint32)
    seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
    k0 = np.uint32(seed & 0xFFFFFFFF)
    k1 = np.uint32(seed >> 32)
    w0, w1, _, _ = _philox4x32(c0, c1, c2, c3, k0, k1)
    bits = (w0.astype(np.uint64) << np.uint64(32)) | w1.astype(np.uint64)
    # 53-bit mantissa, offset by half an ulp: strictly inside (0,1)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


@dataclass
class RngStream:
    """Substream addressed by (master_seed, path_index).

    Draws are a pure function of (master_seed, path_index, draw_counter),
    so substreams are independent of thread scheduling and of how many
    other paths are being simulated.
    """

    master_seed: int
    path_index: int
    draw_counter: int = 0

    def uniforms(self, n: int) -> np.ndarray:
        idx = np.full(n, self.path_index, dtype=np.uint64)
        ctr = np.arange(self.draw_counter, self.draw_counter + n, dtype=np.uint64)
        self.draw_counter += n
        return _uniforms_at(self.master_seed, idx, ctr)

    def uniform(self) -> float:
        return float(self.uniforms(1)[0])


# ---------------------------------------------------------------------------
# path containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HawkesPath:
    """Jump instants 0 < t_1 < ... <= T on the window [0, T]."""

    jump_times: np.ndarray
    horizon: float

    def __post_init__(self):
        t = np.asarray(self.jump_times, dtype=float).ravel()
        if t.size:
            if t[0] <= 0.0 or t[-1] > self.horizon or np.any(np.diff(t) <= 0.0):
                raise ValueError(
                    "jump times must be strictly increasing in (0, T]"
                )
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "jump_times", t)
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def count(self) -> int:
        """N_T, the number of jumps on [0, T]."""
        return int(self.jump_times.size)


@dataclass(frozen=True)
class PathBatch:
    """A contiguous block of simulated paths in compressed form.

    ``flat_times[offsets[i]:offsets[i+1]]`` are the jump times of path
    ``first_index + i``.  Reproducible bit-exactly from
    (master_seed, index range, model, T).
    """

    horizon: float
    master_seed: int
    first_index: int
    offsets: np.ndarray   # (n_paths + 1,) int64
    flat_times: np.ndarray

    @property
    def n_paths(self) -> int:
        return int(self.offsets.size - 1)

    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def path(self, i: int) -> HawkesPath:
        lo, hi = int(self.offsets[i]), int(self.offsets[i + 1])
        return HawkesPath(self.flat_times[lo:hi], self.horizon)

    @property
    def paths(self) -> List[HawkesPath]:
        return [self.path(i) for i in range(self.n_paths)]

    def __len__(self) -> int:
        return self.n_paths

    def __iter__(self) -> Iterator[HawkesPath]:
        for i in range(self.n_paths):
            yield self.path(i)


# ---------------------------------------------------------------------------
# thinning engines
# ---------------------------------------------------------------------------

def _check_simulable(model: HawkesModel) -> None:
    if not model.nonlinearity.monotone:
        raise AssumptionError(
            "thinning envelope requires a nondecreasing nonlinearity"
        )
    k = model.kernel
    if not (k.nonincreasing or k.is_null()):
        raise AssumptionError(
            "thinning envelope requires a nonincreasing kernel; "
            "construct it with nonincreasing=True if that holds"
        )


def _simulate_chunk_markov(model, T, seed, first, n, start_ctr=0):
    """Lockstep thinning for exponential (or null) kernels.

    The excitation sum is Markov: S decays by exp(-beta dt) and gains
    alpha = mu(0) at each jump.  All per-path quantities are elementwise,
    so a path's draw sequence is independent of chunk composition.
    """
    base = model.baseline
    gam = model.nonlinearity
    k = model.kernel
    alpha = float(k.alpha) if k.alpha is not None else 0.0
    beta = float(k.beta) if k.beta is not None else 1.0

    idx = np.arange(first, first + n, dtype=np.uint64)
    t = np.zeros(n)
    S = np.zeros(n)
    ctr = np.full(n, start_ctr, dtype=np.uint64)
    active = np.ones(n, dtype=bool)
    rows_acc: List[np.ndarray] = []
    times_acc: List[np.ndarray] = []

    rounds = 0
    while True:
        act = np.nonzero(active)[0]
        if act.size == 0:
            break
        rounds += 1
        if rounds > _MAX_ROUNDS:
            raise RuntimeError("internal error: thinning failed to terminate")

        lam_bar = base.sup_on(t[act], np.full(act.size, T)) + gam.value(S[act])
        u1 = _uniforms_at(seed, idx[act], ctr[act])
        ctr[act] += 1
        t_prop = t[act] - np.log(u1) / lam_bar
        done = t_prop > T
        active[act[done]] = False

        live = act[~done]
        if live.size == 0:
            continue
        tp = t_prop[~done]
        u2 = _uniforms_at(seed, idx[live], ctr[live])
        ctr[live] += 1
        S_prop = S[live] * np.exp(-beta * (tp - t[live]))
        lam_star = base.value(tp) + gam.value(S_prop)
        lb = lam_bar[~done]
        if np.any(lam_star > lb * (1.0 + _ENVELOPE_SLACK)):
            raise RuntimeError("internal error: thinning envelope violated")
        accept = u2 * lb <= lam_star
        if np.any(accept):
            rows_acc.append(live[accept].astype(np.int64))
            times_acc.append(tp[accept])
        S[live] = np.where(accept, S_prop + alpha, S_prop)
        t[live] = tp

    return _assemble(rows_acc, times_acc, n), ctr


def _simulate_path_general(model, T, seed, path_index, start_ctr=0):
    """Scalar thinning for custom kernels (excitation recomputed per step)."""
    base = model.baseline
    gam = model.nonlinearity
    mu = model.kernel.mu

    t = 0.0
    ctr = int(start_ctr)
    jumps: List[float] = []
    rounds = 0
    idx = np.array([path_index], dtype=np.uint64)
    while True:
        rounds += 1
        if rounds > _MAX_ROUNDS:
            raise RuntimeError("internal error: thinning failed to terminate")
        arr = np.asarray(jumps, dtype=float)
        S_now = float(np.sum(mu(t - arr))) if arr.size else 0.0
        lam_bar = float(base.sup_on(np.array([t]), np.array([T]))[0]) + float(
            gam.value(np.float64(S_now))
        )
        u1 = float(_uniforms_at(seed, idx, np.array([ctr], dtype=np.uint64))[0])
        ctr += 1
        tp = t - math.log(u1) / lam_bar
        if tp > T:
            break
        u2 = float(_uniforms_at(seed, idx, np.array([ctr], dtype=np.uint64))[0])
        ctr += 1
        S_prop = float(np.sum(mu(tp - arr))) if arr.size else 0.0
        lam_star = float(base.value(np.float64(tp))) + float(
            gam.value(np.float64(S_prop))
        )
        if lam_star > lam_bar * (1.0 + _ENVELOPE_SLACK):
            raise RuntimeError("internal error: thinning envelope violated")
        if u2 * lam_bar <= lam_star:
            jumps.append(tp)
        t = tp
    return jumps, ctr


def _assemble(rows_acc, times_acc, n):
    """COO (row, time) pairs -> CSR (offsets, flat_times), rows ascending."""
    if rows_acc:
        rows = np.concatenate(rows_acc)
        tms = np.concatenate(times_acc)
        order = np.argsort(rows, kind="stable")  # stable: keeps time order
        rows = rows[order]
        tms = tms[order]
        counts = np.bincount(rows, minlength=n)
    else:
        tms = np.empty(0, dtype=float)
        counts = np.zeros(n, dtype=np.int64)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return offsets, tms


def _simulate_chunk(model, T, seed, first, n):
    k = model.kernel
    if k.family == "exponential" or k.is_null():
        (offsets, tms), _ = _simulate_chunk_markov(model, T, seed, first, n)
        return offsets, tms
    rows_acc, times_acc = [], []
    for i in range(n):
        jumps, _ = _simulate_path_general(model, T, seed, first + i)
        if jumps:
            rows_acc.append(np.full(len(jumps), i, dtype=np.int64))
            times_acc.append(np.asarray(jumps))
    return _assemble(rows_acc, times_acc, n)


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def simulate_path(model: HawkesModel, T: float, stream: RngStream) -> HawkesPath:
    """One path by thinning; consumes draws from (and advances) `stream`."""
    if T <= 0:
        raise ValueError(f"horizon must be positive, got {T}")
    _check_simulable(model)
    k = model.kernel
    if k.family == "exponential" or k.is_null():
        (offsets, tms), ctr = _simulate_chunk_markov(
            model, T, stream.master_seed, stream.path_index, 1,
            start_ctr=stream.draw_counter,
        )
        stream.draw_counter = int(ctr[0])
        return HawkesPath(tms, T)
    jumps, ctr = _simulate_path_general(
        model, T, stream.master_seed, stream.path_index,
        start_ctr=stream.draw_counter,
    )
    stream.draw_counter = ctr
    return HawkesPath(np.asarray(jumps), T)


def simulate_batch(
    model: HawkesModel,
    T: float,
    master_seed: int,
    n_paths: int,
    n_workers: int = 1,
    first_index: int = 0,
) -> PathBatch:
    """n_paths independent paths with indices [first_index, first_index+n).

    Bit-identical output for fixed (master_seed, first_index, n_paths)
    regardless of `n_workers`: work is split into fixed-width chunks by path
    index, each path owns its RNG substream, and chunks are reassembled in
    index order.
    """
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    if T <= 0:
        raise ValueError(f"horizon must be positive, got {T}")
    _check_simulable(model)

    starts = list(range(0, n_paths, _CHUNK))
    jobs = [(first_index + s, min(_CHUNK, n_paths - s)) for s in starts]

    def run(job):
        f, m = job
        return _simulate_chunk(model, T, master_seed, f, m)

    if n_workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    sizes = [int(off[-1]) for off, _ in results]
    flat = (
        np.concatenate([t for _, t in results])
        if sizes and sum(sizes) > 0
        else np.empty(0, dtype=float)
    )
    offsets = np.zeros(n_paths + 1, dtype=np.int64)
    pos = 0
    shift = 0
    for (off, _), (_, m) in zip(results, jobs):
        offsets[pos + 1 : pos + m + 1] = off[1:] + shift
        shift += int(off[-1])
        pos += m
    return PathBatch(
        horizon=float(T),
        master_seed=int(master_seed),
        first_index=int(first_index),
        offsets=offsets,
        flat_times=flat,
    )


# ---------------------------------------------------------------------------
# compensator
# ---------------------------------------------------------------------------

def compensator(model: HawkesModel, path: HawkesPath, t: Optional[float] = None) -> float:
    """Lambda_t = int_0^t lambda*(s) ds.

    Linear gamma: exact closed form using the kernel antiderivative,
    int_0^t lambda_s ds + sum_{T_i < t} mu_hat(t - T_i).  Otherwise the
    integral is done by adaptive Simpson on each inter-jump interval
    (tolerance 1e-10 per interval), where the integrand is smooth.
    """
    T = path.horizon
    if t is None:
        t = T
    if not (0.0 <= t <= T):
        raise ValueError(f"t must lie in [0, {T}], got {t}")
    times = path.jump_times
    if model.nonlinearity.is_linear():
        base_part = float(model.baseline.integral(np.float64(t)))
        prior = times[times < t]
        if prior.size == 0:
            return base_part
        return base_part + float(np.sum(model.kernel.mu_hat(t - prior)))

    # nonlinear: piecewise integration between jumps, excitation frozen to
    # the jumps at or before each segment's left endpoint
    mu = model.kernel.mu
    gam = model.nonlinearity.value
    base = model.baseline.value
    cuts = np.concatenate([[0.0], times[times < t], [t]])
    total = 0.0
    for k in range(cuts.size - 1):
        a, b = float(cuts[k]), float(cuts[k + 1])
        if b <= a:
            continue
        sub = times[times <= a]

        def f(s, sub=sub):
            exc = float(np.sum(mu(s - sub))) if sub.size else 0.0
            return float(base(np.float64(s))) + float(gam(np.float64(exc)))

        total += _adaptive_simpson(f, a, b, 1e-10)
    return total


def _adaptive_simpson(f, a, b, tol):
    """Classic adaptive Simpson with Richardson acceptance test."""
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _asr(f, a, b, fa, fm, fb, whole, tol, 50)


def _asr(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
        return left + right + (left + right - whole) / 15.0
    half = 0.5 * tol
    return _asr(f, a, m, fa, flm, fm, left, half, depth - 1) + _asr(
        f, m, b, fm, frm, fb, right, half, depth - 1
    )


def compensator_batch(model: HawkesModel, batch: PathBatch, t: Optional[float] = None) -> np.ndarray:
    """Lambda_t for every path of a batch (vectorized when gamma is linear)."""
    T = batch.horizon
    if t is None:
        t = T
    if not (0.0 <= t <= T):
        raise ValueError(f"t must lie in [0, {T}], got {t}")
    if model.nonlinearity.is_linear():
        base_part = float(model.baseline.integral(np.float64(t)))
        vals = np.where(
            batch.flat_times < t,
            model.kernel.mu_hat(np.maximum(t - batch.flat_times, 0.0)),
            0.0,
        )
        csum = np.concatenate([[0.0], np.cumsum(vals)])
        seg = csum[batch.offsets[1:]] - csum[batch.offsets[:-1]]
        return base_part + seg
    return np.array([compensator(model, p, t) for p in batch])
