"""Cross-validation harness: mean-intensity Volterra check, shift-family
unit-mass check, and integration-by-parts checks, each returning a report
whose statistics pass at |z| <= 3 and which is reproducible bit-exactly
from (inputs digest, master seed)."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .greeks import UnsupportedModelError, mc_estimate
from .malliavin import (
    CameronMartinFunction,
    SmoothFunctional,
    capped_jump_time,
    compose_smooth,
    divergence_m_batch,
    grad_smooth,
    padded_jumps,
    product_smooth,
    z_eps_batch,
)
from .model import HawkesModel
from .simulate import PathBatch

_Z_THRESHOLD = 3.0
_VOLTERRA_STEPS = 2048


# ---- report plumbing ----

@dataclass(frozen=True)
class ReportRow:
    label: str
    estimate: float
    reference: float
    std_error: float
    z: float
    passed: bool


@dataclass(frozen=True)
class ExperimentReport:
    name: str
    digest: str
    rows: Tuple[ReportRow, ...]
    passed: bool
    diagnostics: Tuple[Tuple[str, float], ...] = ()


def inputs_digest(**parts) -> str:
    """12-hex digest of the canonicalized inputs (sorted key=value pairs)."""
    canon = ";".join(f"{k}={parts[k]!r}" for k in sorted(parts))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def _row(label: str, estimate: float, reference: float, se: float) -> ReportRow:
    if se > 0.0:
        z = (estimate - reference) / se
    else:
        z = 0.0 if estimate == reference else math.inf
    return ReportRow(
        label=label,
        estimate=float(estimate),
        reference=float(reference),
        std_error=float(se),
        z=float(z),
        passed=bool(abs(z) <= _Z_THRESHOLD),
    )


def _finish(name: str, digest: str, rows, diagnostics=()) -> ExperimentReport:
    rows = tuple(rows)
    return ExperimentReport(
        name=name,
        digest=digest,
        rows=rows,
        passed=all(r.passed for r in rows),
        diagnostics=tuple(diagnostics),
    )


def _batch_digest(model: HawkesModel, batch: PathBatch, **extra) -> str:
    return inputs_digest(
        model=model.digest_key(),
        horizon=batch.horizon,
        master_seed=batch.master_seed,
        first_index=batch.first_index,
        n_paths=batch.n_paths,
        **extra,
    )


def _direction_key(m: CameronMartinFunction) -> tuple:
    """Deterministic fingerprint of a direction: m sampled on a fixed grid."""
    probe = np.linspace(0.0, m.horizon, 9)
    return tuple(float(v) for v in np.asarray(m.m(probe), dtype=float))


# ---- mean intensity via the Volterra equation ----

def volterra_mean_intensity(model: HawkesModel, T: float, n_steps: int):
    """Solve g(s) = lambda_s + int_0^s mu(s-t) g(t) dt on a uniform grid.

    Product trapezoidal rule:
    g_k = [lambda_k + h(mu_k g_0 / 2 + sum_{j=1}^{k-1} mu_{k-j} g_j)]
          / (1 - h mu_0 / 2).
    Returns (grid, g).  The mean conditional intensity solves this equation
    for linear models only.
    """
    if not model.nonlinearity.is_linear():
        raise UnsupportedModelError("the mean-intensity equation needs linear gamma")
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")
    h = T / n_steps
    s = np.linspace(0.0, T, n_steps + 1)
    lam = np.asarray(model.baseline.value(s), dtype=float)
    mu = np.asarray(model.kernel.mu(s), dtype=float)
    denom = 1.0 - h * mu[0] / 2.0
    if denom <= 0.0:
        raise ValueError("grid too coarse for the product trapezoidal rule")
    g = np.empty(n_steps + 1)
    g[0] = lam[0]
    for k in range(1, n_steps + 1):
        conv = 0.5 * mu[k] * g[0]
        if k > 1:
            conv += float(np.dot(mu[k - 1:0:-1], g[1:k]))
        g[k] = (lam[k] + h * conv) / denom
    return s, g


def mean_intensity_batch(model: HawkesModel, batch: PathBatch, grid) -> np.ndarray:
    """Per-path lambda*(s) at each grid point, shape (n_grid, n_paths)."""
    times, _ = padded_jumps(batch)
    grid = np.asarray(grid, dtype=float)
    out = np.empty((grid.size, batch.n_paths))
    for i, s in enumerate(grid):
        earlier = times < s  # padding equals the horizon, so it never counts
        exc = np.sum(
            np.where(earlier, model.kernel.mu(np.maximum(s - times, 0.0)), 0.0),
            axis=1,
        )
        out[i] = float(model.baseline.value(np.float64(s))) + np.asarray(
            model.nonlinearity.value(exc), dtype=float
        )
    return out


def mean_intensity_check(
    model: HawkesModel,
    batch: PathBatch,
    grid=None,
    n_steps: int = _VOLTERRA_STEPS,
) -> ExperimentReport:
    """MC mean of lambda*(s) against the Volterra solution on a grid.

    Solves at step T/n_steps and T/(2 n_steps); the discretization bound
    max|g_h - g_{h/2}|/3 (order-2 Richardson) is reported alongside.
    """
    T = batch.horizon
    if grid is None:
        grid = np.linspace(0.0, T, 33)[1:]
    grid = np.asarray(grid, dtype=float)
    s_coarse, g_coarse = volterra_mean_intensity(model, T, n_steps)
    s_fine, g_fine = volterra_mean_intensity(model, T, 2 * n_steps)
    bound = float(np.max(np.abs(g_fine[::2] - g_coarse))) / 3.0
    reference = np.interp(grid, s_fine, g_fine)
    values = mean_intensity_batch(model, batch, grid)
    rows = []
    for i, s in enumerate(grid):
        mean, se, _ = mc_estimate(values[i])
        rows.append(_row(f"s={s:.6g}", mean, float(reference[i]), se))
    digest = _batch_digest(
        model, batch, grid=tuple(float(s) for s in grid), n_steps=n_steps
    )
    return _finish(
        "mean-intensity",
        digest,
        rows,
        diagnostics=(
            ("volterra_bound", bound),
            ("volterra_steps", float(2 * n_steps)),
        ),
    )


# ---- unit mass of the shifted-path likelihood family ----

def unit_mass_check(
    model: HawkesModel,
    batch: PathBatch,
    m: Optional[CameronMartinFunction] = None,
    eps_values: Sequence[float] = (1e-1, 1e-2, 1e-3),
) -> ExperimentReport:
    """E[Z^eps] = 1 for each eps, at 3 standard errors."""
    if m is None:
        m = CameronMartinFunction.default(batch.horizon)
    rows = []
    for eps in eps_values:
        z_vals = z_eps_batch(model, batch, m, float(eps))
        mean, se, _ = mc_estimate(z_vals)
        rows.append(_row(f"eps={eps:g}", mean, 1.0, se))
    digest = _batch_digest(
        model, batch, direction=_direction_key(m), eps=tuple(float(e) for e in eps_values)
    )
    return _finish("unit-mass", digest, rows)


# ---- integration by parts on the smooth catalog ----

def smooth_catalog() -> Tuple[Tuple[str, SmoothFunctional], ...]:
    """Functionals with exact gradients used by the duality check."""
    one = SmoothFunctional(
        value=lambda times, T: 1.0,
        partials=lambda times, T: np.zeros(times.size),
    )
    t1 = capped_jump_time(1)
    return (
        ("1", one),
        ("T1", t1),
        ("exp(-T1)", compose_smooth(
            lambda x: math.exp(-x), lambda x: -math.exp(-x), t1
        )),
        ("T1*T2", product_smooth(t1, capped_jump_time(2))),
    )


def ibp_check(
    model: HawkesModel,
    batch: PathBatch,
    m: Optional[CameronMartinFunction] = None,
    catalog=None,
) -> ExperimentReport:
    """Paired z-scores of E[D_m F - F delta(m)] = 0 per catalog entry."""
    if m is None:
        m = CameronMartinFunction.default(batch.horizon)
    if catalog is None:
        catalog = smooth_catalog()
    delta = divergence_m_batch(model, batch, m)
    rows = []
    for label, functional in catalog:
        diffs = np.empty(batch.n_paths)
        for i, path in enumerate(batch):
            dm = grad_smooth(functional, path).directional(m)
            diffs[i] = dm - functional.value(path.jump_times, batch.horizon) * delta[i]
        mean, se, _ = mc_estimate(diffs)
        rows.append(_row(f"F={label}", mean, 0.0, se))
    digest = _batch_digest(
        model, batch, direction=_direction_key(m), catalog=tuple(label for label, _ in catalog)
    )
    return _finish("ibp", digest, rows)
