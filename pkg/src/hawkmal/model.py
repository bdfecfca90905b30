"""Hawkes model ingredients: baseline, excitation kernel, nonlinearity.

A nonlinear Hawkes process on [0, T] has conditional intensity

    lambda*(s; t_1..t_n) = lambda_s + gamma( sum_{t_i < s} mu(s - t_i) )

where only strictly earlier jumps contribute (left-limit convention at
s = t_i).  The standing assumptions are: lambda_t >= lambda_* > 0 with
bounded derivative; mu >= 0, C^1 with bounded derivative and finite L1
norm; gamma nonnegative, C^1 with bounded derivative a = sup|gamma'| and
gamma(0) = 0; and the stability margin a*||mu||_1 < 1.

All spec objects here are immutable after construction and safe to share
across threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "AssumptionError",
    "KernelSpec",
    "BaselineSpec",
    "NonlinearitySpec",
    "HawkesModel",
    "ValidationReport",
    "validate_assumptions",
    "intensity",
    "kernel_tail_mass",
]

# Grid used to certify sup bounds of custom/oscillatory families.
_SUP_GRID_POINTS = 10_000
_SUP_SAFETY = 1.01


class AssumptionError(ValueError):
    """A model clause required by the standing assumptions fails."""


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelSpec:
    """Excitation kernel mu on [0, inf).

    Use :meth:`exponential` or :meth:`custom`; the constructor is not meant
    to be called directly.  ``mu_hat`` is the antiderivative of mu from 0,
    so that the linear-case compensator stays in closed form.
    """

    family: str
    mu: Callable[[np.ndarray], np.ndarray]
    mu_prime: Callable[[np.ndarray], np.ndarray]
    mu_hat: Callable[[np.ndarray], np.ndarray]
    l1_norm: float
    sup_norm: float
    sup_deriv: float
    alpha: Optional[float] = None
    beta: Optional[float] = None
    # Decreasing kernels make the thinning envelope exact; custom kernels
    # without this promise rely on the per-proposal envelope guard.
    nonincreasing: bool = False

    @staticmethod
    def exponential(alpha: float, beta: float) -> "KernelSpec":
        """mu(t) = alpha * exp(-beta t); alpha >= 0, beta > 0."""
        if alpha < 0:
            raise AssumptionError(f"exponential kernel needs alpha >= 0, got {alpha}")
        if beta <= 0:
            raise AssumptionError(f"exponential kernel needs beta > 0, got {beta}")
        a, b = float(alpha), float(beta)
        return KernelSpec(
            family="exponential",
            mu=lambda t: a * np.exp(-b * np.asarray(t, dtype=float)),
            mu_prime=lambda t: -a * b * np.exp(-b * np.asarray(t, dtype=float)),
            mu_hat=lambda t: (a / b) * (-np.expm1(-b * np.asarray(t, dtype=float))),
            l1_norm=a / b,
            sup_norm=a,
            sup_deriv=a * b,
            alpha=a,
            beta=b,
            nonincreasing=True,
        )

    @staticmethod
    def custom(
        mu: Callable,
        mu_prime: Callable,
        mu_hat: Callable,
        l1_norm: float,
        sup_norm: float,
        sup_deriv: float,
        nonincreasing: bool = False,
    ) -> "KernelSpec":
        """Custom kernel; the antiderivative and norms must be supplied
        explicitly (no auto-integration -- closed forms keep the linear-case
        compensator exact)."""
        if l1_norm < 0 or sup_norm < 0 or sup_deriv < 0:
            raise AssumptionError("kernel norms must be nonnegative")
        return KernelSpec(
            family="custom",
            mu=mu,
            mu_prime=mu_prime,
            mu_hat=mu_hat,
            l1_norm=float(l1_norm),
            sup_norm=float(sup_norm),
            sup_deriv=float(sup_deriv),
            nonincreasing=nonincreasing,
        )

    def is_null(self) -> bool:
        """True when mu is identically zero (Poisson reduction)."""
        return self.sup_norm == 0.0


# ---------------------------------------------------------------------------
# baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BaselineSpec:
    """Deterministic baseline intensity lambda_t on [0, T]."""

    family: str
    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    integral: Callable[[np.ndarray], np.ndarray]  # int_0^t lambda_s ds
    lower_bound: float  # lambda_* over [0, horizon]
    params: tuple = ()

    @staticmethod
    def constant(lam: float) -> "BaselineSpec":
        lam = float(lam)
        if lam <= 0:
            raise AssumptionError(f"constant baseline must be positive, got {lam}")
        return BaselineSpec(
            family="constant",
            value=lambda t: np.full_like(np.asarray(t, dtype=float), lam),
            derivative=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
            integral=lambda t: lam * np.asarray(t, dtype=float),
            lower_bound=lam,
            params=(lam,),
        )

    @staticmethod
    def affine(lam0: float, slope: float, horizon: float) -> "BaselineSpec":
        """lambda_t = lam0 + slope * t; must stay positive on [0, horizon]."""
        lam0, slope, horizon = float(lam0), float(slope), float(horizon)
        lo = min(lam0, lam0 + slope * horizon)
        if lo <= 0:
            raise AssumptionError(
                f"affine baseline dips to {lo} on [0, {horizon}]; must stay > 0"
            )
        return BaselineSpec(
            family="affine",
            value=lambda t: lam0 + slope * np.asarray(t, dtype=float),
            derivative=lambda t: np.full_like(np.asarray(t, dtype=float), slope),
            integral=lambda t: (lam0 + 0.5 * slope * np.asarray(t, dtype=float))
            * np.asarray(t, dtype=float),
            lower_bound=lo,
            params=(lam0, slope, horizon),
        )

    @staticmethod
    def sinusoidal(lam0: float, amp: float, period: float) -> "BaselineSpec":
        """lambda_t = lam0 + amp * sin(2 pi t / period)."""
        lam0, amp, period = float(lam0), float(amp), float(period)
        if period <= 0:
            raise AssumptionError("sinusoidal baseline needs period > 0")
        lo = lam0 - abs(amp)
        if lo <= 0:
            raise AssumptionError(
                f"sinusoidal baseline lower bound {lo} must be positive"
            )
        w = 2.0 * math.pi / period
        return BaselineSpec(
            family="sinusoidal",
            value=lambda t: lam0 + amp * np.sin(w * np.asarray(t, dtype=float)),
            derivative=lambda t: amp * w * np.cos(w * np.asarray(t, dtype=float)),
            integral=lambda t: lam0 * np.asarray(t, dtype=float)
            + (amp / w) * (1.0 - np.cos(w * np.asarray(t, dtype=float))),
            lower_bound=lo,
            params=(lam0, amp, period),
        )

    def sup_on(self, a, b) -> np.ndarray:
        """Exact sup of lambda_t over [a, b] per family (vectorized in a).

        Used by the thinning envelope; must be a true upper bound.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.family == "constant":
            return np.broadcast_to(np.float64(self.params[0]), a.shape).copy()
        if self.family == "affine":
            slope = self.params[1]
            end = b if slope >= 0 else a
            return np.asarray(self.value(end), dtype=float)
        if self.family == "sinusoidal":
            lam0, amp, period = self.params
            # peak of lam0 + amp sin(w t): attained at interior critical points
            # or at the interval ends; if the interval spans a full quarter
            # phase containing the crest, the sup is lam0 + |amp|.
            crest = lam0 + abs(amp)
            ends = np.maximum(self.value(a), self.value(b))
            spans = (b - a) >= period
            out = np.where(spans, crest, np.minimum(crest, _sin_sup(self, a, b)))
            return np.maximum(out, ends)
        raise NotImplementedError(self.family)

    def sup_upper(self, horizon: float) -> float:
        """Certified upper bound lambda^T = sup_{[0,T]} lambda_t.

        Exact family maxima, cross-checked on a dense grid (with a safety
        factor only for anything the closed form does not certify).
        """
        grid = np.linspace(0.0, horizon, _SUP_GRID_POINTS)
        grid_max = float(np.max(self.value(grid)))
        exact = float(np.max(self.sup_on(np.array([0.0]), np.array([horizon]))))
        if exact + 1e-12 < grid_max:
            # family formula failed to dominate the grid: fall back defensively
            return grid_max * _SUP_SAFETY
        return exact


def _sin_sup(baseline: BaselineSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Sup of lam0 + amp sin(w t) on [a, b] when the interval is shorter than a
    # period: check the crest phases falling inside the interval.
    lam0, amp, period = baseline.params
    w = 2.0 * math.pi / period
    # phase (w t - pi/2) mod 2pi == 0 marks a crest of +amp (trough for amp<0)
    crest_phase = (math.pi / 2.0) if amp >= 0 else (3.0 * math.pi / 2.0)
    k_lo = np.ceil((w * a - crest_phase) / (2.0 * math.pi))
    t_crest = (crest_phase + 2.0 * math.pi * k_lo) / w
    inside = (t_crest >= a) & (t_crest <= b)
    ends = np.maximum(baseline.value(a), baseline.value(b))
    return np.where(inside, lam0 + abs(amp), ends)


# ---------------------------------------------------------------------------
# nonlinearity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NonlinearitySpec:
    """gamma wrapping the excitation sum; gamma(0) = 0, nondecreasing.

    Both built-in families have Lipschitz constant a = 1.  Monotonicity is
    required by the thinning simulator's envelope argument (not by the
    underlying assumptions).
    """

    family: str
    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    monotone: bool = True

    @staticmethod
    def linear() -> "NonlinearitySpec":
        return NonlinearitySpec(
            family="linear",
            value=lambda x: np.asarray(x, dtype=float),
            derivative=lambda x: np.ones_like(np.asarray(x, dtype=float)),
            lipschitz=1.0,
        )

    @staticmethod
    def saturating_tanh(cap: float) -> "NonlinearitySpec":
        """gamma(x) = c * tanh(x / c); saturates at c, gamma'(0) = 1."""
        cap = float(cap)
        if cap <= 0:
            raise AssumptionError(f"saturating cap must be positive, got {cap}")
        return NonlinearitySpec(
            family="saturating_tanh",
            value=lambda x: cap * np.tanh(np.asarray(x, dtype=float) / cap),
            derivative=lambda x: 1.0 / np.cosh(np.asarray(x, dtype=float) / cap) ** 2,
            lipschitz=1.0,
        )

    def is_linear(self) -> bool:
        return self.family == "linear"


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    baseline_positive: bool
    kernel_ok: bool
    gamma_zero_at_zero: bool
    stable: bool
    margin: float

    def all_pass(self) -> bool:
        return (
            self.baseline_positive
            and self.kernel_ok
            and self.gamma_zero_at_zero
            and self.stable
        )


@dataclass(frozen=True)
class HawkesModel:
    baseline: BaselineSpec
    kernel: KernelSpec
    nonlinearity: NonlinearitySpec
    stability_margin: float = field(init=False)

    def __post_init__(self):
        margin = self.nonlinearity.lipschitz * self.kernel.l1_norm
        object.__setattr__(self, "stability_margin", margin)
        report = validate_assumptions(self)
        if not report.all_pass():
            raise AssumptionError(
                "model violates the standing assumptions: "
                f"baseline_positive={report.baseline_positive}, "
                f"kernel_ok={report.kernel_ok}, "
                f"gamma_zero={report.gamma_zero_at_zero}, "
                f"stable={report.stable} (a*||mu||_1 = {margin:.6g})"
            )

    def excitation(self, jump_times: np.ndarray, s) -> np.ndarray:
        """sum_{t_i < s} mu(s - t_i), vectorized in s (strict inequality)."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(jump_times, dtype=float)
        if t.size == 0:
            return np.zeros_like(s)
        lag = s[..., None] - t
        vals = np.where(lag > 0, self.kernel.mu(np.maximum(lag, 0.0)), 0.0)
        return vals.sum(axis=-1)

    def intensity(self, jump_times, s):
        return intensity(self, jump_times, s)

    def digest_key(self) -> tuple:
        """Hashable identity for caches (normalization constants etc.)."""
        return (
            self.baseline.family,
            self.baseline.params,
            self.kernel.family,
            self.kernel.alpha,
            self.kernel.beta,
            self.kernel.l1_norm,
            self.nonlinearity.family,
            self.nonlinearity.lipschitz,
        )


def validate_assumptions(model: HawkesModel) -> ValidationReport:
    """Per-clause check of the standing assumptions.

    Returns a report; constructors use it to reject bad models.  The margin
    reported is 1 - a*||mu||_1 (positive iff stable).
    """
    k = model.kernel
    gamma0 = float(model.nonlinearity.value(np.float64(0.0)))
    margin = 1.0 - model.nonlinearity.lipschitz * k.l1_norm
    kernel_ok = (
        math.isfinite(k.l1_norm)
        and math.isfinite(k.sup_deriv)
        and k.l1_norm >= 0
        and float(k.mu(np.float64(0.0))) >= 0
    )
    return ValidationReport(
        baseline_positive=model.baseline.lower_bound > 0,
        kernel_ok=kernel_ok,
        gamma_zero_at_zero=abs(gamma0) < 1e-14,
        stable=margin > 0,
        margin=margin,
    )


def intensity(model: HawkesModel, jump_times, s):
    """Conditional intensity lambda*(s; t_1..t_n).

    Only jumps strictly before s contribute; evaluating exactly at a jump
    time gives the left limit (the pre-jump intensity).  Vectorized in s.
    """
    t = np.asarray(jump_times, dtype=float)
    if t.size > 1 and np.any(np.diff(t) < 0):
        raise ValueError("jump_times must be sorted increasingly")
    s_arr = np.asarray(s, dtype=float)
    lam = model.baseline.value(s_arr) + model.nonlinearity.value(
        model.excitation(t, s_arr)
    )
    return float(lam) if np.isscalar(s) or np.ndim(s) == 0 else lam


def kernel_tail_mass(model: HawkesModel, start: float) -> float:
    """int_start^inf mu = ||mu||_1 - mu_hat(start)."""
    if start < 0:
        raise ValueError(f"tail mass start must be >= 0, got {start}")
    return float(model.kernel.l1_norm - model.kernel.mu_hat(np.float64(start)))
