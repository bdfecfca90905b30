"""Jump-time Malliavin calculus: the gradient D, the carre du champ Gamma,
the psi/Gamma1/Gamma2 weight terms, the divergence delta, and the
change-of-measure factors Z^eps.

Directions live in the Cameron-Martin space H = {m in L2(0,T): int m = 0}.
For a smooth functional F = f_n(T_1..T_n) the gradient is the step function

    D_s F = sum_j  df_n/dt_j * (T_j/T - 1_{[0,T_j]}(s)),

whose H-geometry is encoded by the kernel xi(u, v) = u^v - uv/T:
Gamma[F, G] = <DF, DG> = sum_{ij} p_i q_j xi(T_i, T_j).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .model import HawkesModel
from .simulate import HawkesPath, PathBatch, _adaptive_simpson

__all__ = [
    "CameronMartinFunction",
    "SmoothFunctional",
    "MalliavinGradient",
    "WeightTerms",
    "StepProcess",
    "xi_kernel",
    "condition2_slack",
    "grad_smooth",
    "carre_du_champ",
    "weight_terms",
    "divergence_m",
    "divergence_predictable",
    "z_eps",
    "basis_projection_check",
    "capped_jump_time",
    "jump_count",
    "compose_smooth",
    "product_smooth",
    "padded_jumps",
    "weight_arrays",
    "divergence_m_batch",
    "z_eps_batch",
]

_GAMMA2_TOL = 1e-10


# ---------------------------------------------------------------------------
# directions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CameronMartinFunction:
    """A direction m on [0,T] with int_0^T m = 0, plus its antiderivative
    m_hat(t) = int_0^t m and sup bounds.  Build through the factories;
    they validate the zero-integral invariant."""

    horizon: float
    m: Callable[[np.ndarray], np.ndarray]
    m_hat: Callable[[np.ndarray], np.ndarray]
    sup_m: float
    sup_m_hat: float

    def __post_init__(self):
        T = self.horizon
        if T <= 0:
            raise ValueError(f"horizon must be positive, got {T}")
        h0 = float(self.m_hat(np.float64(0.0)))
        hT = float(self.m_hat(np.float64(T)))
        if abs(h0) > 1e-12 or abs(hT) > 1e-10:
            raise ValueError(
                f"m_hat must vanish at 0 and T (got {h0:.3g}, {hT:.3g}); "
                "the direction must integrate to zero"
            )

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.sup_m)

    @staticmethod
    def default(T: float) -> "CameronMartinFunction":
        """m(t) = 1 - 2t/T; m_hat(t) = t(1 - t/T), positive on (0,T)."""
        return CameronMartinFunction(
            horizon=float(T),
            m=lambda t: 1.0 - 2.0 * np.asarray(t, dtype=float) / T,
            m_hat=lambda t: np.asarray(t, dtype=float)
            * (1.0 - np.asarray(t, dtype=float) / T),
            sup_m=1.0,
            sup_m_hat=T / 4.0,
        )

    @staticmethod
    def cosine(T: float, k: int = 1) -> "CameronMartinFunction":
        """Normalized sqrt(2/T) cos(2 pi k t / T)."""
        if k < 1:
            raise ValueError("k must be >= 1")
        amp = math.sqrt(2.0 / T)
        w = 2.0 * math.pi * k / T
        return CameronMartinFunction(
            horizon=float(T),
            m=lambda t: amp * np.cos(w * np.asarray(t, dtype=float)),
            m_hat=lambda t: (amp / w) * np.sin(w * np.asarray(t, dtype=float)),
            sup_m=amp,
            sup_m_hat=amp / w,
        )

    @staticmethod
    def sine(T: float, k: int = 1) -> "CameronMartinFunction":
        """Normalized sqrt(2/T) sin(2 pi k t / T)."""
        if k < 1:
            raise ValueError("k must be >= 1")
        amp = math.sqrt(2.0 / T)
        w = 2.0 * math.pi * k / T
        return CameronMartinFunction(
            horizon=float(T),
            m=lambda t: amp * np.sin(w * np.asarray(t, dtype=float)),
            m_hat=lambda t: (amp / w) * (1.0 - np.cos(w * np.asarray(t, dtype=float))),
            sup_m=amp,
            sup_m_hat=2.0 * amp / w,
        )

    @staticmethod
    def from_callables(
        T: float,
        m: Callable,
        m_hat: Callable,
        sup_m: float,
        sup_m_hat: float,
        check_quadrature: bool = True,
    ) -> "CameronMartinFunction":
        """Custom direction; verifies int_0^T m = 0 by composite quadrature
        (skip the quadrature for non-smooth m whose m_hat is exact)."""
        cm = CameronMartinFunction(
            horizon=float(T), m=m, m_hat=m_hat, sup_m=float(sup_m),
            sup_m_hat=float(sup_m_hat),
        )
        if check_quadrature:
            total = _panel_gauss_integral(m, 0.0, T)
            if abs(total) > 1e-10:
                raise ValueError(
                    f"int_0^T m = {total:.3g} exceeds the 1e-10 tolerance"
                )
        return cm


def _panel_gauss_integral(f, a, b, panels=16, order=32) -> float:
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        nodes = lo + half * (x + 1.0)
        total += half * float(np.sum(w * np.asarray(f(nodes), dtype=float)))
    return total


# ---------------------------------------------------------------------------
# smooth functionals and gradients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmoothFunctional:
    """F = f_n(T_1..T_n): a value map plus (optionally) exact partials.

    ``value(times, T)`` and ``partials(times, T)`` receive the realized jump
    times; `supports` restricts the jump counts the functional is defined
    for.  Without exact partials, grad_smooth falls back to central
    differences and flags the result.
    """

    value: Callable[[np.ndarray, float], float]
    partials: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    supports: Callable[[int], bool] = lambda n: True


def capped_jump_time(j: int) -> SmoothFunctional:
    """T_j ^ T: the j-th jump time, equal to T when fewer than j jumps."""
    if j < 1:
        raise ValueError("j must be >= 1")

    def value(times, T):
        return float(times[j - 1]) if times.size >= j else float(T)

    def partials(times, T):
        p = np.zeros(times.size)
        if times.size >= j and times[j - 1] < T:
            p[j - 1] = 1.0
        return p

    return SmoothFunctional(value=value, partials=partials)


def jump_count() -> SmoothFunctional:
    """N_T; constant in the jump positions, so DF = 0."""
    return SmoothFunctional(
        value=lambda times, T: float(times.size),
        partials=lambda times, T: np.zeros(times.size),
    )


def compose_smooth(phi, phi_prime, F: SmoothFunctional) -> SmoothFunctional:
    """phi(F) with chain-rule partials phi'(F) * dF/dt_j."""
    if F.partials is None:
        raise ValueError("compose_smooth needs exact partials on the inner F")
    return SmoothFunctional(
        value=lambda times, T: float(phi(F.value(times, T))),
        partials=lambda times, T: phi_prime(F.value(times, T))
        * F.partials(times, T),
        supports=F.supports,
    )


def product_smooth(F: SmoothFunctional, G: SmoothFunctional) -> SmoothFunctional:
    """F*G with product-rule partials."""
    if F.partials is None or G.partials is None:
        raise ValueError("product_smooth needs exact partials on both factors")
    return SmoothFunctional(
        value=lambda times, T: F.value(times, T) * G.value(times, T),
        partials=lambda times, T: F.partials(times, T) * G.value(times, T)
        + F.value(times, T) * G.partials(times, T),
        supports=lambda n: F.supports(n) and G.supports(n),
    )


@dataclass(frozen=True)
class MalliavinGradient:
    """D_s F = sum_j partials_j (T_j/T - 1_{[0,T_j]}(s)): a step function in
    s with breakpoints at the jump times, integrating to zero."""

    jump_times: np.ndarray
    partials: np.ndarray
    horizon: float
    fd_fallback: bool = False

    def evaluate(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        t = self.jump_times
        if t.size == 0:
            return np.zeros_like(s)
        shapes = t / self.horizon - (s[..., None] <= t)
        return shapes @ self.partials

    def directional(self, m: CameronMartinFunction) -> float:
        """<DF, m> = -sum_j partials_j m_hat(T_j)."""
        if self.jump_times.size == 0:
            return 0.0
        return -float(np.dot(self.partials, m.m_hat(self.jump_times)))


def grad_smooth(F: SmoothFunctional, path: HawkesPath) -> MalliavinGradient:
    """Gradient of F at the realized path; exact partials when provided,
    otherwise central differences (step 1e-6 * max(1,|t_i|)), flagged."""
    t = path.jump_times
    n = t.size
    if not F.supports(n):
        raise ValueError(f"functional does not support N_T = {n}")
    if F.partials is not None:
        p = np.asarray(F.partials(t, path.horizon), dtype=float)
        if p.shape != (n,):
            raise ValueError(f"partials returned shape {p.shape}, expected ({n},)")
        return MalliavinGradient(t, p, path.horizon)
    p = np.empty(n)
    for i in range(n):
        h = 1e-6 * max(1.0, abs(float(t[i])))
        up = t.copy()
        dn = t.copy()
        up[i] += h
        dn[i] -= h
        p[i] = (F.value(up, path.horizon) - F.value(dn, path.horizon)) / (2.0 * h)
    return MalliavinGradient(t, p, path.horizon, fd_fallback=True)


# ---------------------------------------------------------------------------
# xi kernel and the carre du champ
# ---------------------------------------------------------------------------

def xi_kernel(T: float, t_i, t_j):
    """xi(t_i, t_j) = t_i ^ t_j - t_i t_j / T, the H-inner product of the
    gradient shapes anchored at t_i and t_j."""
    a = np.asarray(t_i, dtype=float)
    b = np.asarray(t_j, dtype=float)
    if np.any(a < 0) or np.any(a > T) or np.any(b < 0) or np.any(b > T):
        raise ValueError(f"arguments must lie in [0, {T}]")
    out = np.minimum(a, b) - a * b / T
    return float(out) if out.ndim == 0 else out


def carre_du_champ(gF: MalliavinGradient, gG: MalliavinGradient) -> float:
    """Gamma[F, G] = sum_{ij} p_i q_j xi(T_i, T_j); both gradients must be
    taken on the same path."""
    if gF.horizon != gG.horizon or gF.jump_times.shape != gG.jump_times.shape:
        raise ValueError("gradients were taken on different paths")
    if gF.jump_times.size and not np.array_equal(gF.jump_times, gG.jump_times):
        raise ValueError("gradients were taken on different paths")
    t = gF.jump_times
    if t.size == 0:
        return 0.0
    xi = np.minimum(t[:, None], t[None, :]) - np.outer(t, t) / gF.horizon
    return float(gF.partials @ xi @ gG.partials)


def condition2_slack(T: float, times: np.ndarray, coeffs: np.ndarray) -> float:
    """Quadratic-form slack: c' Xi c minus the spacing lower bound
    (1/T) sum_k (t_k - t_{k-1})(t_{k+1} - t_k) c_k^2, with t_0 = 0 and
    t_{n+1} = T.  Nonnegative for every path and coefficient vector."""
    t = np.asarray(times, dtype=float)
    c = np.asarray(coeffs, dtype=float)
    if t.size != c.size:
        raise ValueError("times and coeffs must have the same length")
    if t.size == 0:
        return 0.0
    xi = np.minimum(t[:, None], t[None, :]) - np.outer(t, t) / T
    quad = float(c @ xi @ c)
    padded = np.concatenate([[0.0], t, [T]])
    gaps_prev = np.diff(padded)[:-1]   # t_k - t_{k-1}
    gaps_next = np.diff(padded)[1:]    # t_{k+1} - t_k
    lower = float(np.sum(gaps_prev * gaps_next * c * c)) / T
    return quad - lower


# ---------------------------------------------------------------------------
# weight terms psi / Gamma1 / Gamma2
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightTerms:
    """Per-jump ingredients of the divergence: arrays indexed by jump
    ordinal j (empty for a path with no jumps)."""

    jump_times: np.ndarray
    psi_at_jump: np.ndarray
    gamma1_at_jump: np.ndarray
    gamma2_at_jump: np.ndarray
    m_at_jump: np.ndarray
    m_hat_at_jump: np.ndarray
    horizon: float

    def divergence(self) -> float:
        """delta = sum_j [psi + m_hat (Gamma1 + Gamma2) + m] at the jumps."""
        if self.jump_times.size == 0:
            return 0.0
        return float(
            np.sum(
                self.psi_at_jump
                + self.m_hat_at_jump * (self.gamma1_at_jump + self.gamma2_at_jump)
                + self.m_at_jump
            )
        )


def _weight_core(model: HawkesModel, t: np.ndarray, T: float, val_fn, anti_fn):
    """Shared psi/Gamma1/Gamma2 assembly for a direction given by its value
    and antiderivative callables (deterministic m or predictable step u)."""
    n = t.size
    kernel = model.kernel
    gam = model.nonlinearity
    if n == 0:
        z = np.empty(0)
        return z, z, z, z, z

    lags = t[:, None] - t[None, :]
    before = lags > 0.0
    safe = np.maximum(lags, 0.0)
    S = np.where(before, kernel.mu(safe), 0.0).sum(axis=1)  # pre-jump excitation
    mup = np.where(before, kernel.mu_prime(safe), 0.0)
    anti_t = np.asarray(anti_fn(t), dtype=float)
    val_t = np.asarray(val_fn(t), dtype=float)
    cross = ((anti_t[:, None] - anti_t[None, :]) * mup).sum(axis=1)
    lam_star = model.baseline.value(t) + gam.value(S)
    psi = (anti_t * model.baseline.derivative(t) + gam.derivative(S) * cross) / lam_star

    mu0 = float(kernel.mu(np.float64(0.0)))
    gamma1 = gam.value(mu0 + S) - gam.value(S)
    if gam.is_linear():
        gamma2 = kernel.mu(T - t) - mu0
    else:
        gamma2 = np.array([_gamma2_integral(model, t, T, j) for j in range(n)])
    return psi, gamma1, np.asarray(gamma2, dtype=float), val_t, anti_t


def _gamma2_integral(model: HawkesModel, t: np.ndarray, T: float, j: int) -> float:
    """Gamma2(T_j) = int_0^{T - T_j} gamma'(excitation at T_j + v) mu'(v) dv.

    The excitation at u = T_j + v counts every jump before u, including T_j
    itself; the integrand kinks at the later jump times, so integrate
    segment by segment.
    """
    s = float(t[j])
    mu = model.kernel.mu
    mu_prime = model.kernel.mu_prime
    gprime = model.nonlinearity.derivative
    # segment in absolute time so the active-set comparison sees the exact
    # stored jump values (s + (t_i - s) need not round-trip to t_i)
    edges = np.unique(np.concatenate([[s], t[(t > s) & (t < T)], [T]]))
    total = 0.0
    for ua, ub in zip(edges[:-1], edges[1:]):
        active = t[t <= ua]  # every jump at or before the segment start

        def f(u, active=active):
            exc = float(np.sum(mu(u - active)))
            return float(gprime(np.float64(exc))) * float(mu_prime(np.float64(u - s)))

        total += _adaptive_simpson(f, float(ua), float(ub), _GAMMA2_TOL)
    return total


def weight_terms(
    model: HawkesModel, path: HawkesPath, m: CameronMartinFunction
) -> WeightTerms:
    """psi(m, T_j), Gamma1(T_j), Gamma2(T_j) and the direction samples at
    every jump of the path."""
    psi, g1, g2, mv, mh = _weight_core(
        model, path.jump_times, path.horizon, m.m, m.m_hat
    )
    return WeightTerms(
        jump_times=path.jump_times,
        psi_at_jump=psi,
        gamma1_at_jump=g1,
        gamma2_at_jump=g2,
        m_at_jump=mv,
        m_hat_at_jump=mh,
        horizon=path.horizon,
    )


def divergence_m(model: HawkesModel, path: HawkesPath, m: CameronMartinFunction) -> float:
    """delta(m) = sum_j [psi(m,T_j) + m_hat(T_j)(Gamma1+Gamma2)(T_j) + m(T_j)]."""
    return weight_terms(model, path, m).divergence()


# ---------------------------------------------------------------------------
# predictable step directions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepProcess:
    """Left-continuous step function on [0,T]: value ``values[i]`` on the
    interval (knots[i], knots[i+1]].  Predictability (measurability with
    respect to strictly earlier jumps) is the caller's contract."""

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if k.ndim != 1 or v.ndim != 1 or k.size != v.size + 1:
            raise ValueError("need len(knots) == len(values) + 1")
        if k[0] != 0.0 or np.any(np.diff(k) <= 0):
            raise ValueError("knots must start at 0 and increase strictly")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)

    @property
    def horizon(self) -> float:
        return float(self.knots[-1])

    def value(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.knots, t, side="left"), 1, self.values.size)
        out = self.values[idx - 1]
        return out

    def integral_to(self, t) -> np.ndarray:
        """u_hat(t) = int_0^t u, piecewise linear."""
        t = np.asarray(t, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.values * np.diff(self.knots))])
        idx = np.clip(np.searchsorted(self.knots, t, side="left"), 1, self.values.size)
        return cum[idx - 1] + self.values[idx - 1] * (t - self.knots[idx - 1])

    def total(self) -> float:
        return float(np.sum(self.values * np.diff(self.knots)))


def divergence_predictable(model: HawkesModel, path: HawkesPath, u: StepProcess) -> float:
    """delta(u) for a predictable step process with int_0^T u = 0:
    sum_j [psi(u,T_j) + u_hat(T_j)(Gamma1+Gamma2)(T_j) + u(T_j)]."""
    if abs(u.horizon - path.horizon) > 1e-12:
        raise ValueError("step process horizon does not match the path")
    tot = u.total()
    if abs(tot) > 1e-9:
        raise ValueError(f"int_0^T u = {tot:.3g} violates the zero-mean contract")
    psi, g1, g2, uv, uh = _weight_core(
        model, path.jump_times, path.horizon, u.value, u.integral_to
    )
    if path.jump_times.size == 0:
        return 0.0
    return float(np.sum(psi + uh * (g1 + g2) + uv))


# ---------------------------------------------------------------------------
# change of measure Z^eps
# ---------------------------------------------------------------------------

def z_eps(
    model: HawkesModel,
    path: HawkesPath,
    m: CameronMartinFunction,
    eps: float,
) -> float:
    """Z^eps along the path: the density ratio under the time shift
    Phi_eps(u) = u + eps m_hat(u), times prod_i (1 + eps m(T_i)).

    Bounded m requires eps sup|m| < 1/3 (no truncation needed); an
    unbounded direction is clamped at +-1/(3 eps) and re-centered.
    """
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    if m.bounded:
        if eps * m.sup_m >= 1.0 / 3.0:
            raise ValueError(
                f"eps * sup|m| = {eps * m.sup_m:.3g} must stay below 1/3"
            )
        m_val, m_hat = m.m, m.m_hat
    else:
        m_val, m_hat = _truncated_direction(m, eps)

    t = path.jump_times
    if t.size == 0:
        return 1.0
    T = path.horizon
    from .density import log_kappa_rows  # local import: no cycle at load time

    shifted = t + eps * np.asarray(m_hat(t), dtype=float)
    log_ratio = float(
        log_kappa_rows(model, T, shifted[None, :])[0]
        - log_kappa_rows(model, T, t[None, :])[0]
    )
    log_prod = float(np.sum(np.log1p(eps * np.asarray(m_val(t), dtype=float))))
    return math.exp(log_ratio + log_prod)


def _truncated_direction(m: CameronMartinFunction, eps: float):
    """Clamp an unbounded direction at +-1/(3 eps), re-center so it stays in
    H, and rebuild the antiderivative on a dense grid."""
    cap = 1.0 / (3.0 * eps)
    T = m.horizon
    grid = np.linspace(0.0, T, 8193)
    clipped = np.clip(np.asarray(m.m(grid), dtype=float), -cap, cap)
    cum = cumulative_trapezoid(clipped, grid, initial=0.0)
    shift = cum[-1] / T
    centered = clipped - shift

    def m_val(t):
        return np.clip(np.asarray(m.m(t), dtype=float), -cap, cap) - shift

    def m_hat(t):
        t = np.asarray(t, dtype=float)
        return np.interp(t, grid, cum) - shift * t

    return m_val, m_hat


# ---------------------------------------------------------------------------
# basis projection
# ---------------------------------------------------------------------------

def basis_projection_check(gradient: MalliavinGradient, K: int) -> float:
    """L2 residual of projecting D_sF on the first K cosine + K sine
    directions (each integrates to zero on [0,T]).  DF integrates to zero,
    so the family is asymptotically complete for it and the residual is
    nonincreasing in K."""
    if K < 0:
        raise ValueError("K must be >= 0")
    total_sq = carre_du_champ(gradient, gradient)
    t = gradient.jump_times
    if t.size == 0 or K == 0:
        return math.sqrt(max(total_sq, 0.0))
    T = gradient.horizon
    k = np.arange(1, K + 1, dtype=float)
    scale = math.sqrt(2.0 / T) * (T / (2.0 * math.pi)) / k  # (K,)
    ang = 2.0 * math.pi * np.outer(k, t) / T                # (K, n)
    # <DF, m_i> = -sum_j p_j m_hat_i(T_j)
    coeff_cos = -(scale[:, None] * np.sin(ang)) @ gradient.partials
    coeff_sin = -(scale[:, None] * (1.0 - np.cos(ang))) @ gradient.partials
    proj_sq = float(np.sum(coeff_cos**2) + np.sum(coeff_sin**2))
    return math.sqrt(max(total_sq - proj_sq, 0.0))


# ---------------------------------------------------------------------------
# batch fast paths (exponential kernel)
# ---------------------------------------------------------------------------

def padded_jumps(batch: PathBatch) -> Tuple[np.ndarray, np.ndarray]:
    """(times, mask) as (n_paths, K) arrays, K = max jump count; padded
    slots hold the horizon value and are masked out."""
    counts = batch.counts()
    P = batch.n_paths
    K = int(counts.max()) if P else 0
    mask = np.arange(K)[None, :] < counts[:, None]
    times = np.full((P, K), batch.horizon, dtype=float)
    times[mask] = batch.flat_times
    return times, mask


def _excitation_recurrences(times, mask, alpha, beta, anti_vals):
    """Per-jump sums for the exponential kernel via O(P K) recurrences:

    S_j     = sum_{i<j} alpha e^{-beta (T_j - T_i)}        (pre-jump excitation)
    C_j     = sum_{i<j} anti(T_i) e^{-beta (T_j - T_i)}     (for psi's cross sum)
    """
    P, K = times.shape
    S = np.zeros((P, K))
    C = np.zeros((P, K))
    for j in range(1, K):
        decay = np.exp(-beta * (times[:, j] - times[:, j - 1]))
        S[:, j] = (S[:, j - 1] + alpha) * decay
        C[:, j] = (C[:, j - 1] + anti_vals[:, j - 1]) * decay
    return S, C


def weight_arrays(
    model: HawkesModel, batch: PathBatch, m: CameronMartinFunction
):
    """Vectorized weight terms over a batch (exponential kernel required):
    returns (times, mask, psi, gamma1, gamma2, m_at, m_hat_at) as padded
    (n_paths, K) arrays.  Nonlinear gamma is supported except for Gamma2,
    which is closed-form only in the linear case."""
    kernel = model.kernel
    if kernel.family != "exponential":
        raise ValueError("batch weight arrays require the exponential kernel")
    if not model.nonlinearity.is_linear():
        raise ValueError(
            "batch weight arrays use the closed-form Gamma2; nonlinear "
            "models need the per-path route"
        )
    alpha, beta = float(kernel.alpha), float(kernel.beta)
    gam = model.nonlinearity
    T = batch.horizon
    times, mask = padded_jumps(batch)
    if times.shape[1] == 0:
        empty = np.zeros_like(times)
        return times, mask, empty, empty, empty, empty, empty

    m_hat_at = np.asarray(m.m_hat(times), dtype=float)
    m_at = np.asarray(m.m(times), dtype=float)
    S, C = _excitation_recurrences(times, mask, alpha, beta, m_hat_at)
    # cross_j = sum_{i<j} (m_hat_j - m_hat_i) mu'(T_j - T_i)
    #         = -beta (m_hat_j S_j - alpha C_j)
    cross = -beta * (m_hat_at * S - alpha * C)
    lam_star = model.baseline.value(times) + gam.value(S)
    psi = (m_hat_at * model.baseline.derivative(times) + gam.derivative(S) * cross) / lam_star
    gamma1 = gam.value(alpha + S) - gam.value(S)
    gamma2 = kernel.mu(T - times) - alpha
    return times, mask, psi, gamma1, gamma2, m_at, m_hat_at


def divergence_m_batch(
    model: HawkesModel, batch: PathBatch, m: CameronMartinFunction
) -> np.ndarray:
    """delta(m) for every path of a batch.  Exponential-kernel linear models
    go through O(P K) recurrences; anything else falls back per path."""
    if model.kernel.family == "exponential" and model.nonlinearity.is_linear():
        times, mask, psi, g1, g2, m_at, m_hat_at = weight_arrays(model, batch, m)
        if times.shape[1] == 0:
            return np.zeros(batch.n_paths)
        summand = np.where(mask, psi + m_hat_at * (g1 + g2) + m_at, 0.0)
        return summand.sum(axis=1)
    return np.array([divergence_m(model, p, m) for p in batch])


def z_eps_batch(
    model: HawkesModel, batch: PathBatch, m: CameronMartinFunction, eps: float
) -> np.ndarray:
    """Z^eps for every path; recurrence fast path for exponential + linear
    models, per-path fallback otherwise."""
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    fast = (
        model.kernel.family == "exponential"
        and model.nonlinearity.is_linear()
        and m.bounded
        and eps * m.sup_m < 1.0 / 3.0
    )
    if not fast:
        return np.array([z_eps(model, p, m, eps) for p in batch])

    kernel = model.kernel
    alpha, beta = float(kernel.alpha), float(kernel.beta)
    T = batch.horizon
    times, mask = padded_jumps(batch)
    if times.shape[1] == 0:
        return np.ones(batch.n_paths)

    def log_kappa_parts(tt):
        zeros = np.zeros_like(tt)
        S, _ = _excitation_recurrences(tt, mask, alpha, beta, zeros)
        lam = model.baseline.value(tt) + S
        log_prod = np.where(mask, np.log(lam), 0.0).sum(axis=1)
        tail = np.where(mask, kernel.mu_hat(T - tt), 0.0).sum(axis=1)
        return log_prod - tail  # baseline integral cancels in the ratio

    shifted = times + eps * np.asarray(m.m_hat(times), dtype=float)
    log_ratio = log_kappa_parts(shifted) - log_kappa_parts(times)
    log_prod = np.where(
        mask, np.log1p(eps * np.asarray(m.m(times), dtype=float)), 0.0
    ).sum(axis=1)
    return np.exp(log_ratio + log_prod)
