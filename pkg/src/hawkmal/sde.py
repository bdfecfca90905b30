"""Jump SDEs driven by a Hawkes path.

dX_t = f(t, X_t) dt + g(t, X_{t-}) dN_t

Between jumps the state follows the deterministic flow of f; at a jump it
maps through Psi(t, x) = x + g(t, x).  The terminal state is the composition
X_T = Phi_{T_n,T} . Psi(T_n, .) . ... . Psi(T_1, .) . Phi_{0,T_1} applied to
x0.  The tangent process K_t (derivative of the flow) and its inverse
K_tilde_t propagate jump-time sensitivities; the per-jump vectors

    v_i = -K_T K_tilde_{T_i} phi(T_i, X_{T_i-}),
    phi(t, x) = f(t, x + g(t, x)) - (I + grad_x g) f(t, x) - dg/dt,

assemble the gradient D_s X_T = sum_i v_i (T_i/T - 1_{[0,T_i]}(s)) and the
carre du champ Gamma[X_T] = sum_{ij} v_i v_j^T xi(T_i, T_j), whose
non-degeneracy is the absolute-continuity criterion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.linalg import expm

from .model import AssumptionError
from .simulate import HawkesPath, PathBatch

_STEP_FRACTION = 1e-3     # h <= 1e-3 * horizon
_MIN_SEGMENT_STEPS = 16   # h <= (t - s) / 16
_DET_FLOOR = 1e-12
_PRODUCT_RESET = 1e-10    # renormalize K_tilde when |K K~ - I| exceeds this


class LinearCoeffs(NamedTuple):
    """Constant coefficients of dX = (A X + b) dt + (M X- + beta) dN."""

    A: np.ndarray
    b: np.ndarray
    M: np.ndarray
    beta: np.ndarray


class ElementwiseCoeffs(NamedTuple):
    """Scalar coefficient callables that broadcast over ndarray arguments,
    enabling the path-vectorized d = 1 engine."""

    f: Callable
    f_x: Callable
    g: Callable
    g_x: Callable
    g_t: Callable


@dataclass(frozen=True, eq=False)
class JumpSde:
    """Coefficients of the jump SDE, in vector form.

    `drift`, `jump` map (t, x[d]) -> (d,); `drift_jac`, `jump_jac` map to
    (d, d); `jump_dt` is the partial of g in t.  Optional extras: exact
    linear coefficients, elementwise scalar callables for the batched d = 1
    engine, and user-supplied bounds for the Wronskian certificate
    |W(f,g)| > 0.5 * sup|f''| * (sup|g|)^2.
    """

    dim: int
    x0: np.ndarray
    drift: Callable
    drift_jac: Callable
    jump: Callable
    jump_jac: Callable
    jump_dt: Callable
    elementwise: Optional[ElementwiseCoeffs] = None
    linear: Optional[LinearCoeffs] = None
    wronskian_inf: Optional[float] = None
    f_second_sup: Optional[float] = None
    g_sup: Optional[float] = None
    label: str = "custom"

    def __post_init__(self):
        object.__setattr__(
            self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float)).copy()
        )
        if self.x0.shape != (self.dim,):
            raise ValueError(f"x0 must have shape ({self.dim},)")

    # ---- constructors ----

    @staticmethod
    def scalar(
        f: Callable,
        f_x: Callable,
        g: Callable,
        g_x: Callable,
        g_t: Callable = None,
        *,
        x0: float,
        wronskian_inf: float = None,
        f_second_sup: float = None,
        g_sup: float = None,
        label: str = "custom-scalar",
    ) -> "JumpSde":
        """One-dimensional SDE from elementwise callables (t, x) -> float.

        The callables must broadcast over ndarray `x` (write them with
        numpy operations); that unlocks the vectorized batch engine.
        """
        if g_t is None:
            g_t = lambda t, x: np.zeros_like(np.asarray(x, dtype=float))
        ew = ElementwiseCoeffs(f, f_x, g, g_x, g_t)
        return JumpSde(
            dim=1,
            x0=np.array([x0], dtype=float),
            drift=lambda t, x: np.atleast_1d(np.asarray(f(t, x[0]), dtype=float)),
            drift_jac=lambda t, x: np.array([[f_x(t, x[0])]], dtype=float),
            jump=lambda t, x: np.atleast_1d(np.asarray(g(t, x[0]), dtype=float)),
            jump_jac=lambda t, x: np.array([[g_x(t, x[0])]], dtype=float),
            jump_dt=lambda t, x: np.atleast_1d(np.asarray(g_t(t, x[0]), dtype=float)),
            elementwise=ew,
            wronskian_inf=wronskian_inf,
            f_second_sup=f_second_sup,
            g_sup=g_sup,
            label=label,
        )

    @staticmethod
    def linear_scalar(
        a: float, b: float, alpha: float, beta: float, *, x0: float
    ) -> "JumpSde":
        """dX = (aX + b) dt + (alpha X- + beta) dN; phi = a beta - alpha b."""
        if abs(1.0 + alpha) < _DET_FLOOR:
            raise AssumptionError("1 + alpha must be nonzero")
        sde = JumpSde.scalar(
            f=lambda t, x: a * x + b,
            f_x=lambda t, x: a * np.ones_like(np.asarray(x, dtype=float)),
            g=lambda t, x: alpha * x + beta,
            g_x=lambda t, x: alpha * np.ones_like(np.asarray(x, dtype=float)),
            x0=x0,
            label="linear-scalar",
        )
        lin = LinearCoeffs(
            A=np.array([[a]]),
            b=np.array([b]),
            M=np.array([[alpha]]),
            beta=np.array([beta]),
        )
        object.__setattr__(sde, "linear", lin)
        return sde

    @staticmethod
    def linear_dd(
        A: np.ndarray,
        b: np.ndarray,
        M: np.ndarray,
        beta: np.ndarray,
        *,
        x0: np.ndarray,
        label: str = "linear",
    ) -> "JumpSde":
        """dX = (AX + b) dt + (MX- + beta) dN in dimension d."""
        A = np.asarray(A, dtype=float)
        M = np.asarray(M, dtype=float)
        b = np.asarray(b, dtype=float)
        beta = np.asarray(beta, dtype=float)
        d = A.shape[0]
        if A.shape != (d, d) or M.shape != (d, d):
            raise ValueError("A and M must be square with matching shape")
        if abs(np.linalg.det(np.eye(d) + M)) < _DET_FLOOR:
            raise AssumptionError("det(I + M) must be nonzero")
        return JumpSde(
            dim=d,
            x0=np.asarray(x0, dtype=float),
            drift=lambda t, x: A @ x + b,
            drift_jac=lambda t, x: A,
            jump=lambda t, x: M @ x + beta,
            jump_jac=lambda t, x: M,
            jump_dt=lambda t, x: np.zeros(d),
            linear=LinearCoeffs(A=A, b=b, M=M, beta=beta),
            label=label,
        )

    @staticmethod
    def cos_sin(x0: float = 0.0) -> "JumpSde":
        """f = cos, g = sin: |W(f,g)| = cos^2 + sin^2 = 1 > 1/2 = bound."""
        return JumpSde.scalar(
            f=lambda t, x: np.cos(x),
            f_x=lambda t, x: -np.sin(x),
            g=lambda t, x: np.sin(x),
            g_x=lambda t, x: np.cos(x),
            x0=x0,
            wronskian_inf=1.0,
            f_second_sup=1.0,
            g_sup=1.0,
            label="cos-sin",
        )


def sde_preset(name: str) -> JumpSde:
    """Named example systems used by the command-line runner."""
    if name == "linear-scalar":
        return JumpSde.linear_scalar(a=0.5, b=0.1, alpha=0.3, beta=0.2, x0=1.0)
    if name == "cos-sin":
        return JumpSde.cos_sin(x0=0.0)
    if name == "linear-d2":
        return JumpSde.linear_dd(
            A=np.eye(2),
            b=np.zeros(2),
            M=np.diag([1.0, 2.0]),
            beta=np.ones(2),
            x0=np.ones(2),
            label="linear-d2",
        )
    raise ValueError(f"unknown SDE preset {name!r}")


# ---- results ----

@dataclass(frozen=True, eq=False)
class FlowResult:
    state: np.ndarray
    error_estimate: float
    n_steps: int


@dataclass(frozen=True, eq=False)
class PathSolution:
    jump_times: np.ndarray
    horizon: float
    terminal: np.ndarray
    pre_jump_states: np.ndarray   # (n, d): X_{T_i-}
    post_jump_states: np.ndarray  # (n, d): X_{T_i}
    flow_error: float


@dataclass(frozen=True, eq=False)
class TangentResult:
    K_T: np.ndarray
    K_tilde_T: np.ndarray
    k_tilde_at_jumps: np.ndarray  # (n, d, d), post-jump values
    jump_dets: np.ndarray         # det(I + grad_x g) per jump
    product_drift: float          # max |K K~ - I| observed

    def k_T_from(self, i: int) -> np.ndarray:
        """K_T^{T_i} = K_T K_tilde_{T_i} for the i-th jump (0-based)."""
        return self.K_T @ self.k_tilde_at_jumps[i]


@dataclass(frozen=True, eq=False)
class SensitivityReport:
    jump_times: np.ndarray
    horizon: float
    vectors: np.ndarray    # (n, d): v_i = -K_T^{T_i} phi(T_i, X_{T_i-})
    gamma: np.ndarray      # (d, d)
    det: float
    min_eig: float
    product_drift: float
    terminal: np.ndarray

    def gradient_component(self, component: int = 0):
        """The scalar-component gradient in the shared jump-time
        representation (partials = v_i[component])."""
        from .malliavin import MalliavinGradient

        return MalliavinGradient(
            self.jump_times, self.vectors[:, component].copy(), self.horizon
        )


# ---- deterministic flow ----

def _rk4_run(fun, s: float, span: float, y, n: int):
    h = span / n
    t = s
    for k in range(n):
        k1 = fun(t, y)
        k2 = fun(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = fun(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = fun(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = s + (k + 1) * h
    return y


def _segment_steps(span: float, horizon: float) -> int:
    h = min(_STEP_FRACTION * horizon, span / _MIN_SEGMENT_STEPS)
    return max(1, math.ceil(span / h))


def solve_flow(
    sde: JumpSde, s: float, t: float, x, horizon: float = None
) -> FlowResult:
    """Phi_{s,t}(x) by fixed-step RK4 (h = min(1e-3 * horizon, (t-s)/16)),
    with the step-halving (Richardson) error estimate."""
    if t < s:
        raise ValueError("flow requires s <= t")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if t == s:
        return FlowResult(x.copy(), 0.0, 0)
    span = t - s
    H = horizon if horizon is not None else t
    if H <= 0.0:
        raise ValueError("horizon must be positive")
    n = _segment_steps(span, H)
    coarse = _rk4_run(sde.drift, s, span, x, n)
    fine = _rk4_run(sde.drift, s, span, x, 2 * n)
    if not np.all(np.isfinite(fine)):
        raise RuntimeError("flow integration produced non-finite state")
    err = float(np.max(np.abs(fine - coarse))) / 15.0
    return FlowResult(fine, err, 2 * n)


def _apply_jump(sde: JumpSde, t: float, x: np.ndarray) -> tuple:
    """Psi(t, x) = x + g(t, x), guarding det(I + grad_x g) != 0."""
    grad = np.atleast_2d(np.asarray(sde.jump_jac(t, x), dtype=float))
    det = float(np.linalg.det(np.eye(sde.dim) + grad))
    if abs(det) < _DET_FLOOR:
        raise AssumptionError(
            f"det(I + grad_x g) = {det:.3e} at jump time {t:.6g}: "
            "the jump map is not invertible"
        )
    return x + np.atleast_1d(np.asarray(sde.jump(t, x), dtype=float)), grad, det


def solve_path(sde: JumpSde, path: HawkesPath) -> PathSolution:
    """Terminal state by flow composition, with the state just before and
    just after every jump."""
    T = path.horizon
    x = sde.x0.copy()
    pre = np.empty((path.count, sde.dim))
    post = np.empty((path.count, sde.dim))
    err = 0.0
    prev = 0.0
    for i, tj in enumerate(path.jump_times):
        res = solve_flow(sde, prev, float(tj), x, horizon=T)
        err += res.error_estimate
        pre[i] = res.state
        x, _, _ = _apply_jump(sde, float(tj), res.state)
        post[i] = x
        prev = float(tj)
    res = solve_flow(sde, prev, T, x, horizon=T)
    err += res.error_estimate
    return PathSolution(
        jump_times=path.jump_times,
        horizon=T,
        terminal=res.state,
        pre_jump_states=pre,
        post_jump_states=post,
        flow_error=err,
    )


def phi_jump_sensitivity(sde: JumpSde, t: float, x) -> np.ndarray:
    """phi(t, x) = f(t, x + g(t, x)) - (I + grad_x g(t, x)) f(t, x) - dg/dt."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g = np.atleast_1d(np.asarray(sde.jump(t, x), dtype=float))
    grad = np.atleast_2d(np.asarray(sde.jump_jac(t, x), dtype=float))
    f_here = np.atleast_1d(np.asarray(sde.drift(t, x), dtype=float))
    f_shift = np.atleast_1d(np.asarray(sde.drift(t, x + g), dtype=float))
    dgdt = np.atleast_1d(np.asarray(sde.jump_dt(t, x), dtype=float))
    return f_shift - f_here - grad @ f_here - dgdt


# ---- tangent process ----

def _tangent_sweep(sde: JumpSde, path: HawkesPath):
    """One pass integrating (x, K, K_tilde) jointly.

    Between jumps: x' = f, K' = (grad f) K, K~' = -K~ (grad f); at a jump,
    K <- (I + grad g) K and K~ <- K~ (I + grad g)^{-1}.  Returns the
    pre-jump states, post-jump K_tilde snapshots, jump determinants, the
    terminal triple, and the largest |K K~ - I| seen before renormalizing.
    """
    T = path.horizon
    d = sde.dim
    eye = np.eye(d)
    x = sde.x0.copy()
    K = eye.copy()
    Kt = eye.copy()
    drift_max = 0.0
    n = path.count
    pre = np.empty((n, d))
    ktil_post = np.empty((n, d, d))
    dets = np.empty(n)

    def advance(s, e, x, K, Kt):
        span = e - s
        if span <= 0.0:
            return x, K, Kt
        steps = _segment_steps(span, T)
        h = span / steps
        t = s
        for k in range(steps):
            x1, K1, Kt1 = _tangent_rhs(sde, t, x, K, Kt)
            x2, K2, Kt2 = _tangent_rhs(
                sde, t + 0.5 * h, x + 0.5 * h * x1, K + 0.5 * h * K1,
                Kt + 0.5 * h * Kt1,
            )
            x3, K3, Kt3 = _tangent_rhs(
                sde, t + 0.5 * h, x + 0.5 * h * x2, K + 0.5 * h * K2,
                Kt + 0.5 * h * Kt2,
            )
            x4, K4, Kt4 = _tangent_rhs(
                sde, t + h, x + h * x3, K + h * K3, Kt + h * Kt3
            )
            x = x + (h / 6.0) * (x1 + 2.0 * x2 + 2.0 * x3 + x4)
            K = K + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
            Kt = Kt + (h / 6.0) * (Kt1 + 2.0 * Kt2 + 2.0 * Kt3 + Kt4)
            t = s + (k + 1) * h
        return x, K, Kt

    prev = 0.0
    for i, tj in enumerate(path.jump_times):
        x, K, Kt = advance(prev, float(tj), x, K, Kt)
        pre[i] = x
        x, grad, det = _apply_jump(sde, float(tj), x)
        dets[i] = det
        K = (eye + grad) @ K
        Kt = np.linalg.solve((eye + grad).T, Kt.T).T  # Kt (I + grad)^{-1}
        drift = float(np.max(np.abs(K @ Kt - eye)))
        drift_max = max(drift_max, drift)
        if drift > _PRODUCT_RESET:
            Kt = np.linalg.solve(K, eye)
        ktil_post[i] = Kt
        prev = float(tj)
    x, K, Kt = advance(prev, T, x, K, Kt)
    drift_max = max(drift_max, float(np.max(np.abs(K @ Kt - eye))))
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(K))):
        raise RuntimeError("tangent integration produced non-finite state")
    return x, pre, K, Kt, ktil_post, dets, drift_max


def _tangent_rhs(sde: JumpSde, t: float, x, K, Kt):
    J = np.atleast_2d(np.asarray(sde.drift_jac(t, x), dtype=float))
    return np.atleast_1d(np.asarray(sde.drift(t, x), dtype=float)), J @ K, -Kt @ J


def tangents(sde: JumpSde, path: HawkesPath) -> TangentResult:
    """K_T, its inverse, and the post-jump K_tilde snapshots that give
    K_T^{T_i} = K_T K_tilde_{T_i}."""
    _, _, K, Kt, ktil_post, dets, drift = _tangent_sweep(sde, path)
    return TangentResult(
        K_T=K,
        K_tilde_T=Kt,
        k_tilde_at_jumps=ktil_post,
        jump_dets=dets,
        product_drift=drift,
    )


def grad_and_gamma_XT(sde: JumpSde, path: HawkesPath) -> SensitivityReport:
    """Per-jump coefficients v_i = -K_T^{T_i} phi(T_i, X_{T_i-}) and
    Gamma[X_T] = sum_{ij} v_i v_j^T (T_i ^ T_j - T_i T_j / T)."""
    xT, pre, K, _, ktil_post, _, drift = _tangent_sweep(sde, path)
    n = path.count
    d = sde.dim
    t = path.jump_times
    v = np.zeros((n, d))
    for i in range(n):
        phi = phi_jump_sensitivity(sde, float(t[i]), pre[i])
        v[i] = -(K @ ktil_post[i]) @ phi
    if n:
        xi = np.minimum.outer(t, t) - np.outer(t, t) / path.horizon
        gamma = v.T @ xi @ v
        gamma = 0.5 * (gamma + gamma.T)
    else:
        gamma = np.zeros((d, d))
    eigs = np.linalg.eigvalsh(gamma) if n else np.zeros(d)
    return SensitivityReport(
        jump_times=t,
        horizon=path.horizon,
        vectors=v,
        gamma=gamma,
        det=float(np.linalg.det(gamma)) if n else 0.0,
        min_eig=float(eigs[0]) if n else 0.0,
        product_drift=drift,
        terminal=xT,
    )


# ---- exact linear engine ----

def _linear_propagators(lin: LinearCoeffs, span: float, d: int):
    """(state map, K factor) over a jump-free interval of length `span`:
    x -> E x + c with E = expm(A span), via the augmented-matrix trick."""
    aug = np.zeros((d + 1, d + 1))
    aug[:d, :d] = lin.A
    aug[:d, d] = lin.b
    big = expm(aug * span)
    return big[:d, :d], big[:d, d]


def _linear_sensitivity(sde: JumpSde, path: HawkesPath) -> SensitivityReport:
    """Closed-form flow and tangents for constant-coefficient linear SDEs
    (matrix exponentials per segment; exact up to expm accuracy)."""
    lin = sde.linear
    d = sde.dim
    T = path.horizon
    t = path.jump_times
    n = path.count
    eye = np.eye(d)
    J = eye + lin.M
    det_j = float(np.linalg.det(J))
    if abs(det_j) < _DET_FLOOR:
        raise AssumptionError("det(I + M) vanished in the linear jump map")
    J_inv = np.linalg.solve(J, eye)
    phi = lin.A @ lin.beta - lin.M @ lin.b
    x = sde.x0.copy()
    K = eye.copy()
    Kt = eye.copy()
    ktil_post = np.empty((n, d, d))
    prev = 0.0
    for i in range(n):
        E, c = _linear_propagators(lin, float(t[i]) - prev, d)
        x = E @ x + c
        K = E @ K
        Kt = Kt @ np.linalg.solve(E, eye)
        x = J @ x + lin.beta
        K = J @ K
        Kt = Kt @ J_inv
        ktil_post[i] = Kt
        prev = float(t[i])
    E, c = _linear_propagators(lin, T - prev, d)
    x = E @ x + c
    K = E @ K
    Kt = Kt @ np.linalg.solve(E, eye)
    v = np.zeros((n, d))
    for i in range(n):
        v[i] = -(K @ ktil_post[i]) @ phi
    if n:
        xi = np.minimum.outer(t, t) - np.outer(t, t) / T
        gamma = v.T @ xi @ v
        gamma = 0.5 * (gamma + gamma.T)
        eigs = np.linalg.eigvalsh(gamma)
    else:
        gamma = np.zeros((d, d))
        eigs = np.zeros(d)
    return SensitivityReport(
        jump_times=t,
        horizon=T,
        vectors=v,
        gamma=gamma,
        det=float(np.linalg.det(gamma)) if n else 0.0,
        min_eig=float(eigs[0]) if n else 0.0,
        product_drift=float(np.max(np.abs(K @ Kt - eye))),
        terminal=x,
    )


# ---- vectorized scalar engine ----

def _scalar_batch_sweep(sde: JumpSde, batch: PathBatch):
    """All-paths lockstep integration for d = 1 systems built from
    elementwise coefficients.

    Returns (terminal (P,), gamma (P,), product_drift).  Per path the
    quadratic form uses w_i = K_tilde_{T_i} phi_i and, with jump times
    sorted, sum_{ij} w_i w_j (t_i ^ t_j) = sum_j w_j (2 A_j + w_j t_j)
    where A_j is the running sum of w_i t_i over i < j.
    """
    ew = sde.elementwise
    T = batch.horizon
    counts = batch.counts()
    P = batch.n_paths
    starts = batch.offsets[:-1]
    x = np.full(P, sde.x0[0])
    K = np.ones(P)
    Kt = np.ones(P)
    q = np.zeros(P)        # sum_j w_j (2 A_j + w_j t_j)
    acc = np.zeros(P)      # running sum of w_i t_i
    t_cur = np.zeros(P)
    drift_max = 0.0

    def advance(target):
        nonlocal x, K, Kt, drift_max
        span = target - t_cur
        live = span > 0.0
        if not np.any(live):
            return
        steps = np.zeros(P, dtype=np.int64)
        caps = np.minimum(_STEP_FRACTION * T, span[live] / _MIN_SEGMENT_STEPS)
        steps[live] = np.maximum(1, np.ceil(span[live] / caps)).astype(np.int64)
        h_full = np.where(live, span / np.maximum(steps, 1), 0.0)
        for k in range(int(steps.max())):
            h = np.where(k < steps, h_full, 0.0)
            t = t_cur + k * h_full
            f1 = ew.f(t, x)
            j1 = ew.f_x(t, x)
            k1x, k1k, k1t = f1, j1 * K, -Kt * j1
            xm = x + 0.5 * h * k1x
            f2 = ew.f(t + 0.5 * h, xm)
            j2 = ew.f_x(t + 0.5 * h, xm)
            k2x, k2k, k2t = f2, j2 * (K + 0.5 * h * k1k), -(Kt + 0.5 * h * k1t) * j2
            xm = x + 0.5 * h * k2x
            j3 = ew.f_x(t + 0.5 * h, xm)
            k3x = ew.f(t + 0.5 * h, xm)
            k3k, k3t = j3 * (K + 0.5 * h * k2k), -(Kt + 0.5 * h * k2t) * j3
            xm = x + h * k3x
            j4 = ew.f_x(t + h, xm)
            k4x = ew.f(t + h, xm)
            k4k, k4t = j4 * (K + h * k3k), -(Kt + h * k3t) * j4
            x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            K = K + (h / 6.0) * (k1k + 2.0 * k2k + 2.0 * k3k + k4k)
            Kt = Kt + (h / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
        t_cur[live] = target[live]
        drift = float(np.max(np.abs(K * Kt - 1.0)))
        drift_max = max(drift_max, drift)
        bad = np.abs(K * Kt - 1.0) > _PRODUCT_RESET
        if np.any(bad):
            Kt = np.where(bad, 1.0 / K, Kt)

    max_n = int(counts.max()) if P else 0
    for j in range(max_n):
        has = counts > j
        tj = np.where(has, T, t_cur)
        tj[has] = batch.flat_times[starts[has] + j]
        advance(np.where(has, tj, t_cur))
        # jump application on the active paths
        idx = np.flatnonzero(has)
        tj_a = tj[idx]
        x_a = x[idx]
        gx = ew.g_x(tj_a, x_a)
        jfac = 1.0 + np.asarray(gx, dtype=float)
        if np.any(np.abs(jfac) < _DET_FLOOR):
            raise AssumptionError(
                "det(I + grad_x g) vanished at a jump in the batch"
            )
        gval = np.asarray(ew.g(tj_a, x_a), dtype=float)
        f_here = np.asarray(ew.f(tj_a, x_a), dtype=float)
        f_shift = np.asarray(ew.f(tj_a, x_a + gval), dtype=float)
        dgdt = np.asarray(ew.g_t(tj_a, x_a), dtype=float)
        phi = f_shift - f_here - gx * f_here - dgdt
        K[idx] *= jfac
        Kt[idx] /= jfac
        w = Kt[idx] * phi
        q[idx] += w * (2.0 * acc[idx] + w * tj_a)
        acc[idx] += w * tj_a
        x[idx] = x_a + gval
    advance(np.full(P, T))
    gamma = K * K * (q - acc * acc / T)
    if not np.all(np.isfinite(x)):
        raise RuntimeError("batch flow integration produced non-finite state")
    return x, gamma, drift_max


# ---- absolute-continuity criteria ----

@dataclass(frozen=True, eq=False)
class DensityCriteria:
    """Batch evidence for the absolute-continuity of X_T.

    Scalar systems report min Gamma[X_T] over {N_T >= 1} plus the analytic
    Wronskian certificate when bounds were supplied; linear d-dim systems
    report the spanning rank of the per-jump vectors on {N_T >= min_jumps}
    and the smallest Gamma eigenvalue there.
    """

    label: str
    kind: str
    n_paths: int
    n_conditioned: int
    min_jumps: int
    counts: np.ndarray
    terminal: np.ndarray        # (P, d)
    per_path_det: np.ndarray
    per_path_min_eig: np.ndarray
    per_path_flag: np.ndarray   # criterion satisfied on this path
    min_gamma: float
    n_nonpositive: int
    wronskian_margin: Optional[float]
    wronskian_certified: Optional[bool]
    min_rank: Optional[int]
    rank_target: Optional[int]
    min_sigma: Optional[float]
    product_drift: float
    passed: bool


def density_criteria(
    sde: JumpSde, batch: PathBatch, min_jumps: int = None
) -> DensityCriteria:
    """Evaluate the non-degeneracy criteria over a simulated batch.

    `min_jumps` is the conditioning threshold (how many jumps the spanning
    argument needs); it defaults to 1 for scalar systems and to the
    dimension for linear d-dim ones.
    """
    counts = batch.counts()
    P = batch.n_paths
    if sde.dim == 1:
        ell = 1 if min_jumps is None else int(min_jumps)
        if sde.elementwise is not None:
            terminal, gamma, drift = _scalar_batch_sweep(sde, batch)
        else:
            terminal = np.empty(P)
            gamma = np.empty(P)
            drift = 0.0
            for i, path in enumerate(batch):
                rep = grad_and_gamma_XT(sde, path)
                terminal[i] = rep.terminal[0]
                gamma[i] = rep.gamma[0, 0]
                drift = max(drift, rep.product_drift)
        cond = counts >= ell
        flags = gamma > 0.0
        cond_gamma = gamma[cond]
        min_gamma = float(cond_gamma.min()) if cond_gamma.size else math.nan
        n_nonpos = int(np.sum(cond_gamma <= 0.0))
        margin = None
        certified = None
        if (
            sde.wronskian_inf is not None
            and sde.f_second_sup is not None
            and sde.g_sup is not None
        ):
            margin = sde.wronskian_inf - 0.5 * sde.f_second_sup * sde.g_sup**2
            certified = margin > 0.0
        return DensityCriteria(
            label=sde.label,
            kind="scalar",
            n_paths=P,
            n_conditioned=int(cond.sum()),
            min_jumps=ell,
            counts=counts,
            terminal=terminal.reshape(P, 1),
            per_path_det=gamma,
            per_path_min_eig=gamma,
            per_path_flag=flags,
            min_gamma=min_gamma,
            n_nonpositive=n_nonpos,
            wronskian_margin=margin,
            wronskian_certified=certified,
            min_rank=None,
            rank_target=None,
            min_sigma=None,
            product_drift=drift,
            passed=bool(cond_gamma.size) and n_nonpos == 0,
        )

    # d-dimensional: spanning rank of the per-jump vectors
    d = sde.dim
    ell = d if min_jumps is None else int(min_jumps)
    terminal = np.empty((P, d))
    dets = np.empty(P)
    min_eigs = np.empty(P)
    ranks = np.full(P, -1, dtype=np.int64)
    flags = np.zeros(P, dtype=bool)
    drift = 0.0
    solver = _linear_sensitivity if sde.linear is not None else grad_and_gamma_XT
    for i, path in enumerate(batch):
        rep = solver(sde, path)
        terminal[i] = rep.terminal
        dets[i] = rep.det
        min_eigs[i] = rep.min_eig
        drift = max(drift, rep.product_drift)
        if path.count >= ell:
            ranks[i] = int(np.linalg.matrix_rank(rep.vectors))
            flags[i] = ranks[i] == d
    cond = counts >= ell
    n_cond = int(cond.sum())
    cond_ranks = ranks[cond]
    cond_eigs = min_eigs[cond]
    return DensityCriteria(
        label=sde.label,
        kind="linear-ddim" if sde.linear is not None else "general-ddim",
        n_paths=P,
        n_conditioned=n_cond,
        min_jumps=ell,
        counts=counts,
        terminal=terminal,
        per_path_det=dets,
        per_path_min_eig=min_eigs,
        per_path_flag=flags,
        min_gamma=math.nan,
        n_nonpositive=int(np.sum(cond_eigs <= 0.0)) if n_cond else 0,
        wronskian_margin=None,
        wronskian_certified=None,
        min_rank=int(cond_ranks.min()) if n_cond else None,
        rank_target=d,
        min_sigma=float(cond_eigs.min()) if n_cond else None,
        product_drift=drift,
        passed=n_cond > 0 and bool(np.all(cond_ranks == d)),
    )
