"""Time integration of u'' + u' + B2 u - lam A u + (u^T A u) A u = f(t).

The stiff linear part ``K = B2 - lam*A`` is treated implicitly by a
linearly implicit scheme; every implicit solve reduces to one n x n matrix
``(1 + a) I + a b (K + c A)``.  Local errors are estimated by step doubling.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.linalg.lapack import dgbtrf as _gbtrf, dgbtrs as _gbtrs

from .errors import MisalignedGrids, StepSizeUnderflow
from .gap_pair import MatrixPair

FORCING_KINDS = ("zero", "constant", "decaying", "sinusoidal")
SCHEMES = ("ros2", "trapezoid")
ROS2_GAMMA = 1.0 + 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class State:
    t: float
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise ValueError("state has non-finite entries")
        if np.shape(self.u) != np.shape(self.v):
            raise ValueError("u and v differ in shape")


@dataclass(frozen=True)
class Forcing:
    """``f(t) = amplitude * profile(t) * shape`` with ``|shape| = 1``.

    profile: 0 (zero), 1 (constant), ``exp(-rate t)`` (decaying),
    ``sin(omega t + phase)`` (sinusoidal).
    """

    kind: str = "zero"
    amplitude: float = 0.0
    shape: np.ndarray | None = None
    rate: float = 1.0
    omega: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in FORCING_KINDS:
            raise ValueError(f"unknown forcing kind {self.kind!r}")
        if self.kind != "zero":
            if self.shape is None:
                raise ValueError("a nonzero forcing needs a shape vector")
            g = np.asarray(self.shape, dtype=float)
            nrm = np.linalg.norm(g)
            if nrm == 0:
                raise ValueError("forcing shape must be nonzero")
            object.__setattr__(self, "shape", g / nrm)

    def profile(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(t)
        if self.kind == "constant":
            return np.ones_like(t)
        if self.kind == "decaying":
            return np.exp(-self.rate * t)
        return np.sin(self.omega * t + self.phase)

    def __call__(self, t, n=None):
        if self.kind == "zero":
            if n is None:
                raise ValueError("dimension needed for the zero forcing")
            return np.zeros(np.shape(t) + (n,))
        return np.multiply.outer(self.amplitude * self.profile(t), self.shape)

    def norm(self, t):
        """``|f(t)|``."""
        return np.abs(self.amplitude * self.profile(t))

    def negated(self) -> "Forcing":
        if self.kind == "zero":
            return self
        out = Forcing(self.kind, self.amplitude, -self.shape, self.rate, self.omega, self.phase)
        object.__setattr__(out, "shape", -self.shape)  # renormalising could move the last bit
        return out

    @property
    def bound(self) -> float:
        """``sup_t |f(t)|``."""
        return 0.0 if self.kind == "zero" else abs(self.amplitude)


def residual(pair: MatrixPair, lam: float, u, v, f_value):
    """Acceleration implied by the equation: ``f - v - B2 u + lam A u - (u^T A u) A u``.

    Works row-wise on stacked states.
    """
    u = np.asarray(u, dtype=float)
    au = u @ pair.A  # A symmetric
    coef = np.einsum("...i,...i->...", u, au)
    return f_value - v - u @ pair.B2 + lam * au - coef[..., None] * au


@dataclass
class Trajectory:
    """Uniformly sampled solution plus the step controller log."""

    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    step_t: np.ndarray = field(default_factory=lambda: np.empty(0))
    step_h: np.ndarray = field(default_factory=lambda: np.empty(0))
    step_err: np.ndarray = field(default_factory=lambda: np.empty(0))
    step_accepted: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))
    tol: float = float("nan")

    @property
    def stride(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def n_accepted(self) -> int:
        return int(np.count_nonzero(self.step_accepted))

    @property
    def n_rejected(self) -> int:
        return int(self.step_accepted.size - self.n_accepted)

    def state(self, i) -> State:
        return State(float(self.t[i]), self.u[i], self.v[i])

    def tail(self, fraction=0.2):
        """Index slice of samples in the final ``fraction`` of the horizon."""
        t0 = self.t[-1] - fraction * (self.t[-1] - self.t[0])
        return slice(int(np.searchsorted(self.t, t0 - 1e-12 * max(1.0, abs(t0)))), None)

    def write_csv(self, path):
        n = self.u.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"u_{i + 1}" for i in range(n)] + [f"v_{i + 1}" for i in range(n)])
            for t, u, v in zip(self.t, self.u, self.v):
                w.writerow([f"{t:.17g}"] + [f"{x:.17g}" for x in u] + [f"{x:.17g}" for x in v])


class _Stepper:
    """One step of a linearly implicit scheme with a per-step frozen cubic coefficient.

    At the start of a step ``c = u^T A u`` is frozen and ``c*A`` joins the
    implicit operator, since ``c*A`` is as stiff as ``A`` itself.  The cubic
    term itself is re-evaluated at every stage.  Banded pairs are factored
    with LAPACK band routines.

    ``ros2``: two-stage L-stable Rosenbrock method with the exact Jacobian.
    ``trapezoid``: trapezoidal rule on ``K + cA`` with a Heun correction for
    the remainder ``(c(u) - c) A u`` and the forcing.  It does not damp
    unresolved stiff modes, so on fine grids it needs much smaller steps.
    """

    def __init__(self, pair, lam, forcing, scheme="ros2"):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        self.scheme = scheme
        self.A = pair.A
        self.K = pair.stiffness(lam)
        self.n = pair.n
        self.forcing = forcing
        kl = _bandwidth(self.K)
        self.kl = max(kl, _bandwidth(self.A))
        self.banded = 3 * self.kl + 1 < self.n
        if self.banded:
            self.K_band = _to_band(self.K, self.kl)
            self.A_band = _to_band(self.A, self.kl)
            self.I_band = _to_band(np.eye(self.n), self.kl)

    def _factor(self, a, b, c):
        """Factor ``(1 + a) I + a*b*(K + c*A)``."""
        if self.banded:
            ab = (1.0 + a) * self.I_band + (a * b) * (self.K_band + c * self.A_band)
            lub, piv, info = _gbtrf(ab, self.kl, self.kl)
            if info != 0:
                raise np.linalg.LinAlgError("singular step matrix")
            return lub, piv
        M = (1.0 + a) * np.eye(self.n) + (a * b) * (self.K + c * self.A)
        return lu_factor(M, check_finite=False)

    def _solve(self, lu, b):
        if self.banded:
            x, info = _gbtrs(lu[0], self.kl, self.kl, b, lu[1])
            return x
        return lu_solve(lu, b, check_finite=False)

    def forcing_value(self, t):
        if self.forcing.kind == "zero":
            return 0.0
        return self.forcing.amplitude * float(self.forcing.profile(t)) * self.forcing.shape

    def accel(self, t, u, v):
        au = self.A @ u
        return self.forcing_value(t) - v - self.K @ u - (u @ au) * au

    def step(self, t, u, v, h):
        if self.scheme == "ros2":
            return self._step_ros2(t, u, v, h)
        return self._step_trapezoid(t, u, v, h)

    def _step_trapezoid(self, t, u, v, h):
        au = self.A @ u
        c = float(u @ au)
        lu = self._factor(0.5 * h, 0.5 * h, c)
        Kc_u = self.K @ u + c * au
        Kc_v = self.K @ v + c * (self.A @ v)
        g0 = self.forcing_value(t)
        rhs = (1.0 - 0.5 * h) * v - h * (Kc_u + 0.25 * h * Kc_v) + h * g0
        v_pred = self._solve(lu, rhs)
        u_pred = u + 0.5 * h * (v + v_pred)
        au_p = self.A @ u_pred
        g1 = self.forcing_value(t + h) - (u_pred @ au_p - c) * au_p
        v_new = v_pred + self._solve(lu, 0.5 * h * (g1 - g0))
        u_new = u + 0.5 * h * (v + v_new)
        return u_new, v_new

    def _w_solve(self, lu, gh, Kc, au, z, a, b):
        """Solve ``(I - gh*J) [ku; kv] = [a; b]`` for the exact Jacobian

        ``J = [[0, I], [-(K + cA + 2 au au^T), -I]]``.  The rank-one part is
        handled by Sherman-Morrison; ``z`` is the factored solve of ``au``.
        """
        s = 2.0 * gh * gh
        r = b - gh * (Kc @ a + 2.0 * (au @ a) * au)
        y = self._solve(lu, r)
        kv = y - z * (s * (au @ y) / (1.0 + s * (au @ z)))
        return a + gh * kv, kv

    def _step_ros2(self, t, u, v, h):
        gh = ROS2_GAMMA * h
        au = self.A @ u
        c = float(u @ au)
        lu = self._factor(gh, gh, c)
        z = self._solve(lu, au)
        Kc = self.K + c * self.A
        k1u, k1v = self._w_solve(lu, gh, Kc, au, z, v, self.accel(t, u, v))
        u1, v1 = u + h * k1u, v + h * k1v
        k2u, k2v = self._w_solve(
            lu, gh, Kc, au, z, v1 - 2.0 * k1u, self.accel(t + h, u1, v1) - 2.0 * k1v
        )
        return u + h * (1.5 * k1u + 0.5 * k2u), v + h * (1.5 * k1v + 0.5 * k2v)


def _bandwidth(M):
    rows, cols = np.nonzero(M)
    return int(np.max(np.abs(rows - cols))) if rows.size else 0


def _to_band(M, k):
    """LAPACK ``gbtrf`` storage with ``k`` extra rows for fill-in."""
    n = M.shape[0]
    ab = np.zeros((3 * k + 1, n))
    for d in range(-k, k + 1):
        diag = np.diagonal(M, d)
        if d >= 0:
            ab[2 * k - d, d:] = diag
        else:
            ab[2 * k - d, : n + d] = diag
    return ab


def _hermite(t0, t1, y0, y1, d0, d1, ts):
    h = t1 - t0
    s = ((ts - t0) / h)[:, None]
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1


def integrate(
    pair: MatrixPair,
    lam: float,
    forcing: Forcing,
    s0: State,
    T: float,
    tol: float = 1e-8,
    stride: float = 0.01,
    h0: float | None = None,
    h_max: float = 0.5,
    scheme: str = "ros2",
    fixed_step: float | None = None,
) -> Trajectory:
    """Adaptive integration on ``[s0.t, s0.t + T]`` sampled every ``stride``.

    The error estimate compares one step of size h with two of size h/2 and
    is measured in an RMS norm with ``atol = rtol = tol``; the half-step
    result is kept.  A PI controller (safety 0.9, growth at most 2x) picks
    the next step.  With ``fixed_step`` the controller is bypassed, which is
    only meant for convergence studies.
    """
    if not T > 0:
        raise ValueError("horizon T must be positive")
    if not 1e-12 <= tol <= 1e-3:
        raise ValueError("tol must lie in [1e-12, 1e-3]")
    if not 0 < stride <= T:
        raise ValueError("stride must lie in (0, T]")
    n = pair.n
    u = np.array(s0.u, dtype=float)
    v = np.array(s0.v, dtype=float)
    if u.shape != (n,):
        raise ValueError(f"state dimension {u.shape} does not match the pair (n={n})")

    stepper = _Stepper(pair, lam, forcing, scheme)
    t_start = float(s0.t)
    t_end = t_start + T
    m = int(math.floor(T / stride + 1e-9))
    ts = t_start + stride * np.arange(m + 1)
    U = np.empty((m + 1, n))
    V = np.empty((m + 1, n))
    U[0], V[0] = u, v
    next_out = 1

    log_t, log_h, log_err, log_acc = [], [], [], []
    t = t_start
    a = stepper.accel(t, u, v)
    h = fixed_step or min(h0 or min(1e-2, tol ** (1 / 3)), h_max)
    err_prev = 1.0
    order = 2.0
    while t < t_end - 1e-12 * max(1.0, abs(t_end)):
        last = t + h >= t_end - 1e-12 * max(1.0, abs(t_end))
        hh = t_end - t if last else h
        try:
            if fixed_step is not None:
                u2, v2 = stepper.step(t, u, v, hh)
                err = 0.0 if np.all(np.isfinite(u2)) else 1e10
            else:
                u1, v1 = stepper.step(t, u, v, hh)
                um, vm = stepper.step(t, u, v, 0.5 * hh)
                u2, v2 = stepper.step(t + 0.5 * hh, um, vm, 0.5 * hh)
                scale_u = tol + tol * np.maximum(np.abs(u), np.abs(u2))
                scale_v = tol + tol * np.maximum(np.abs(v), np.abs(v2))
                eu = (u2 - u1) / (2.0**order - 1.0) / scale_u
                ev = (v2 - v1) / (2.0**order - 1.0) / scale_v
                err = math.sqrt((eu @ eu + ev @ ev) / (2 * n))
                if not math.isfinite(err):
                    err = 1e10
        except np.linalg.LinAlgError:
            # the step matrix is singular at this step size; retry with a smaller one
            err = 1e10
        accepted = err <= 1.0
        log_t.append(t)
        log_h.append(hh)
        log_err.append(err)
        log_acc.append(accepted)
        if accepted:
            t_new = t_end if last else t + hh
            a_new = stepper.accel(t_new, u2, v2)
            hi = next_out
            while hi <= m and ts[hi] <= t_new + 1e-12 * max(1.0, abs(t_new)):
                hi += 1
            if hi > next_out:
                tq = ts[next_out:hi]
                U[next_out:hi] = _hermite(t, t_new, u, u2, v, v2, tq)
                V[next_out:hi] = _hermite(t, t_new, v, v2, a, a_new, tq)
                next_out = hi
            t, u, v, a = t_new, u2, v2, a_new
            fac = 0.9 * max(err, 1e-10) ** (-0.7 / (order + 1)) * max(err_prev, 1e-4) ** (0.4 / (order + 1))
            err_prev = max(err, 1e-4)
            fac = min(2.0, max(0.2, fac))
        else:
            fac = min(0.9, max(0.2, 0.9 * err ** (-1.0 / (order + 1))))
        if fixed_step is not None and not accepted:
            raise StepSizeUnderflow(f"fixed step {fixed_step:.3e} failed at t={t:.6g}")
        h = fixed_step if fixed_step is not None else min(h_max, hh * fac)
        if h < 1e-14:
            raise StepSizeUnderflow(f"step size {h:.3e} at t={t:.6g}")
    if next_out <= m:
        U[next_out:] = u
        V[next_out:] = v
    return Trajectory(
        t=ts,
        u=U,
        v=V,
        step_t=np.array(log_t),
        step_h=np.array(log_h),
        step_err=np.array(log_err),
        step_accepted=np.array(log_acc, dtype=bool),
        tol=tol,
    )


def integrate_rk4(pair: MatrixPair, lam: float, forcing: Forcing, s0: State, T: float, dt: float, stride: float):
    """Classical fixed-step RK4; an explicit oracle for small non-stiff pairs."""
    n = pair.n
    nsteps = int(round(T / dt))
    every = int(round(stride / dt))
    if abs(nsteps * dt - T) > 1e-9 * T or abs(every * dt - stride) > 1e-9 * stride:
        raise ValueError("T and stride must be integer multiples of dt")
    zero = np.zeros(n)

    def rhs(t, u, v):
        f = forcing(t) if forcing.kind != "zero" else zero
        return v, residual(pair, lam, u, v, f)

    u = np.array(s0.u, dtype=float)
    v = np.array(s0.v, dtype=float)
    t = float(s0.t)
    ts, U, V = [t], [u.copy()], [v.copy()]
    for i in range(1, nsteps + 1):
        k1u, k1v = rhs(t, u, v)
        k2u, k2v = rhs(t + dt / 2, u + dt / 2 * k1u, v + dt / 2 * k1v)
        k3u, k3v = rhs(t + dt / 2, u + dt / 2 * k2u, v + dt / 2 * k2v)
        k4u, k4v = rhs(t + dt, u + dt * k3u, v + dt * k3v)
        u = u + dt / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
        v = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        t = s0.t + i * dt
        if i % every == 0:
            ts.append(t)
            U.append(u.copy())
            V.append(v.copy())
    return Trajectory(t=np.array(ts), u=np.array(U), v=np.array(V))


def pairwise_difference(traj_a: Trajectory, traj_b: Trajectory, pair: MatrixPair):
    """``|u' - v'| + |B(u - v)|`` sample by sample."""
    if traj_a.t.shape != traj_b.t.shape or not np.allclose(traj_a.t, traj_b.t, rtol=0, atol=1e-9):
        raise MisalignedGrids("trajectories are sampled on different time grids")
    du = traj_a.u - traj_b.u
    dv = traj_a.v - traj_b.v
    return np.linalg.norm(dv, axis=1) + pair.b_norm(du)
