"""Quick property checks on built-in pairs, run by ``duffgap verify``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import bisect

from .beam_ops import apply_C, apply_T, assemble_fd, char_roots, uniform_grid
from .dynamics import Forcing, State, Trajectory, integrate
from .gap_pair import diag_pair, gap_spectrum, inertia_index, stationary_residual, unstable_mode, validate_pair
from .lyapunov import F_bounds, certified_constants, energy_F, monitor


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _char_root():
    a = char_roots(1)[1]
    ref = bisect(lambda x: math.tan(x) - x, math.pi + 1e-9, 1.5 * math.pi - 1e-9, xtol=1e-15)
    return abs(a - ref) <= 1e-9, f"alpha1={a!r} bisection={ref!r}"


def _fd_eigs():
    sp = gap_spectrum(assemble_fd(128), k=2)
    r1 = abs(sp.lambda1 / (4 * math.pi**2) - 1)
    r2 = abs(sp.lambda2 / (4 * char_roots(1)[1] ** 2) - 1)
    return max(r1, r2) < 0.01, f"relative errors {r1:.2e}, {r2:.2e} at n=128"


def _inverse_T():
    x = uniform_grid(1025)
    f = np.sin(np.pi * x)
    sol = apply_T(x, f)
    err = math.sqrt(trapezoid((apply_C(x, sol.u_xx) - f) ** 2, x))
    return err <= 1e-10, f"L2 error {err:.2e}"


def _inertia(rng):
    bad = 0
    for _ in range(200):
        n = int(rng.integers(2, 9))
        X = rng.standard_normal((n, n))
        Y = rng.standard_normal((n, n))
        A = X @ X.T + n * np.eye(n)
        B2 = Y @ Y.T + n * np.eye(n)
        pair = validate_pair(A, B2)
        lam = float(rng.uniform(0, 3))
        brute = int(np.sum(np.linalg.eigvalsh(B2 - lam * A) < 0))
        if inertia_index(pair, lam) != brute:
            bad += 1
    return bad == 0, f"{bad} mismatches in 200 pairs"


def _stationary():
    worst = 0.0
    for pair, lam in ((diag_pair(), 2.0), (assemble_fd(64), 60.0)):
        sp = gap_spectrum(pair, k=2)
        u = math.sqrt(lam - sp.lambda1) * sp.e1
        r = np.abs(stationary_residual(pair, lam, u)).max() / (lam * np.linalg.norm(pair.A, 2))
        worst = max(worst, r)
    return worst <= 1e-9, f"scaled residual {worst:.2e}"


def _constants():
    pair = diag_pair()
    sp = gap_spectrum(pair)
    c = certified_constants(pair, sp, unstable_mode(pair, sp, 2.0), 2.0)
    c.verify()
    return abs(c.delta - 1 / 6) < 1e-15 and c.M2 == 4.0, f"delta={c.delta!r} gamma0={c.gamma0!r}"


def _sandwich(rng):
    pair = diag_pair()
    sp = gap_spectrum(pair)
    mode = unstable_mode(pair, sp, 2.0)
    c = certified_constants(pair, sp, mode, 2.0)
    U = rng.uniform(-5, 5, (1000, 2))
    V = rng.uniform(-5, 5, (1000, 2))
    st = Trajectory(t=np.zeros(len(U)), u=U, v=V)
    F = energy_F(st, pair, 2.0, mode, c)
    lo, hi = F_bounds(st, pair, 2.0, c)
    ok = np.all(lo <= F + 1e-12 * (1 + abs(F))) and np.all(F <= hi + 1e-12 * (1 + abs(F)))
    return bool(ok), "1000 random states"


def _monitor():
    pair = diag_pair()
    sp = gap_spectrum(pair)
    mode = unstable_mode(pair, sp, 2.0)
    c = certified_constants(pair, sp, mode, 2.0)
    tr = integrate(pair, 2.0, Forcing(), State(0.0, np.array([2.0, -1.0]), np.array([0.5, 1.0])), 10.0, tol=1e-9, stride=1e-3)
    rep = monitor(tr, Forcing(), pair, 2.0, sp, mode, c)
    return rep.n_violations == 0 and rep.identity_rel_error <= 1e-4, (
        f"violations={rep.n_violations} identity error={rep.identity_rel_error:.2e}"
    )


def run_suite(seed: int = 0):
    rng = np.random.default_rng(seed)
    checks = [
        ("characteristic_root", _char_root),
        ("fd_eigenvalues", _fd_eigs),
        ("inverse_T", _inverse_T),
        ("inertia_index", lambda: _inertia(rng)),
        ("stationary_residual", _stationary),
        ("certified_constants", _constants),
        ("F_sandwich", lambda: _sandwich(rng)),
        ("energy_monitor", _monitor),
    ]
    out = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail))
    return out
