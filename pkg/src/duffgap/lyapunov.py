"""Energies, certified constants and differential-inequality monitors."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from .dynamics import Forcing, Trajectory, residual
from .errors import LambdaOutOfGap, StrideTooCoarse
from .gap_pair import GapSpectrum, MatrixPair, UnstableMode, split_H, split_W

EPS1_SAFETY = 0.99
DEFAULT_SLACK = 1e-6


def _rows(x):
    return np.asarray(x, dtype=float)


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def operators_R_P(u, mode: UnstableMode, delta: float):
    """Reflection ``Ru = u - 2<u, e0> e0`` and ``Pu = u + delta*Ru``."""
    u = _rows(u)
    um = u @ mode.e0
    Ru = u - 2.0 * np.multiply.outer(um, mode.e0)
    return Ru, u + delta * Ru


# --- certified constants -------------------------------------------------


def _largest_feasible(g, hi):
    """Largest ``x`` in ``(0, hi]`` with ``g(x) <= 0`` for increasing ``g``, ``g(0) < 0``."""
    if g(hi) <= 0.0:
        return hi
    x = brentq(g, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    while g(x) > 0.0:
        x = np.nextafter(x, 0.0)
    return float(x)


@dataclass(frozen=True)
class CertifiedConstants:
    """The explicit constant chain for one ``(pair, lambda)``.

    ``binding`` names the defining inequality that is active for each
    constant.  ``eps0_explicit`` ignores the constraints that depend on the
    non-explicit radius and threshold of the unstable regime, which is
    recorded by ``eps0_certified = False``.
    """

    lam: float
    mu1: float
    mu2: float
    mu3: float
    lambda0: float
    lambda2: float
    a_half_e0: float
    a_e0: float
    delta: float
    gamma0: float
    gamma1: float
    Gamma1: float
    Gamma2: float
    beta0: float
    eta: float
    x1: float
    x2: float
    gamma2: float
    eps1: float
    eps0_explicit: float
    sigma0: float
    M1: float
    M2: float
    M3: float
    binding: dict = field(default_factory=dict)
    eps0_certified: bool = False

    # each entry: (name, lhs, rhs) meaning lhs <= rhs must hold
    def inequalities(self):
        g0, d = self.gamma0, self.delta
        m123 = self.mu2**2 * self.mu1 * self.mu3
        b, ah, ae = self.beta0, self.a_half_e0, self.a_e0
        g2, s0 = self.gamma2, self.sigma0
        lam = self.lam
        return [
            ("gamma0:damping", g0, 1.0 / (2.0 * (5.0 + 2.0 * d))),
            ("gamma0:coercivity", g0, d / ((5.0 + d) * (1.0 + d)) * min(m123, self.lambda0)),
            ("gamma1:damping", self.gamma1, 1.0 / 24.0),
            ("gamma1:coercivity", self.gamma1, m123 / 14.0),
            ("beta0:high-frequency", 2.0 * 24.0**2 * b**4 * ae**2, 0.5 * self.gamma1 * self.mu1 * self.mu3),
            ("beta0:low-frequency", 16.0 * b**2 * ah**4 + 4.0 * self.Gamma2 * b**8 * ah, 0.5 * self.lambda0),
            ("eta:beta0", self.eta, 0.25 * g0 * (1.0 - d) * b**2),
            ("eta:sigma0", self.eta, s0**4 / 8.0),
            ("gamma2:cap", g2, 0.125),
            ("gamma2:gap", 2.0 * g2 * (1.0 + 2.0 * g2) / self.mu2, (2.0 - g2) * (self.lambda2 - lam)),
            ("gamma2:start", g2 * (lam**2 / 2.0 + 2.0 * lam**2 / (self.mu2**2 * self.mu1) + 4.0 * s0**2), self.eta / 2.0),
            ("gamma2:well", g2 * s0**2 / 2.0 + 2.0 * g2 * (1.0 + 2.0 * g2) / self.mu2, s0 * (2.0 - g2) * self.x1),
            ("eps1:strict", self.eps1**2 / (2.0 * g2**2), self.eta / 4.0),
        ]

    def verify(self, rtol=1e-12):
        """Relative slack ``(rhs - lhs)/|rhs|`` of every defining inequality.

        Raises ``AssertionError`` if one fails by more than ``rtol`` or if a
        binding inequality is not active to within ``rtol``.
        """
        out = {}
        for name, lhs, rhs in self.inequalities():
            slack = (rhs - lhs) / abs(rhs)
            out[name] = slack
            if slack < -rtol:
                raise AssertionError(f"{name} violated: {lhs!r} > {rhs!r}")
        for const, name in self.binding.items():
            if name in out and not name.startswith("eps1") and out[name] > rtol:
                raise AssertionError(f"{const} is not maximal: {name} has slack {out[name]:.3e}")
        return out

    def table(self):
        """Rows ``(name, value, binding inequality)``."""
        names = [
            "delta", "gamma0", "gamma1", "Gamma1", "Gamma2", "beta0", "eta", "x1", "x2",
            "gamma2", "eps1", "eps0_explicit", "sigma0", "M1", "M2", "M3",
        ]
        return [(k, getattr(self, k), self.binding.get(k, "definition")) for k in names]

    def to_dict(self):
        d = asdict(self)
        d["binding"] = dict(self.binding)
        return d


def certified_constants(
    pair: MatrixPair, spectrum: GapSpectrum, mode: UnstableMode, lam: float
) -> CertifiedConstants:
    if not spectrum.contains(lam):
        raise LambdaOutOfGap(lam, spectrum.lambda1, spectrum.lambda2)
    if abs(mode.lam - lam) > 1e-14 * max(1.0, abs(lam)):
        raise ValueError("unstable mode was computed for a different lambda")
    mu1, mu2, mu3 = pair.mu1, pair.mu2, mode.mu3_certified
    lam0, lam2 = mode.lambda0, spectrum.lambda2
    ah, ae = mode.a_half_e0, mode.a_e0
    s0 = math.sqrt(lam - spectrum.lambda1)
    m123 = mu2**2 * mu1 * mu3
    binding = {}

    delta = 0.5 / (1.0 + 2.0 * ah / math.sqrt(mu2))

    g0_a = 1.0 / (2.0 * (5.0 + 2.0 * delta))
    g0_b = delta / ((5.0 + delta) * (1.0 + delta)) * min(m123, lam0)
    gamma0 = min(g0_a, g0_b)
    binding["gamma0"] = "gamma0:damping" if g0_a <= g0_b else "gamma0:coercivity"

    gamma1 = min(1.0 / 24.0, m123 / 14.0)
    binding["gamma1"] = "gamma1:damping" if 1.0 / 24.0 <= m123 / 14.0 else "gamma1:coercivity"
    Gamma1 = (2.0 / (gamma1 * mu2 * mu1 * mu3)) ** 1.5
    Gamma2 = 2.0**10 * Gamma1 * ae**6

    rhs1 = 0.5 * gamma1 * mu1 * mu3
    b_a = _largest_feasible(lambda b: 2.0 * 24.0**2 * b**4 * ae**2 - rhs1, (rhs1 / (2.0 * 24.0**2 * ae**2)) ** 0.25 * 2)
    g_b = lambda b: 16.0 * b**2 * ah**4 + 4.0 * Gamma2 * b**8 * ah - 0.5 * lam0
    b_b = _largest_feasible(g_b, math.sqrt(lam0 / (32.0 * ah**4)) * 2)
    beta0 = min(b_a, b_b)
    binding["beta0"] = "beta0:high-frequency" if b_a <= b_b else "beta0:low-frequency"

    eta_a = 0.25 * gamma0 * (1.0 - delta) * beta0**2
    eta_b = s0**4 / 8.0
    eta = min(eta_a, eta_b)
    binding["eta"] = "eta:beta0" if eta_a <= eta_b else "eta:sigma0"

    root = math.sqrt(s0**4 - eta)
    x1 = math.sqrt(eta / (s0**2 + root))
    x2 = math.sqrt(s0**2 + root)

    conds = {
        "gamma2:cap": lambda g: g - 0.125,
        "gamma2:gap": lambda g: 2.0 * g * (1.0 + 2.0 * g) / mu2 - (2.0 - g) * (lam2 - lam),
        "gamma2:start": lambda g: g * (lam**2 / 2.0 + 2.0 * lam**2 / (mu2**2 * mu1) + 4.0 * s0**2) - eta / 2.0,
        "gamma2:well": lambda g: g * s0**2 / 2.0 + 2.0 * g * (1.0 + 2.0 * g) / mu2 - s0 * (2.0 - g) * x1,
    }
    # every condition is increasing in gamma2, so the largest admissible value is the smallest root
    roots = {k: _largest_feasible(g, 0.125) for k, g in conds.items()}
    binding["gamma2"] = min(roots, key=roots.get)
    gamma2 = roots[binding["gamma2"]]

    eps1 = EPS1_SAFETY * gamma2 * math.sqrt(eta / 2.0)
    binding["eps1"] = "eps1:strict"
    M1 = 1.0 / (4.0 * gamma0)
    cands = {"one": 1.0, "half-eps1": eps1 / 2.0, "F-well": math.sqrt(gamma0 * (1.0 - delta) * beta0**2 / (2.0 * M1))}
    binding["eps0_explicit"] = min(cands, key=cands.get)
    eps0 = cands[binding["eps0_explicit"]]

    return CertifiedConstants(
        lam=float(lam), mu1=mu1, mu2=mu2, mu3=mu3, lambda0=lam0, lambda2=lam2,
        a_half_e0=ah, a_e0=ae, delta=delta, gamma0=gamma0, gamma1=gamma1,
        Gamma1=Gamma1, Gamma2=Gamma2, beta0=beta0, eta=eta, x1=x1, x2=x2,
        gamma2=gamma2, eps1=eps1, eps0_explicit=eps0, sigma0=s0,
        M1=M1, M2=lam**2, M3=1.0 / gamma0, binding=binding,
    )


# --- energies ---------------------------------------------------------------


def _uv(state):
    return _rows(state.u), _rows(state.v)


def energy_AB(u, pair: MatrixPair, lam: float):
    """Potential part ``1/2|Bu|^2 - lam/2 |A^{1/2}u|^2 + 1/4 |A^{1/2}u|^4``."""
    a = pair.a_form(u)
    return 0.5 * pair.b_form(u) - 0.5 * lam * a + 0.25 * a * a


def energy_E(state, pair: MatrixPair, lam: float):
    u, v = _uv(state)
    return 0.5 * _dot(v, v) + energy_AB(u, pair, lam)


def energy_F(state, pair: MatrixPair, lam: float, mode: UnstableMode, consts: CertifiedConstants):
    u, v = _uv(state)
    _, Pu = operators_R_P(u, mode, consts.delta)
    g = consts.gamma0
    return energy_E(state, pair, lam) + 2.0 * g * _dot(Pu, v) + g * _dot(Pu, u)


def energy_S(state, pair: MatrixPair, lam: float, spectrum: GapSpectrum, consts: CertifiedConstants, sign: int):
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    u, v = _uv(state)
    d = u - sign * consts.sigma0 * spectrum.e1
    g = consts.gamma2
    return energy_E(state, pair, lam) + 0.25 * consts.sigma0**4 + 2.0 * g * _dot(d, v) + g * _dot(d, d)


def energy_F_plus(state, pair: MatrixPair, lam: float, mode: UnstableMode, consts: CertifiedConstants):
    """High-frequency energy of the component orthogonal to ``e0``."""
    u, v = _uv(state)
    up = split_H(u, mode).u_plus
    vp = split_H(v, mode).u_plus
    L = pair.stiffness(lam)
    ap = pair.a_form(up)
    g = consts.gamma1
    return (
        0.5 * _dot(vp, vp) + 0.5 * np.einsum("...i,ij,...j->...", up, L, up) + 0.25 * ap * ap
        + 2.0 * g * _dot(up, vp) + g * _dot(up, up)
    )


def F_bounds(state, pair: MatrixPair, lam: float, consts: CertifiedConstants):
    """Pointwise lower and upper envelopes of F."""
    u, v = _uv(state)
    vv = _dot(v, v)
    pot = energy_AB(u, pair, lam)
    lower = 0.25 * vv + pot
    upper = 0.75 * vv + pot + 2.0 * consts.gamma0 * (1.0 + consts.delta) * _dot(u, u)
    return lower, upper


def dF_exact(state, f_value, pair, lam, mode, consts):
    """Time derivative of F along the vector field (chain rule)."""
    u, v = _uv(state)
    acc = residual(pair, lam, u, v, f_value)
    _, Pu = operators_R_P(u, mode, consts.delta)
    _, Pv = operators_R_P(v, mode, consts.delta)
    g = consts.gamma0
    return _dot(v, acc) + _dE_potential(u, v, pair, lam) + 2.0 * g * (_dot(Pv, v) + _dot(Pu, acc) + _dot(Pu, v))


def _dE_potential(u, v, pair, lam):
    au = u @ pair.A
    return _dot(u @ pair.B2, v) - lam * _dot(au, v) + _dot(u, au) * _dot(au, v)


# --- monitor -----------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    t: float
    inequality: str
    excess: float  # lhs - rhs - allowance (> 0)


@dataclass
class EnergyReport:
    t: np.ndarray
    E: np.ndarray
    F: np.ndarray
    S_plus: np.ndarray
    S_minus: np.ndarray
    F_plus: np.ndarray
    alpha: np.ndarray
    normBw: np.ndarray
    u_minus: np.ndarray
    identity_rel_error: float
    identity_abs_error: float
    identity_bound: float
    violations: list = field(default_factory=list)
    checked: dict = field(default_factory=dict)
    constants: CertifiedConstants | None = None

    @property
    def n_violations(self) -> int:
        return len(self.violations)

    def counts(self):
        out = {k: 0 for k in self.checked}
        for v in self.violations:
            out[v.inequality] = out.get(v.inequality, 0) + 1
        return out

    def summary(self, tail_fraction=0.2):
        t0 = self.t[-1] - tail_fraction * (self.t[-1] - self.t[0])
        tail = self.t >= t0
        return {
            "samples": int(self.t.size),
            "violations": self.counts(),
            "checked": dict(self.checked),
            "n_violations": self.n_violations,
            "energy_identity_rel_error": self.identity_rel_error,
            "energy_identity_abs_error": self.identity_abs_error,
            "tail": {
                "E_max": float(self.E[tail].max()),
                "F_max": float(self.F[tail].max()),
                "alpha_min": float(self.alpha[tail].min()),
                "alpha_max": float(self.alpha[tail].max()),
            },
            "constants": None if self.constants is None else self.constants.to_dict(),
        }

    def write_csv(self, path):
        cols = ["t", "E", "F", "S_plus", "S_minus", "alpha", "normBw", "u_minus"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in zip(*(getattr(self, c) for c in cols)):
                w.writerow([f"{x:.17g}" for x in row])

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def _centered(y, dt):
    return (y[2:] - y[:-2]) / (2.0 * dt)


def monitor(
    traj: Trajectory,
    forcing: Forcing,
    pair: MatrixPair,
    lam: float,
    spectrum: GapSpectrum,
    mode: UnstableMode,
    consts: CertifiedConstants,
    slack: float = DEFAULT_SLACK,
) -> EnergyReport:
    """Evaluate every energy on the samples and check the certified inequalities.

    Time derivatives are centered differences of the sampled energies, so the
    check is independent of the stepping scheme.  Their truncation error is
    estimated from third differences and added to the allowance, together
    with the additive slack ``slack*(1 + |energy|)``.
    """
    t, U, V = traj.t, traj.u, traj.v
    if t.size < 5:
        raise StrideTooCoarse("need at least five samples to difference")
    dt = traj.stride
    n = pair.n
    fv = forcing(t, n)
    E = energy_E(traj, pair, lam)
    F = energy_F(traj, pair, lam, mode, consts)
    Sp = energy_S(traj, pair, lam, spectrum, consts, +1)
    Sm = energy_S(traj, pair, lam, spectrum, consts, -1)
    Fp = energy_F_plus(traj, pair, lam, mode, consts)
    ws = split_W(U, spectrum, pair)
    alpha = ws.alpha
    normBw = pair.b_norm(ws.w)
    u_minus = U @ mode.e0
    f2 = _dot(fv, fv)
    mid = slice(1, -1)

    def trunc(y):
        # |y'''| dt^2 / 6 from third differences, spread to neighbours
        d3 = np.abs(np.diff(y, 3)) / dt**3
        d3 = np.concatenate([d3[:1], d3, d3[-1:]])
        d3 = np.maximum(d3[:-1], d3[1:])
        return d3 * dt**2 / 6.0

    def noise(y):
        return 1e-12 * (1.0 + np.abs(y[mid])) / dt

    # (i) energy identity
    dE = _centered(E, dt)
    rhs_E = -_dot(V, V) + _dot(V, fv)
    res = np.abs(dE - rhs_E[mid])
    scale = float(np.max(np.abs(rhs_E[mid])))
    abs_err = float(res.max())
    rel_err = abs_err / scale if scale > 0 else (0.0 if abs_err == 0 else math.inf)
    bound = float(np.max(trunc(E) + noise(E)))
    bound += 10.0 * max(traj.tol if math.isfinite(traj.tol) else 0.0, 1e-12) * (1.0 + float(np.max(np.abs(E))))
    if abs_err > 10.0 * bound:
        raise StrideTooCoarse(
            f"energy identity residual {abs_err:.3e} exceeds ten times the expected {bound:.3e}; refine the stride"
        )

    violations = []
    checked = {}

    def check(name, lhs, rhs, allowance, mask=None):
        excess = lhs - rhs - allowance
        idx = np.arange(lhs.size) if mask is None else np.nonzero(mask)[0]
        checked[name] = int(idx.size)
        for i in idx[excess[idx] > 0]:
            violations.append(Violation(float(t[i] if lhs.size == t.size else t[1:-1][i]), name, float(excess[i])))

    # (ii) F' <= -4 gamma0 F + |f|^2
    dF = _centered(F, dt)
    check("F_decay", dF, -4.0 * consts.gamma0 * F[mid] + f2[mid], slack * (1.0 + np.abs(F[mid])) + trunc(F) + noise(F))
    # (iii) S' <= -2 gamma2^2 S + |f|^2 inside the wells
    g2 = consts.gamma2
    for name, S, gate in (("S_plus_well", Sp, alpha[mid] >= consts.x1), ("S_minus_well", Sm, alpha[mid] <= -consts.x1)):
        dS = _centered(S, dt)
        check(name, dS, -2.0 * g2**2 * S[mid] + f2[mid], slack * (1.0 + np.abs(S[mid])) + trunc(S) + noise(S), gate)
    # (iv) static lower bounds
    lower, _ = F_bounds(traj, pair, lam, consts)
    check("F_lower", lower, F, slack * (1.0 + np.abs(F)))
    eab = energy_AB(U, pair, lam)
    floor = -0.25 * consts.sigma0**4 * np.ones_like(eab)
    check("E_AB_lower", floor, eab, slack * (1.0 + np.abs(eab)))

    return EnergyReport(
        t=t, E=E, F=F, S_plus=Sp, S_minus=Sm, F_plus=Fp, alpha=alpha, normBw=normBw,
        u_minus=u_minus, identity_rel_error=rel_err, identity_abs_error=abs_err,
        identity_bound=bound, violations=violations, checked=checked, constants=consts,
    )


def sign_persistence(report: EnergyReport, consts: CertifiedConstants, forcing: Forcing):
    """Whether ``alpha`` keeps one sign after the first sample with ``E < -eta``.

    Returns ``None`` when the hypothesis is not met (forcing above ``eps1`` or
    the energy never drops below ``-eta``).
    """
    if forcing.bound > consts.eps1:
        return None
    below = np.nonzero(report.E < -consts.eta)[0]
    if below.size == 0:
        return None
    a = report.alpha[below[0]:]
    return bool(np.all(a > 0) or np.all(a < 0))


# --- split system ------------------------------------------------------------


@dataclass(frozen=True)
class PsiTerms:
    psi1: np.ndarray
    psi2: np.ndarray
    psi3: float | np.ndarray


def psi_diagnostics(state, f_value, pair: MatrixPair, mode: UnstableMode) -> PsiTerms:
    """Forcing terms of the equations for ``u_+`` (``psi1 + psi2``) and ``u_-`` (``psi3``)."""
    u = _rows(state.u)
    f = _rows(f_value) * np.ones_like(u)
    e0 = mode.e0
    h = split_H(u, mode)
    um_vec = np.multiply.outer(h.u_minus, e0)
    up = h.u_plus

    def plus(x):
        return x - np.multiply.outer(x @ e0, e0)

    Aum = um_vec @ pair.A
    Aup = up @ pair.A
    a_pp = _dot(up, Aup)
    a_mm = _dot(um_vec, Aum)
    a_pm = _dot(up, Aum)
    Aum_p, Aup_p = plus(Aum), plus(Aup)
    psi1 = (
        -a_pp[..., None] * Aum_p - 2.0 * a_pm[..., None] * Aum_p
        - 2.0 * a_pm[..., None] * Aup_p - a_mm[..., None] * Aup_p
    )
    psi2 = plus(f) - a_mm[..., None] * Aum_p
    Au = u @ pair.A
    psi3 = f @ e0 - _dot(u, Au) * (Au @ e0)
    return PsiTerms(psi1=psi1, psi2=psi2, psi3=psi3)


def split_defect(state, f_value, pair: MatrixPair, lam: float, mode: UnstableMode):
    """Relative defects of the two projected equations at one state.

    The acceleration comes from the full equation; the returned pair
    measures how well ``u_+`` and ``u_-`` satisfy their split equations.
    """
    u, v = _rows(state.u), _rows(state.v)
    acc = residual(pair, lam, u, v, f_value)
    psi = psi_diagnostics(state, f_value, pair, mode)
    e0 = mode.e0
    L = pair.stiffness(lam)
    hu, hv, ha = split_H(u, mode), split_H(v, mode), split_H(acc, mode)
    up = hu.u_plus
    Aup = pair.A @ up
    Aup_p = Aup - (Aup @ e0) * e0
    lhs_p = ha.u_plus + hv.u_plus + L @ up + (up @ Aup) * Aup_p
    rhs_p = psi.psi1 + psi.psi2
    scale_p = np.linalg.norm(L @ up) + np.linalg.norm(ha.u_plus) + np.linalg.norm(rhs_p) + 1.0
    lhs_m = ha.u_minus + hv.u_minus - mode.lambda0 * hu.u_minus
    scale_m = abs(ha.u_minus) + abs(mode.lambda0 * hu.u_minus) + abs(psi.psi3) + 1.0
    return float(np.linalg.norm(lhs_p - rhs_p) / scale_p), float(abs(lhs_m - psi.psi3) / scale_m)
