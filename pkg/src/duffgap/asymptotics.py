"""Finite-horizon surrogates for the long-time statements.

Every ``limsup`` is replaced by a maximum over the final ``tail_fraction``
of the sampled horizon.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .dynamics import Forcing, State, Trajectory, integrate
from .errors import HorizonTooShort, UnboundedSolution
from .gap_pair import GapSpectrum, MatrixPair

TAIL_FRACTION = 0.2
MIN_TAIL_SAMPLES = 100
AMBIGUITY_MARGIN = 0.5


@dataclass(frozen=True)
class BasinLabel:
    """``sigma`` is the argmin candidate; ``margin`` is best over second best."""

    sigma: float
    tail_metric: float
    margin: float
    sigma0: float
    metrics: tuple = ()  # tail metrics for (-sigma0, 0, +sigma0)

    @property
    def resolved(self) -> bool:
        return self.margin <= AMBIGUITY_MARGIN

    @property
    def sign(self) -> int:
        return 0 if self.sigma == 0 else (1 if self.sigma > 0 else -1)

    @property
    def name(self) -> str:
        if not self.resolved:
            return "UNRESOLVED"
        return {1: "+sigma0", 0: "0", -1: "-sigma0"}[self.sign]


def _tail(traj: Trajectory, tail_fraction):
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    sl = traj.tail(tail_fraction)
    count = traj.t[sl].size
    if count < MIN_TAIL_SAMPLES:
        raise HorizonTooShort(f"tail holds {count} samples; need at least {MIN_TAIL_SAMPLES}")
    return sl


def tail_metric_series(traj: Trajectory, pair: MatrixPair, spectrum: GapSpectrum, sigma: float):
    """``|u'| + |B(u - sigma e1)|`` at every sample."""
    d = traj.u - sigma * spectrum.e1
    return np.linalg.norm(traj.v, axis=1) + pair.b_norm(d)


def classify(
    traj: Trajectory,
    pair: MatrixPair,
    spectrum: GapSpectrum,
    lam: float,
    tail_fraction: float = TAIL_FRACTION,
) -> BasinLabel:
    sl = _tail(traj, tail_fraction)
    s0 = math.sqrt(lam - spectrum.lambda1)
    cands = (-s0, 0.0, s0)
    sub = Trajectory(t=traj.t[sl], u=traj.u[sl], v=traj.v[sl])
    metrics = tuple(float(tail_metric_series(sub, pair, spectrum, s).max()) for s in cands)
    order = np.argsort(metrics, kind="stable")
    best, second = metrics[order[0]], metrics[order[1]]
    margin = best / second if second > 0 else (0.0 if best == 0 else 1.0)
    return BasinLabel(sigma=cands[order[0]], tail_metric=best, margin=margin, sigma0=s0, metrics=metrics)


# --- forcing response --------------------------------------------------------


@dataclass(frozen=True)
class ResponseRow:
    eps: float
    sigma: float
    tail_metric: float
    ratio: float


@dataclass
class ResponseTable:
    rows: list
    spread: float  # max ratio / min ratio over eps > 0
    above_eps0: bool

    @property
    def stable(self) -> bool:
        return self.spread <= 2.0


def forcing_response_ratio(
    pair: MatrixPair,
    spectrum: GapSpectrum,
    lam: float,
    eps_list,
    s0: State,
    shape,
    T: float,
    kind: str = "sinusoidal",
    omega: float = 1.0,
    rate: float = 1.0,
    tol: float = 1e-9,
    stride: float = 0.01,
    tail_fraction: float = TAIL_FRACTION,
    eps0: float | None = None,
) -> ResponseTable:
    """Run identical initial data under forcing of amplitude ``eps`` and tabulate
    ``tail_metric / eps``; the ratio settling to a constant is the empirical M0.
    """
    eps_list = [float(e) for e in eps_list]
    if any(e < 0 for e in eps_list) or any(a < b for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps values must be nonnegative and descending")
    rows = []
    for eps in eps_list:
        f = Forcing("zero") if eps == 0 else Forcing(kind, eps, np.asarray(shape, float), rate=rate, omega=omega)
        traj = integrate(pair, lam, f, s0, T, tol=tol, stride=stride)
        lab = classify(traj, pair, spectrum, lam, tail_fraction)
        ratio = lab.tail_metric / eps if eps > 0 else math.nan
        rows.append(ResponseRow(eps, lab.sigma, lab.tail_metric, ratio))
    ratios = [r.ratio for r in rows if r.eps > 0]
    spread = max(ratios) / min(ratios) if ratios and min(ratios) > 0 else math.inf
    if not ratios:
        spread = 1.0
    above = eps0 is not None and any(e > eps0 for e in eps_list)
    return ResponseTable(rows=rows, spread=spread, above_eps0=above)


# --- scalar lemma ------------------------------------------------------------


@dataclass(frozen=True)
class ScalarLemmaReport:
    m: float
    tail_y: float
    tail_dy: float
    tail_psi: float
    bound_y: float
    bound_dy: float
    t: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    dy: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.tail_y <= self.bound_y and self.tail_dy <= self.bound_dy


def _psi_function(psi):
    if callable(psi):
        return psi
    kind = psi.get("kind", "zero")
    if kind == "zero":
        return lambda t: 0.0 * t
    if kind == "constant":
        c = float(psi["value"])
        return lambda t: c + 0.0 * t
    if kind == "sin":
        a, w = float(psi.get("amplitude", 1.0)), float(psi.get("omega", 1.0))
        return lambda t: a * np.sin(w * t)
    raise ValueError(f"unknown psi scenario {kind!r}")


def scalar_lemma_check(
    m: float,
    psi,
    horizon: float,
    y0: float = 0.0,
    mode: str = "dichotomy",
    dy0: float | None = None,
    tail_fraction: float = TAIL_FRACTION,
    samples: int = 4001,
    slack: float = 0.05,
) -> ScalarLemmaReport:
    """Bounded solution of ``y'' + y' - m y = psi`` and its tail bounds.

    ``dichotomy``: with roots ``r- < 0 < r+`` of ``r^2 + r - m``, the
    coordinates ``p = y' - r- y`` and ``q = y' - r+ y`` obey ``p' = r+ p + psi``
    and ``q' = r- q + psi``.  ``q`` starts from the stable-manifold value for
    ``y0``; ``p`` is integrated backwards from a padded horizon with ``p = 0``,
    which selects the unique solution that stays bounded.

    ``forward``: plain integration from ``(y0, dy0)``; escape raises
    ``UnboundedSolution``.
    """
    if not m > 0:
        raise ValueError("m must be positive")
    f = _psi_function(psi)
    disc = math.sqrt(1.0 + 4.0 * m)
    rp, rm = 0.5 * (-1.0 + disc), 0.5 * (-1.0 - disc)
    t = np.linspace(0.0, horizon, samples)
    opts = dict(method="DOP853", rtol=1e-11, atol=1e-13, dense_output=True)
    if mode == "dichotomy":
        pad = 40.0 / rp
        back = solve_ivp(lambda s, p: rp * p + f(s), (horizon + pad, 0.0), [0.0], **opts)
        p = back.sol(t)[0]
        q0 = p[0] - (rp - rm) * y0
        fwd = solve_ivp(lambda s, q: rm * q + f(s), (0.0, horizon), [q0], **opts)
        q = fwd.sol(t)[0]
        y = (p - q) / (rp - rm)
        dy = (rp * p - rm * q) / (rp - rm)
    elif mode == "forward":
        dy0 = rm * y0 if dy0 is None else dy0
        sol = solve_ivp(lambda s, z: [z[1], f(s) - z[1] + m * z[0]], (0.0, horizon), [y0, dy0], **opts)
        y, dy = sol.sol(t)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    tail = t >= horizon * (1.0 - tail_fraction)
    psi_t = np.abs(f(t[tail]))
    tail_psi = float(psi_t.max()) if psi_t.size else 0.0
    tail_y = float(np.abs(y[tail]).max())
    tail_dy = float(np.abs(dy[tail]).max())
    floor = 1e-9 * (1.0 + abs(y0))  # ODE solver noise
    if mode == "forward" and tail_y > 1e6 * (1.0 + tail_psi / m + abs(y0)):
        raise UnboundedSolution(f"|y| reached {tail_y:.3e}; the data are off the stable manifold")
    return ScalarLemmaReport(
        m=m, tail_y=tail_y, tail_dy=tail_dy, tail_psi=tail_psi,
        bound_y=tail_psi / m * (1.0 + slack) + floor, bound_dy=2.0 * tail_psi * (1.0 + slack) + floor,
        t=t, y=y, dy=dy,
    )


# --- ultimate bound ------------------------------------------------------------


@dataclass(frozen=True)
class UltimateBoundReport:
    tail_value: float
    bound: float
    tail_forcing: float

    @property
    def passed(self) -> bool:
        return self.tail_value <= self.bound


def ultimate_bound_check(
    traj: Trajectory, pair: MatrixPair, consts, forcing: Forcing,
    tail_fraction: float = TAIL_FRACTION, slack: float = 0.05,
) -> UltimateBoundReport:
    """Tail of ``|u'|^2 + |Bu|^2`` against ``(M2 + M3 sup|f|^2)(1 + slack)``."""
    span = traj.t[-1] - traj.t[0]
    # samples stop at the last whole stride, so allow one stride of shortfall
    if span + traj.stride < 10.0 / consts.gamma0 * (1.0 - 1e-9):
        raise HorizonTooShort(f"horizon {span:.6g} is shorter than 10/gamma0 = {10.0 / consts.gamma0:.6g}")
    sl = _tail(traj, tail_fraction)
    val = np.einsum("ij,ij->i", traj.v[sl], traj.v[sl]) + pair.b_form(traj.u[sl])
    fmax = float(forcing.norm(traj.t[sl]).max())
    return UltimateBoundReport(
        tail_value=float(val.max()), bound=(consts.M2 + consts.M3 * fmax**2) * (1.0 + slack), tail_forcing=fmax
    )


# --- random initial data and basin sweeps ------------------------------------


@dataclass(frozen=True)
class InitialDatum:
    seed: int
    u_coeffs: np.ndarray
    v_coeffs: np.ndarray
    state: State

    @property
    def descriptor(self) -> str:
        c = ";".join(f"{x:.17g}" for x in self.u_coeffs)
        d = ";".join(f"{x:.17g}" for x in self.v_coeffs)
        return f"u[{c}] v[{d}]"


def _ball(rng, dim, radius):
    g = rng.standard_normal(dim)
    g /= np.linalg.norm(g)
    return radius * rng.uniform() ** (1.0 / dim) * g


def random_initial_state(
    spectrum: GapSpectrum, seed: int, radius: float = 3.0, velocity_radius: float | None = None,
    modes: int | None = None, flip: bool = False,
) -> InitialDatum:
    """Coefficients uniform in a ball in the span of the first ``modes`` pencil
    eigenvectors (A-orthonormal), for position and velocity separately.
    ``flip`` negates both, for odd-symmetry checks.
    """
    k = spectrum.vectors.shape[1] if modes is None else int(modes)
    if not 1 <= k <= spectrum.vectors.shape[1]:
        raise ValueError(f"modes must lie in [1, {spectrum.vectors.shape[1]}]")
    rng = np.random.default_rng(seed)
    cu = _ball(rng, k, radius)
    cv = _ball(rng, k, radius if velocity_radius is None else velocity_radius)
    if flip:
        cu, cv = -cu, -cv
    E = spectrum.vectors[:, :k]
    return InitialDatum(seed=seed, u_coeffs=cu, v_coeffs=cv, state=State(0.0, E @ cu, E @ cv))


@dataclass(frozen=True)
class SweepRow:
    index: int
    seed: int
    descriptor: str
    label: str
    sigma: float
    tail_metric: float
    margin: float
    error: str = ""


def _run_row(args):
    index, datum, pair, lam, spectrum, forcing, T, tol, stride, tail_fraction = args
    try:
        traj = integrate(pair, lam, forcing, datum.state, T, tol=tol, stride=stride)
        lab = classify(traj, pair, spectrum, lam, tail_fraction)
        return SweepRow(index, datum.seed, datum.descriptor, lab.name, lab.sigma, lab.tail_metric, lab.margin)
    except Exception as exc:  # recorded per row; the sweep continues
        return SweepRow(index, datum.seed, datum.descriptor, "ERROR", math.nan, math.nan, math.nan, f"{type(exc).__name__}: {exc}")


def basin_sweep(
    pair: MatrixPair, lam: float, spectrum: GapSpectrum, forcing: Forcing, data, T: float,
    tol: float = 1e-6, stride: float = 0.01, tail_fraction: float = TAIL_FRACTION, workers: int = 1,
):
    """Classify every initial datum; rows come back in input order."""
    jobs = [(i, d, pair, lam, spectrum, forcing, T, tol, stride, tail_fraction) for i, d in enumerate(data)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_run_row, jobs))
    else:
        rows = [_run_row(j) for j in jobs]
    return sorted(rows, key=lambda r: r.index)


SWEEP_COLUMNS = ("seed", "u0_descriptor", "sigma", "label", "tail_metric", "margin", "error")


def write_sweep_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([r.seed, r.descriptor, f"{r.sigma:.17g}", r.label, f"{r.tail_metric:.17g}", f"{r.margin:.17g}", r.error])


def sweep_summary(rows, forcing: Forcing | None = None):
    counts = {}
    for r in rows:
        counts[r.label] = counts.get(r.label, 0) + 1
    ok = [r for r in rows if not r.error]
    eps = 0.0 if forcing is None else forcing.bound
    return {
        "rows": len(rows),
        "counts": dict(sorted(counts.items())),
        "max_tail_metric": max((r.tail_metric for r in ok), default=None),
        "empirical_M0": (max(r.tail_metric for r in ok) / eps) if ok and eps > 0 else None,
    }


def write_sweep_json(path, rows, forcing: Forcing | None = None):
    with open(path, "w") as fh:
        json.dump(sweep_summary(rows, forcing), fh, indent=2, sort_keys=True)
