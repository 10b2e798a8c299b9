"""Clamped beam on (0, 1): exact spectrum of A^-1 B^2, finite differences, and
the explicit operators C ~ A^-1 B^2 and its inverse T.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.optimize import brentq
from scipy.sparse import diags

from .errors import GridTooCoarse
from .gap_pair import MatrixPair, validate_pair


@dataclass(frozen=True)
class CharRoots:
    """Positive roots of tan(a) = a, the k-th one inside (k*pi, (k+1/2)*pi)."""

    alphas: np.ndarray

    def __getitem__(self, k):
        """1-based access: ``roots[1]`` is the smallest root."""
        return float(self.alphas[k - 1])


def char_roots(k_max: int) -> CharRoots:
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    # sin(a) - a cos(a) has the same roots as tan(a) - a on these intervals and no poles
    g = lambda a: np.sin(a) - a * np.cos(a)
    roots = [
        brentq(g, k * np.pi, (k + 0.5) * np.pi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        for k in range(1, k_max + 1)
    ]
    return CharRoots(alphas=np.array(roots))


@dataclass(frozen=True)
class BeamMode:
    """Exact eigenpair of A^-1 B^2 for the clamped beam.

    ``trig`` modes are ``1 - cos(2 k pi x)``; ``mixed`` modes are
    ``a(1 - cos 2ax) + sin 2ax - 2ax`` with ``tan a = a``.  Both are scaled so
    that the integral of ``phi'^2`` is one.
    """

    kind: str
    k: int
    lam: float
    scale: float
    alpha: float

    def profile(self, x, derivative: int = 0):
        x = np.asarray(x, dtype=float)
        b = 2.0 * self.alpha  # spatial frequency; lam = b^2
        c, s = np.cos(b * x), np.sin(b * x)
        if self.kind == "trig":
            # 1 - cos(bx) and its derivatives
            table = {
                0: 1.0 - c,
                1: b * s,
                2: b**2 * c,
                3: -(b**3) * s,
                4: -(b**4) * c,
            }
        else:
            a = self.alpha
            table = {
                0: a * (1.0 - c) + s - b * x,
                1: a * b * s + b * c - b,
                2: a * b**2 * c - b**2 * s,
                3: -a * b**3 * s - b**3 * c,
                4: -a * b**4 * c + b**4 * s,
            }
        return self.scale * table[derivative]

    __call__ = profile


def _mode(kind, k, alpha):
    raw = BeamMode(kind=kind, k=k, lam=4.0 * alpha**2, scale=1.0, alpha=alpha)
    xg, wg = np.polynomial.legendre.leggauss(200)
    xg = 0.5 * (xg + 1.0)
    norm2 = 0.5 * np.sum(wg * raw.profile(xg, 1) ** 2)
    return BeamMode(kind=kind, k=k, lam=raw.lam, scale=1.0 / np.sqrt(norm2), alpha=alpha)


def beam_modes(k_max: int) -> list[BeamMode]:
    """Both eigenvalue families up to index ``k_max``, merged in ascending order."""
    roots = char_roots(k_max)
    modes = [_mode("trig", k, k * np.pi) for k in range(1, k_max + 1)]
    modes += [_mode("mixed", k, roots[k]) for k in range(1, k_max + 1)]
    return sorted(modes, key=lambda m: m.lam)


def beam_eigenvalues(k_max: int):
    """Ascending list of ``(lam, kind, k)``."""
    return [(m.lam, m.kind, m.k) for m in beam_modes(k_max)]


def assemble_fd(n: int) -> MatrixPair:
    """Second-order finite differences on ``n`` interior nodes, h = 1/(n+1).

    Clamped ends enter through ghost nodes reflected about ``u'(0) = u'(1) = 0``,
    which turns the corner entries of the fourth-difference matrix into 7.
    """
    if n < 8:
        raise GridTooCoarse(f"need n >= 8 interior nodes, got {n}")
    h = 1.0 / (n + 1)
    A = diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n)).toarray() / h**2
    B2 = diags([1.0, -4.0, 6.0, -4.0, 1.0], [-2, -1, 0, 1, 2], shape=(n, n)).toarray()
    B2[0, 0] = B2[-1, -1] = 7.0
    return validate_pair(A, B2 / h**4)


def fd_nodes(n: int):
    return np.arange(1, n + 1) / (n + 1)


def fd_sample(mode: BeamMode, n: int):
    """Restrict an exact mode to the interior nodes, scaled so that ``e^T A e = 1``."""
    pair = assemble_fd(n)
    v = mode.profile(fd_nodes(n))
    return v / np.sqrt(pair.a_form(v))


def richardson_limit(hs, values):
    """Extrapolate ``values(h) = L + c2 h^2 + c4 h^4 + ...`` to h = 0."""
    hs = np.asarray(hs, dtype=float)
    V = np.vander(hs**2, len(hs), increasing=True)
    return float(np.linalg.solve(V, np.asarray(values, dtype=float))[0])


# --- integral operators on a uniform grid of [0, 1] -------------------------


def uniform_grid(m: int):
    """``m`` uniform nodes including both endpoints (``m`` odd keeps Simpson exact)."""
    return np.linspace(0.0, 1.0, m)


def apply_C(x, u_xx):
    """``[Cu](x) = -u''(x) + u''(0) + (u''(1) - u''(0)) x``.

    ``u_xx`` holds second-derivative samples on ``x``, endpoints included.
    """
    x = np.asarray(x, dtype=float)
    u_xx = np.asarray(u_xx, dtype=float)
    return -u_xx + u_xx[0] + (u_xx[-1] - u_xx[0]) * x


def apply_C_derivative(x, u_xx, u_xxx):
    """``(Cu)'(x) = -u'''(x) + u''(1) - u''(0)``."""
    u_xx = np.asarray(u_xx, dtype=float)
    return -np.asarray(u_xxx, dtype=float) + (u_xx[-1] - u_xx[0])


@dataclass(frozen=True)
class ClampedSolution:
    """``u = T f`` on a grid with its first two derivatives."""

    x: np.ndarray
    u: np.ndarray
    u_x: np.ndarray
    u_xx: np.ndarray


def _cumint(x, y):
    return cumulative_simpson(y, x=x, initial=0.0)


def apply_T(x, f) -> ClampedSolution:
    """Solve ``C u = f`` with ``u(0) = u(1) = u'(0) = u'(1) = 0``.

    With ``F = int_0^x f`` and ``G = int_0^x F`` (composite Simpson)::

        u = -G + (3 G(1) - F(1)) x^2 + (F(1) - 2 G(1)) x^3
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    F = _cumint(x, f)
    G = _cumint(x, F)
    c2 = 3.0 * G[-1] - F[-1]
    c3 = F[-1] - 2.0 * G[-1]
    u = -G + c2 * x**2 + c3 * x**3
    u_x = -F + 2.0 * c2 * x + 3.0 * c3 * x**2
    u_xx = -f + 2.0 * c2 + 6.0 * c3 * x
    return ClampedSolution(x=x, u=u, u_x=u_x, u_xx=u_xx)


def write_modes_csv(path, modes, nodes):
    """Eigen table: kind, k, lambda, then the profile sampled on ``nodes``."""
    nodes = np.asarray(nodes, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "k", "lambda"] + [f"phi({x:.17g})" for x in nodes])
        for m in modes:
            w.writerow([m.kind, m.k, f"{m.lam:.17g}"] + [f"{v:.17g}" for v in m.profile(nodes)])
