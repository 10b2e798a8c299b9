"""Finite-dimensional operator pairs (A, B2) with a spectral gap.

All inner products are Euclidean on R^n.  ``B`` is never formed; every
``|Bu|`` is evaluated as ``sqrt(u @ B2 @ u)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .errors import (
    DegenerateGap,
    LambdaOutOfGap,
    NearSingular,
    NotPositive,
    NotSymmetric,
)

SYMMETRY_RTOL = 1e-12
GAP_RTOL = 1e-8
INERTIA_RTOL = 1e-10
MU3_SAFETY = 0.999


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _fix_sign(vec):
    """Flip ``vec`` so that its largest-magnitude entry is positive."""
    i = int(np.argmax(np.abs(vec)))
    return -vec if vec[i] < 0 else vec


def generalized_eigh(K, M):
    """Eigenpairs of the symmetric-definite pencil ``K e = lam M e``.

    Cholesky reduction ``M = L L^T`` turns the pencil into the standard
    symmetric problem ``L^-1 K L^-T y = lam y``; back-substitution
    ``e = L^-T y`` yields M-orthonormal eigenvectors (columns).
    """
    L = cholesky(M, lower=True)
    X = solve_triangular(L, K, lower=True)
    C = solve_triangular(L, X.T, lower=True)
    C = 0.5 * (C + C.T)
    lams, Y = np.linalg.eigh(C)
    E = solve_triangular(L, Y, lower=True, trans="T")
    return lams, E


@dataclass(frozen=True)
class MatrixPair:
    """Symmetric positive-definite matrices standing for A and B^2."""

    A: np.ndarray
    B2: np.ndarray
    mu1: float
    mu2: float

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def a_form(self, u, w=None):
        """``<A u, w>``; with one argument this is ``|A^{1/2} u|^2``."""
        u = np.asarray(u)
        w = u if w is None else np.asarray(w)
        return np.einsum("...i,ij,...j->...", u, self.A, w)

    def b_form(self, u, w=None):
        """``<B2 u, w>``; with one argument this is ``|B u|^2``."""
        u = np.asarray(u)
        w = u if w is None else np.asarray(w)
        return np.einsum("...i,ij,...j->...", u, self.B2, w)

    def b_norm(self, u):
        return np.sqrt(np.maximum(self.b_form(u), 0.0))

    def stiffness(self, lam):
        """The symmetric matrix ``B2 - lam*A``."""
        return self.B2 - lam * self.A


def _check_symmetric(M, name):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {M.shape}")
    scale = np.max(np.abs(M))
    if scale == 0.0:
        raise NotPositive(f"{name} is the zero matrix")
    asym = np.max(np.abs(M - M.T))
    if asym > SYMMETRY_RTOL * scale:
        raise NotSymmetric(f"{name} asymmetry {asym:.3e} exceeds {SYMMETRY_RTOL:g} relative")
    return 0.5 * (M + M.T)


def validate_pair(A, B2) -> MatrixPair:
    """Check symmetry and positivity and compute the coercivity constants.

    ``mu1`` is the smallest eigenvalue of the pencil ``(B2, A^2)`` and ``mu2``
    the smallest eigenvalue of ``A``.
    """
    A = _check_symmetric(A, "A")
    B2 = _check_symmetric(B2, "B2")
    if A.shape != B2.shape:
        raise ValueError(f"A{A.shape} and B2{B2.shape} differ in shape")
    if A.shape[0] < 2:
        raise ValueError("dimension must be at least 2")
    eig_a = np.linalg.eigvalsh(A)
    eig_b = np.linalg.eigvalsh(B2)
    if eig_a[0] <= 0.0:
        raise NotPositive(f"A has nonpositive eigenvalue {eig_a[0]:.3e}")
    if eig_b[0] <= 0.0:
        raise NotPositive(f"B2 has nonpositive eigenvalue {eig_b[0]:.3e}")
    A2 = A @ A
    mu1 = generalized_eigh(B2, 0.5 * (A2 + A2.T))[0][0]
    return MatrixPair(A=_frozen(A), B2=_frozen(B2), mu1=float(mu1), mu2=float(eig_a[0]))


@dataclass(frozen=True)
class GapSpectrum:
    """Leading generalized eigenpairs of ``B2 e = lam A e`` with ``e^T A e = 1``."""

    lambdas: np.ndarray
    vectors: np.ndarray  # columns
    simple_gap: bool

    @property
    def lambda1(self) -> float:
        return float(self.lambdas[0])

    @property
    def lambda2(self) -> float:
        return float(self.lambdas[1])

    @property
    def e1(self) -> np.ndarray:
        return self.vectors[:, 0]

    def contains(self, lam) -> bool:
        return self.lambda1 < lam < self.lambda2


def gap_spectrum(pair: MatrixPair, k: int | None = None, strict: bool = True) -> GapSpectrum:
    """First ``k`` generalized eigenpairs (at least two are always kept).

    With ``strict`` a multiple smallest eigenvalue raises ``DegenerateGap``;
    otherwise it is only reported through ``simple_gap``.
    """
    n = pair.n
    k = n if k is None else int(k)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    lams, E = generalized_eigh(pair.B2, pair.A)
    simple = bool(lams[1] - lams[0] > GAP_RTOL * abs(lams[0]))
    if strict and not simple:
        raise DegenerateGap(
            f"lambda1={lams[0]:.12g} and lambda2={lams[1]:.12g} coincide to {GAP_RTOL:g}"
        )
    keep = max(k, 2)
    E = np.column_stack([_fix_sign(E[:, j]) for j in range(keep)])
    return GapSpectrum(lambdas=_frozen(lams[:keep]), vectors=_frozen(E), simple_gap=simple)


def inertia_index(pair: MatrixPair, lam: float) -> int:
    """Number of negative eigenvalues of ``B2 - lam*A``."""
    w = np.linalg.eigvalsh(pair.stiffness(lam))
    tol = INERTIA_RTOL * np.linalg.norm(pair.B2, 2)
    if np.any(np.abs(w) <= tol):
        raise NearSingular(f"B2 - {lam!r}*A has an eigenvalue within {tol:.3e} of zero")
    return int(np.count_nonzero(w < -tol))


def _require_gap(spectrum: GapSpectrum, lam):
    if not spectrum.contains(lam):
        raise LambdaOutOfGap(lam, spectrum.lambda1, spectrum.lambda2)


def _householder_complement(e0):
    """Orthonormal basis (columns) of the complement of the unit vector ``e0``."""
    n = e0.size
    v = e0.copy()
    s = 1.0 if e0[0] >= 0 else -1.0
    v[0] += s
    H = np.eye(n) - 2.0 * np.outer(v, v) / (v @ v)
    return H[:, 1:]


@dataclass(frozen=True)
class UnstableMode:
    """The negative direction of ``B2 - lam*A`` for lam in the gap."""

    lam: float
    lambda0: float
    e0: np.ndarray
    mu3_exact: float
    mu3_certified: float
    sigma0: float
    a_half_e0: float = field(default=0.0)  # |A^{1/2} e0|
    a_e0: float = field(default=0.0)  # |A e0|


def mu3_bound(lam, lambda0, lambda2, a_half_e0_sq):
    """Constructive lower bound for mu3 (without the strictness factor)."""
    return min((lambda2 - lam) / (lambda2 + lam), lambda0 / (2.0 * lam * a_half_e0_sq + lambda0))


def unstable_mode(pair: MatrixPair, spectrum: GapSpectrum, lam: float) -> UnstableMode:
    _require_gap(spectrum, lam)
    K = pair.stiffness(lam)
    w, V = np.linalg.eigh(K)
    lambda0 = -float(w[0])
    e0 = _fix_sign(V[:, 0] / np.linalg.norm(V[:, 0]))

    # exact constrained minimum of u^T K u / u^T B2 u over u orthogonal to e0
    Z = _householder_complement(e0)
    Kz = Z.T @ K @ Z
    Bz = Z.T @ pair.B2 @ Z
    mu3_exact = float(generalized_eigh(0.5 * (Kz + Kz.T), 0.5 * (Bz + Bz.T))[0][0])

    a_half_sq = float(pair.a_form(e0))
    mu3_certified = MU3_SAFETY * mu3_bound(lam, lambda0, spectrum.lambda2, a_half_sq)
    return UnstableMode(
        lam=float(lam),
        lambda0=lambda0,
        e0=_frozen(e0),
        mu3_exact=mu3_exact,
        mu3_certified=float(mu3_certified),
        sigma0=float(np.sqrt(lam - spectrum.lambda1)),
        a_half_e0=float(np.sqrt(a_half_sq)),
        a_e0=float(np.linalg.norm(pair.A @ e0)),
    )


@dataclass(frozen=True)
class WSplit:
    alpha: float | np.ndarray
    w: np.ndarray


@dataclass(frozen=True)
class HSplit:
    u_minus: float | np.ndarray
    u_plus: np.ndarray


def split_W(u, spectrum: GapSpectrum, pair: MatrixPair) -> WSplit:
    """``u = alpha*e1 + w`` with ``<w, A e1> = 0``; rows of a 2-D ``u`` are split."""
    u = np.asarray(u, dtype=float)
    ae1 = pair.A @ spectrum.e1
    alpha = u @ ae1
    w = u - np.multiply.outer(alpha, spectrum.e1)
    return WSplit(alpha=alpha, w=w)


def split_H(u, mode: UnstableMode) -> HSplit:
    """Orthogonal split ``u = u_minus*e0 + u_plus``."""
    u = np.asarray(u, dtype=float)
    um = u @ mode.e0
    return HSplit(u_minus=um, u_plus=u - np.multiply.outer(um, mode.e0))


def stationary_points(pair: MatrixPair, spectrum: GapSpectrum, lam: float):
    """The three equilibria ``[0, +sigma0*e1, -sigma0*e1]`` of the unforced equation."""
    _require_gap(spectrum, lam)
    s0 = np.sqrt(lam - spectrum.lambda1)
    e1 = spectrum.e1
    return [np.zeros(pair.n), s0 * e1, -s0 * e1]


def stationary_residual(pair: MatrixPair, lam: float, u):
    """``B2 u - lam A u + (u^T A u) A u``."""
    u = np.asarray(u, dtype=float)
    au = pair.A @ u
    return pair.B2 @ u - lam * au + (u @ au) * au


def diag_pair():
    """The two-dimensional pair A = diag(1, 2), B2 = diag(1, 8) used throughout the tests."""
    return validate_pair(np.diag([1.0, 2.0]), np.diag([1.0, 8.0]))
