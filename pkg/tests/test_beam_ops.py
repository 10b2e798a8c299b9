import math

import numpy as np
import pytest
from numpy.polynomial import Polynomial
from scipy.integrate import simpson, trapezoid
from scipy.optimize import bisect

from duffgap.beam_ops import (
    apply_C, apply_C_derivative, apply_T, assemble_fd, beam_eigenvalues, beam_modes, char_roots,
    fd_nodes, fd_sample, richardson_limit, uniform_grid, write_modes_csv,
)
from duffgap.errors import GridTooCoarse
from duffgap.gap_pair import gap_spectrum

X = uniform_grid(1025)


def _tan_root(k):
    return bisect(lambda a: math.tan(a) - a, k * math.pi + 1e-6, (k + 0.5) * math.pi - 1e-6, xtol=1e-15)


def test_first_roots():
    r = char_roots(2)
    assert abs(r[1] - 4.493409457909064) <= 1e-9
    assert abs(r[2] - 7.725251836937707) <= 1e-9
    assert abs(r[1] - _tan_root(1)) <= 1e-12


def test_roots_bracketed_and_approach_asymptote():
    r = char_roots(200)
    gaps = []
    for k in range(1, 201):
        assert k * math.pi < r[k] < (k + 0.5) * math.pi
        gaps.append((k + 0.5) * math.pi - r[k])
    assert np.all(np.diff(gaps) < 0)
    for k in (1, 5, 30):
        assert r[k] == pytest.approx(_tan_root(k), abs=1e-12)


def test_beam_eigenvalue_order():
    ev = beam_eigenvalues(3)
    assert ev[0][0] == pytest.approx(4 * math.pi**2) and ev[0][1] == "trig"
    assert ev[1][0] == pytest.approx(80.7629, abs=1e-3) and ev[1][1] == "mixed"
    assert ev[2][0] == pytest.approx(16 * math.pi**2) and ev[2][1] == "trig"
    assert ev[2][0] < ev[3][0] == pytest.approx(238.72, abs=1e-2)
    assert [e[0] for e in ev] == sorted(e[0] for e in ev)


def test_mode_boundary_and_equation():
    x = np.linspace(0, 1, 401)
    for m in beam_modes(3):
        assert abs(m.profile(0.0)) < 1e-12 and abs(m.profile(1.0)) < 1e-11
        assert abs(m.profile(0.0, 1)) < 1e-12 and abs(m.profile(1.0, 1)) < 1e-10
        # u'''' = -lam u'' for the pencil (B^2, A) with A = -d2/dx2
        assert m.profile(x, 4) == pytest.approx(-m.lam * m.profile(x, 2), abs=1e-9 * m.lam**2)
        assert trapezoid(m.profile(X, 1) ** 2, X) == pytest.approx(1.0, rel=1e-6)


def test_first_mode_closed_form():
    m = beam_modes(1)[0]
    x = np.linspace(0, 1, 50)
    assert m.profile(x) == pytest.approx((1 - np.cos(2 * math.pi * x)) / (math.pi * math.sqrt(2)), abs=1e-14)


def test_mixed_orthogonal_to_trig():
    modes = beam_modes(3)
    trig = [m for m in modes if m.kind == "trig"]
    mixed = [m for m in modes if m.kind == "mixed"]
    for a in trig:
        for b in mixed:
            assert abs(simpson(a.profile(X, 1) * b.profile(X, 1), x=X)) < 1e-9


def test_fd_small_grid():
    p = assemble_fd(8)
    assert np.allclose(p.B2, p.B2.T)
    assert np.linalg.eigvalsh(p.B2).min() > 0
    h = 1 / 9
    assert p.B2[0, 0] * h**4 == pytest.approx(7.0)
    assert p.B2[1, 1] * h**4 == pytest.approx(6.0)
    with pytest.raises(GridTooCoarse):
        assemble_fd(7)


def test_fd_order_two():
    target = 4 * math.pi**2
    errs = [abs(gap_spectrum(assemble_fd(n), k=2).lambda1 - target) for n in (64, 128, 256)]
    r1, r2 = errs[0] / errs[1], errs[1] / errs[2]
    assert 3.5 < r1 < 4.5 and 3.5 < r2 < 4.5


def test_fd_first_four_at_256():
    sp = gap_spectrum(assemble_fd(256), k=4)
    exact = [e[0] for e in beam_eigenvalues(2)]
    assert np.max(np.abs(sp.lambdas / exact - 1)) < 0.01


def test_fd_eigenvector_matches_exact_mode():
    n = 128
    p = assemble_fd(n)
    sp = gap_spectrum(p, k=2)
    ref = fd_sample(beam_modes(1)[0], n)
    assert p.a_form(ref) == pytest.approx(1.0)
    assert np.linalg.norm(sp.e1 - ref) / np.linalg.norm(ref) < 1e-2


def test_richardson_on_quadratic_model():
    hs = [0.1, 0.05, 0.025]
    vals = [3.0 + 2 * h**2 - 5 * h**4 for h in hs]
    assert richardson_limit(hs, vals) == pytest.approx(3.0, abs=1e-12)


def test_C_on_polynomial():
    # u = x^2 (1-x)^2, u'' = 2 - 12x + 12x^2, Cu = 12x - 12x^2
    x = np.linspace(0, 1, 11)
    u_xx = 2 - 12 * x + 12 * x**2
    assert apply_C(x, u_xx) == pytest.approx(12 * x - 12 * x**2, abs=1e-13)
    assert np.all(apply_C(x, np.zeros_like(x)) == 0)


def test_T_closed_form_sine():
    f = np.sin(math.pi * X)
    sol = apply_T(X, f)
    exact = -X / math.pi + np.sin(math.pi * X) / math.pi**2 + X**2 / math.pi
    assert np.abs(sol.u - exact).max() < 1e-10
    err = math.sqrt(simpson((apply_C(X, sol.u_xx) - f) ** 2, x=X))
    assert err <= 1e-10


def test_T_of_zero():
    sol = apply_T(X, np.zeros_like(X))
    assert np.all(sol.u == 0)


def _sine_series(rng, kmax=8):
    k = np.arange(1, kmax + 1)
    c = rng.standard_normal(kmax) / k**2
    return k, c


def _T_sine_series(x, k, c):
    """Closed-form clamped solution of -u'' + a + b x = sum c_k sin(k pi x)."""
    w = k * math.pi
    s = np.sin(np.multiply.outer(x, w)) @ (c / w**2)
    d = -np.sum(c / w)  # u'(0) = 0
    # remaining a x^2/2 + b x^3/6 fixed by u(1) = u'(1) = 0
    s1 = np.sum(c * np.sin(w) / w**2) + d
    ds1 = np.sum(c * np.cos(w) / w) + d
    M = np.array([[0.5, 1 / 6], [1.0, 0.5]])
    a, b = np.linalg.solve(M, [-s1, -ds1])
    return s + d * x + a * x**2 / 2 + b * x**3 / 6


@pytest.mark.parametrize("m", [1024, 1025])
def test_C_of_T_random_corpus(rng, m):
    x = uniform_grid(m)
    for _ in range(20):
        k, c = _sine_series(rng)
        f = np.sin(np.multiply.outer(x, k * math.pi)) @ c
        sol = apply_T(x, f)
        assert math.sqrt(simpson((apply_C(x, sol.u_xx) - f) ** 2, x=x)) <= 1e-8
        assert math.sqrt(simpson((sol.u - _T_sine_series(x, k, c)) ** 2, x=x)) <= 1e-8
        assert abs(sol.u[-1]) < 1e-10 and abs(sol.u_x[-1]) < 1e-10


def test_T_exact_on_cubic_vanishing_at_ends(rng):
    x = uniform_grid(257)
    for _ in range(5):
        a, b = rng.standard_normal(2)
        f = x * (1 - x) * (a + b * x)
        sol = apply_T(x, f)
        assert abs(sol.u[-1]) < 1e-12 and abs(sol.u_x[-1]) < 1e-12
        assert np.abs(apply_C(x, sol.u_xx) - f).max() < 1e-12


def _clamped_poly(rng):
    return Polynomial([0, 0, 1, -2, 1]) * Polynomial(rng.standard_normal(4))


def test_symmetry_and_positivity(rng):
    for _ in range(20):
        u, v = _clamped_poly(rng), _clamped_poly(rng)
        Cu_x = apply_C_derivative(X, u.deriv(2)(X), u.deriv(3)(X))
        lhs = simpson(v.deriv(1)(X) * Cu_x, x=X)
        rhs = simpson(v.deriv(2)(X) * u.deriv(2)(X), x=X)
        assert lhs == pytest.approx(rhs, abs=1e-8)
        assert simpson(u.deriv(1)(X) * Cu_x, x=X) > 0


def test_apply_C_derivative_consistent():
    u = Polynomial([0, 0, 1, -2, 1])
    Cu = apply_C(X, u.deriv(2)(X))
    d = apply_C_derivative(X, u.deriv(2)(X), u.deriv(3)(X))
    assert np.gradient(Cu, X, edge_order=2) == pytest.approx(d, abs=1e-6)


def test_write_modes_csv(tmp_path):
    path = tmp_path / "modes.csv"
    write_modes_csv(path, beam_modes(2), fd_nodes(8))
    lines = path.read_text().splitlines()
    assert lines[0].startswith("kind,k,lambda,phi(")
    assert len(lines) == 5
