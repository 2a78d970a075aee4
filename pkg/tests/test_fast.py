import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from infoepi.errors import BracketError, HypothesisError, PreconditionError
from infoepi.fast import (FastKind, Regime, Stability, classify_fast, find_transcritical, gas_equilibrium, gas_regime,
                          lyapunov_check, mfe, msfe, r0_fast, sfe, threshold_line)
from infoepi.integrate import integrate_fast
from infoepi.model import Params

BASE = dict(b1=1.5, b2=0.9, K=0.9, beta=6.0, gamma=0.8, eta=0.08, mu1=1.0, mu2=1.0, epsilon=0.01)


def p(**kw):
    return Params(**{**BASE, **kw})


def oracle_eigenvalues(prm, state, I, h=1e-6):
    """Central-difference Jacobian of an independently written fast RHS, diagonalized by numpy."""
    b1, b2, K, mu1 = prm.b1, prm.b2, prm.K, prm.mu1

    def f(x):
        U, M, Z = x
        c = b2 / (1 - K * I)
        return np.array([mu1 - b1 * U * M - c * U * Z - mu1 * U, b1 * U * M - mu1 * M, c * U * Z - mu1 * Z])

    x0 = np.array(list(state), dtype=float)
    J = np.column_stack([(f(x0 + h * e) - f(x0 - h * e)) / (2 * h) for e in np.eye(3)])
    return np.linalg.eigvals(J)


def assert_same_spectrum(closed, numeric, tol):
    """Best pairing over all permutations (the spectra are tiny)."""
    closed = [complex(z) for z in closed]
    numeric = [complex(z) for z in numeric]
    err = min(max(abs(a - b) for a, b in zip(closed, perm)) for perm in itertools.permutations(numeric))
    assert err < tol, (closed, numeric)


@st.composite
def fast_params(draw):
    return Params(b1=draw(st.floats(0.1, 12)), b2=draw(st.floats(0.1, 12)), K=draw(st.floats(0, 0.95)), beta=1.0,
                  gamma=1.0, eta=1.0, mu1=draw(st.floats(0.1, 6)), mu2=1.0, epsilon=0.01)


unit = st.floats(0.0, 1.0)


# ---- reproduction number


def test_r0_fast_examples():
    r = r0_fast(p(), 0.0)
    assert r.value == 1.5 and r.argmax == "b1"
    assert r0_fast(p(b1=0.5, b2=0.5, K=0.0), 0.3).value == 0.5
    r = r0_fast(p(), 0.8)
    assert r.value == pytest.approx(0.9 / 0.28, rel=1e-14) and r.argmax == "b2"
    assert round(r.value, 4) == 3.2143


def test_r0_fast_needs_positive_mu1():
    with pytest.raises(ZeroDivisionError):
        r0_fast(p(mu1=0.0), 0.0)


# ---- equilibria


def test_msfe_examples():
    e = msfe(p(b1=0.5, b2=0.5, K=0.0), 0.0)
    assert tuple(e.state) == (1.0, 0.0, 0.0) and e.feasible
    assert [z.real for z in e.eigenvalues] == [-1.0, -0.5, -0.5]
    assert e.stability is Stability.STABLE
    e = msfe(p(), 0.0)
    assert e.eigenvalues[1].real == 0.5 and e.stability is Stability.UNSTABLE


def test_sfe_examples():
    e = sfe(p(), 0.0)
    assert tuple(e.state) == pytest.approx((2 / 3, 1 / 3, 0.0), abs=1e-15) and e.feasible
    assert not sfe(p(b1=0.9), 0.0).feasible
    # at the C01 endemic infection level the normal eigenvalue is just positive
    e = sfe(p(), 0.44521276595744681)
    lam3 = 0.9 / (1.5 * (1 - 0.9 * 0.44521276595744681)) - 1
    assert e.eigenvalues[2].real == pytest.approx(lam3, rel=1e-12)
    assert 0.001 < lam3 < 0.002 and e.stability is Stability.UNSTABLE
    numeric = oracle_eigenvalues(p(), e.state, 0.44521276595744681)
    assert max(z.real for z in numeric) == pytest.approx(lam3, abs=1e-8)


def test_mfe_examples():
    e = mfe(p(), 0.2)
    assert tuple(e.state) == pytest.approx((0.82 / 0.9, 0.0, 0.08 / 0.9), abs=1e-15) and e.feasible
    assert round(e.state.U, 4) == 0.9111 and round(e.state.Z, 4) == 0.0889
    assert not mfe(p(K=0.0), 0.6).feasible
    assert_same_spectrum(e.eigenvalues, oracle_eigenvalues(p(), e.state, 0.2), 1e-10)


def test_threshold_line_examples():
    # b1 = 2, b2/(1-KI) = 2 with b2 = 1.6, K = 0.5, I = 0.4
    prm = p(b1=2.0, b2=1.6, K=0.5)
    line = threshold_line(prm, 0.4)
    assert line is not None and line.kind is FastKind.THRESHOLD_LINE
    assert line.stability is Stability.MARGINAL
    assert line.state.U == pytest.approx(0.5)
    # corrected spectrum on the line: (0, -mu1, mu1 - b)
    assert sorted(z.real for z in line.eigenvalues) == [-1.0, -1.0, 0.0]
    # -1 is a double root here, so the difference quotient only resolves it to ~sqrt(rounding)
    for point in (line.state, *line.segment):
        assert_same_spectrum(line.eigenvalues, oracle_eigenvalues(prm, point, 0.4), 1e-5)
    # the printed pair (-3 +- sqrt 5)/2 is not what the Jacobian gives
    printed = ((-3 + math.sqrt(5)) / 2, (-3 - math.sqrt(5)) / 2)
    numeric = sorted(oracle_eigenvalues(prm, line.state, 0.4).real)
    assert abs(numeric[1] - printed[0]) > 0.5


def test_threshold_line_simple_spectrum():
    # b = 3 separates the roots: expected (0, -1, -2) anywhere on the segment
    prm = p(b1=3.0, b2=2.4, K=0.5)
    line = threshold_line(prm, 0.4)
    assert line.state.U == pytest.approx(1 / 3)
    for point in (line.state, *line.segment):
        assert_same_spectrum(line.eigenvalues, oracle_eigenvalues(prm, point, 0.4), 1e-8)
        assert_same_spectrum((0, -1, -2), oracle_eigenvalues(prm, point, 0.4), 1e-8)


def test_threshold_line_location_and_absence():
    I_line = (1.5 - 0.9) / (0.9 * 1.5)
    assert round(I_line, 5) == 0.44444
    assert threshold_line(p(), I_line) is not None
    assert threshold_line(p(), 0.4) is None
    assert threshold_line(p(b1=0.5, b2=0.5, K=0.0), 0.0) is None


def test_classify_fast_examples():
    eqs = {e.kind: e for e in classify_fast(p(), 0.2)}
    assert eqs[FastKind.SFE].feasible and eqs[FastKind.SFE].stability is Stability.STABLE
    assert eqs[FastKind.MFE].feasible and eqs[FastKind.MFE].stability is Stability.UNSTABLE
    assert eqs[FastKind.MSFE].stability is Stability.UNSTABLE
    eqs = classify_fast(p(b1=0.5, b2=0.5, K=0.0), 0.0)
    assert [e.kind for e in eqs if e.feasible] == [FastKind.MSFE]
    assert eqs[0].stability is Stability.STABLE
    with pytest.raises(PreconditionError):
        classify_fast(p(), 1.5)


@settings(max_examples=200, deadline=None)
@given(fast_params(), unit)
def test_closed_forms_match_numeric_jacobian(prm, I):
    for eq in classify_fast(prm, I):
        if not eq.feasible:
            continue
        assert max(map(abs, _rhs(prm, eq.state, I))) < 1e-12
        assert_same_spectrum(eq.eigenvalues, oracle_eigenvalues(prm, eq.state, I), 1e-6)


def _rhs(prm, state, I):
    from infoepi.model import fast_rhs
    return fast_rhs(prm, state, I)


@settings(max_examples=300, deadline=None)
@given(fast_params(), unit)
def test_no_bistability(prm, I):
    eqs = {e.kind: e for e in classify_fast(prm, I)}
    s, m = eqs[FastKind.SFE], eqs[FastKind.MFE]
    assert not (s.stability is Stability.STABLE and m.stability is Stability.STABLE)
    near_threshold = FastKind.THRESHOLD_LINE in eqs or Stability.MARGINAL in (s.stability, m.stability)
    if s.feasible and m.feasible and not near_threshold:
        assert (s.stability is Stability.STABLE) != (m.stability is Stability.STABLE)


@settings(max_examples=200, deadline=None)
@given(fast_params(), unit, st.floats(0.01, 100))
def test_time_rescaling_invariance(prm, I, scale):
    scaled = prm.replace(b1=prm.b1 * scale, b2=prm.b2 * scale, mu1=prm.mu1 * scale)
    a, b = classify_fast(prm, I), classify_fast(scaled, I)
    # rounding can move a point across the marginal band; skip those draws
    assume(all(min(abs(z.real) for z in e.eigenvalues) > 1e-6 * max(1.0, scale) for e in a + b))
    assert [(e.kind, e.feasible, e.stability) for e in a] == [(e.kind, e.feasible, e.stability) for e in b]


# ---- transcritical bifurcations


def test_transcritical_b1():
    rep = find_transcritical(p(), "b1", (0.5, 1.5), 0.0)
    assert abs(rep.critical_value - 1.0) < 1e-8
    assert rep.condition_i == pytest.approx(0.0, abs=1e-8)
    assert rep.condition_ii == pytest.approx(-1.0, abs=1e-4)
    assert rep.condition_iii_single == pytest.approx(-1.0, abs=1e-4)
    assert rep.condition_iii == pytest.approx(-2.0, abs=1e-4)


def test_transcritical_b2():
    rep = find_transcritical(p(), "b2", (0.3, 0.8), 0.5)
    assert abs(rep.critical_value - 0.55) < 1e-8
    assert rep.condition_ii == pytest.approx(-1 / 0.55, abs=1e-4)
    assert round(rep.condition_ii, 4) == -1.8182
    assert rep.condition_iii_single == pytest.approx(-1.0, abs=1e-4)


def test_transcritical_bracket_error():
    with pytest.raises(BracketError):
        find_transcritical(p(), "b1", (1.2, 2.0), 0.0)


# ---- global stability regimes and Lyapunov descent


REGIME_PARAMS = {
    Regime.MSFE: p(b1=0.5, b2=0.4, K=0.5),
    Regime.SFE_ONLY: p(b1=2.0, b2=0.5, K=0.2),
    Regime.MFE_ONLY: p(b1=0.7, b2=1.5, K=0.5),
    Regime.SFE_DOMINANT: p(b1=3.0, b2=1.5, K=0.2),
    Regime.MFE_DOMINANT: p(b1=1.5, b2=2.0, K=0.5),
}


@pytest.mark.parametrize("regime", list(REGIME_PARAMS))
def test_gas_regime_detection(regime):
    assert gas_regime(REGIME_PARAMS[regime], 0.3) is regime


def test_gas_regime_threshold_and_boundary():
    assert gas_regime(p(b1=2.0, b2=1.6, K=0.5), 0.4) is Regime.THRESHOLD
    with pytest.raises(HypothesisError):
        gas_regime(p(b1=1.0, b2=0.5, K=0.0), 0.0)


@pytest.mark.parametrize("regime", [Regime.SFE_ONLY, Regime.MFE_DOMINANT])
def test_lyapunov_descent_along_trajectories(regime):
    prm = REGIME_PARAMS[regime]
    target = gas_equilibrium(prm, 0.3)
    rng = np.random.default_rng(7)
    for start in rng.dirichlet(np.ones(3), size=10):
        traj = integrate_fast(prm, start, 0.3, 60.0)
        rep = lyapunov_check(prm, 0.3, target, traj)
        assert rep.passed, rep.max_increase
        assert np.max(np.abs(traj.y[-1] - target.state.as_array())) < 1e-6


def test_lyapunov_constant_at_target():
    prm = REGIME_PARAMS[Regime.SFE_ONLY]
    target = gas_equilibrium(prm, 0.3)
    rep = lyapunov_check(prm, 0.3, target, [target.state] * 5)
    assert rep.max_increase == 0.0 and np.ptp(rep.values) == 0.0


def test_msfe_exponential_rate():
    prm = REGIME_PARAMS[Regime.MSFE]
    target = gas_equilibrium(prm, 0.3)
    traj = integrate_fast(prm, (0.4, 0.3, 0.3), 0.3, 40.0)
    rep = lyapunov_check(prm, 0.3, target, traj)
    assert rep.passed
    assert rep.decay_rate <= 0.9 * rep.decay_bound or abs(rep.decay_rate / rep.decay_bound - 1) < 0.1


def test_lyapunov_rejects_wrong_target():
    prm = REGIME_PARAMS[Regime.SFE_ONLY]
    with pytest.raises(PreconditionError):
        lyapunov_check(prm, 0.3, mfe(prm, 0.3), [(1.0, 0.0, 0.0)])
