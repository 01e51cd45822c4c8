import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from projsplit.errors import BisectionFailure, ConfigError, ZeroResidual
from projsplit.hilbert import LinearMap
from projsplit.linesearch import (
    PsiSpec,
    bracket_bisect,
    psi,
    psi_value,
    reduce_problem_a,
    step_condition_spec,
    termination_bound,
)
from projsplit.operators import L1Subdiff, LinearMonotone, OperatorBlock, Sigmoid
from projsplit.resolvents import resolve_plain
from projsplit.stepper import StepConfig


class CurvedSigmoid(Sigmoid):
    """Sigmoid with a deliberately loose curvature constant."""

    def __init__(self, m):
        super().__init__(1)
        self.hessian_lipschitz = m


def l1_spec(z, a=0.0, b=0.0, lo=0.5, hi=1.5, lam=1.0):
    zz = np.array([z], float)
    A = L1Subdiff([lam])
    return PsiSpec(a, b, lo, hi, lambda r: resolve_plain(A, r, zz), zz)


def fixed_spec(a, b, lo, hi):
    """psi(rho) = a rho^2 + b rho (resolvent is the identity)."""
    return PsiSpec(a, b, lo, hi, lambda r: np.zeros(1), np.zeros(1))


def test_psi_examples():
    assert psi(l1_spec(3.0), 1.0) == 1.0
    assert psi(l1_spec(3.0), 2.0) == 16.0
    # z = 0 is a zero of d|.|, so only the polynomial part remains
    spec0 = l1_spec(0.0, a=0.3, b=0.2)
    for r in (0.5, 1.0, 3.0):
        assert psi(spec0, r) == pytest.approx(0.3 * r * r + 0.2 * r, rel=1e-15)
    with pytest.raises(ValueError):
        psi(spec0, 0.0)


def test_psi_spec_validation():
    with pytest.raises(ConfigError):
        fixed_spec(-1.0, 0.0, 0.5, 1.5)
    with pytest.raises(ConfigError):
        fixed_spec(0.0, 1.0, 1.5, 0.5)
    with pytest.raises(ConfigError):
        fixed_spec(0.0, 1.0, 0.0, 0.5)


def test_bracket_below_window():
    seen = []
    spec = PsiSpec(0.0, 0.1, 0.5, 1.5, lambda r: (seen.append(r), np.zeros(1))[1], np.zeros(1))
    res = bracket_bisect(spec, 1.0)
    assert res.initial_bracket == (1.0, 15.0)
    assert seen[1] == pytest.approx(math.sqrt(15.0), abs=1e-15)
    assert 0.5 <= res.psi <= 1.5 and res.evaluations <= res.eval_bound


def test_bracket_above_window():
    res = bracket_bisect(fixed_spec(1.0, 0.0, 0.5, 1.5), 2.0)
    assert res.initial_bracket == (0.25, 2.0)
    assert 0.5 <= res.psi <= 1.5


def test_immediate_accept():
    res = bracket_bisect(fixed_spec(0.0, 1.0, 0.5, 1.5), 1.0)
    assert res.rho == 1.0 and res.evaluations == 1 and res.bracket is None


def test_zero_psi_and_budget_errors():
    with pytest.raises(ZeroResidual):
        bracket_bisect(l1_spec(0.0), 1.0)
    with pytest.raises(BisectionFailure) as info:
        bracket_bisect(fixed_spec(0.0, 1.0, 1.0, 1.0 + 1e-12), 1e-6, max_evals=3)
    assert info.value.bracket is not None
    with pytest.raises(ValueError):
        bracket_bisect(fixed_spec(0.0, 1.0, 0.5, 1.5), -1.0)


def test_termination_bound_values():
    assert termination_bound(1.0, 1.0 + 1e-9, 0.5, 1.5) == 2
    w = 0.25 * math.log(3.0)
    assert termination_bound(1.0, math.exp(8 * w), 0.5, 1.5) == 5


psi_cases = st.tuples(
    st.floats(-5, 5), st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.floats(0.1, 3.0),
    st.floats(0.05, 3.0), st.floats(1.05, 4.0), st.floats(-6, 6),
)


@given(psi_cases)
def test_bisection_lands_in_window_within_bound(case):
    z, a, b, lam, lo, ratio, log_rho0 = case
    spec = l1_spec(z, a, b, lo, lo * ratio, lam)
    if psi(spec, 1.0) <= 0:
        return
    res = bracket_bisect(spec, math.exp(log_rho0))
    assert spec.theta_minus <= res.psi <= spec.theta_plus
    assert res.evaluations <= max(res.eval_bound, 1) <= 64
    assert psi_value(spec, res.rho)[0] == res.psi


@given(st.floats(-5, 5), st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.floats(-4, 4), st.floats(-4, 4))
def test_psi_growth_sandwich(z, a, b, l1, l2):
    spec = l1_spec(z, a, b)
    mu, rho = sorted((math.exp(l1), math.exp(l2)))
    pm, pr = psi(spec, mu), psi(spec, rho)
    r = rho / mu
    assert r * pm <= pr * (1 + 1e-12) + 1e-300
    assert pr <= r ** 4 * pm * (1 + 1e-12) + 1e-300


@given(st.floats(-5, 5).filter(lambda z: abs(z) > 1.01), st.floats(-4, 4), st.floats(1e-3, 1.0))
def test_psi_strictly_increasing_off_zeros(z, l1, step):
    spec = l1_spec(z)
    rho = math.exp(l1)
    assert psi(spec, rho * (1 + step)) > psi(spec, rho)


def _smooth_block(ell=0.0, m=None, beta_q=None):
    B = LinearMonotone([[0.0]]) if ell == 0 else LinearMonotone([[ell]], lipschitz=ell)
    return OperatorBlock(G=LinearMap.identity(1), B=B if ell else None,
                         D=Sigmoid(1) if m is None else CurvedSigmoid(m))


def test_reduce_problem_a_examples():
    cfg = SimpleNamespace(theta_lo=0.9, theta_hi=1.9, delta_hat=1.0, inner_tol=1e-10, max_inner_iterations=100)
    spec = reduce_problem_a(_smooth_block(m=0.5), np.zeros(1), np.ones(1), cfg)
    assert (spec.a, spec.b) == (0.0, 4.0)
    assert spec.theta_minus == pytest.approx(3.6, abs=1e-14) and spec.theta_plus == pytest.approx(7.6, abs=1e-14)
    assert spec.weight == 1.0

    cfg.delta_hat = 4.0
    spec = reduce_problem_a(_smooth_block(ell=1.0, m=2.0), np.zeros(1), np.ones(1), cfg)
    assert (spec.a, spec.b) == (1.0, 1.0)


def test_step_condition_spec_rejections():
    cfg = SimpleNamespace(theta_lo=0.9, theta_hi=1.9, delta_hat=0.0, inner_tol=1e-10, max_inner_iterations=100)
    with pytest.raises(ConfigError):
        step_condition_spec(_smooth_block(ell=1.0, m=1.0), np.zeros(1), np.zeros(1), cfg)
    with pytest.raises(ConfigError):
        StepConfig(delta_hat=0.0)
    cfg.delta_hat = 1.0
    with pytest.raises(ConfigError):
        step_condition_spec(OperatorBlock(G=LinearMap.identity(1)), np.zeros(1), np.zeros(1), cfg)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.0, 2.0), st.floats(0.1, 3.0),
       st.floats(0.1, 5.0), st.floats(-4, 2))
def test_raw_and_reduced_forms_accept_the_same_rho(z, w, ell, m, delta_hat, log_rho):
    cfg = StepConfig(delta_hat=delta_hat)
    block = OperatorBlock(G=LinearMap.identity(1), A=L1Subdiff([0.5]),
                          B=LinearMonotone([[ell]]) if ell > 0 else None, D=CurvedSigmoid(m))
    raw = step_condition_spec(block, np.array([z]), np.array([w]), cfg)
    red = reduce_problem_a(block, np.array([z]), np.array([w]), cfg)
    rho = math.exp(log_rho)
    vr, vd = psi(raw, rho), psi(red, rho)
    assert vr == pytest.approx(vd * m * m, rel=1e-12, abs=1e-300)
    if min(abs(vr - raw.theta_minus), abs(vr - raw.theta_plus)) > 1e-12:
        assert (raw.theta_minus <= vr <= raw.theta_plus) == (red.theta_minus <= vd <= red.theta_plus)
