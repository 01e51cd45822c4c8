import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from projsplit.errors import InnerSolveFailure
from projsplit.hilbert import LinearMap
from projsplit.operators import (
    BoxNormalCone,
    L1Subdiff,
    Linearization,
    OperatorBlock,
    Sigmoid,
    ZeroOperator,
    linearize,
    zero_linearization,
)
from projsplit.resolvents import (
    LinearizedResolventQuery,
    graph_membership,
    membership_residual,
    resolve_linearized,
    resolve_plain,
)


def v(*x):
    return np.array(x, dtype=float)


def test_resolve_plain_examples():
    assert resolve_plain(L1Subdiff([1.0]), 1.0, v(3.0))[0] == 2.0
    assert np.array_equal(resolve_plain(ZeroOperator(), 7.0, v(1.5, -2.0)), [1.5, -2.0])
    assert resolve_plain(BoxNormalCone([0.0], [1.0]), 1.0, v(-2.0))[0] == 0.0
    with pytest.raises(ValueError):
        resolve_plain(ZeroOperator(), 0.0, v(1.0))


def test_resolve_linearized_examples():
    lin = linearize(Sigmoid(1), v(0.0))
    x, rep = resolve_linearized(LinearizedResolventQuery(1.0, ZeroOperator(), lin, v(1.0)))
    assert x[0] == pytest.approx(0.4, abs=1e-15) and rep.method == "direct_linear"

    x, rep = resolve_linearized(LinearizedResolventQuery(1.0, L1Subdiff([1.0]), zero_linearization(1), v(3.0)))
    assert x[0] == 2.0 and rep.method == "closed_form"

    ident = Linearization(v(0.0), v(0.0), np.eye(1))
    x, _ = resolve_linearized(LinearizedResolventQuery(1.0, ZeroOperator(), ident, v(2.0)))
    assert x[0] == pytest.approx(1.0, abs=1e-15)


def test_query_rejects_nonpositive_rho():
    with pytest.raises(ValueError):
        LinearizedResolventQuery(0.0, ZeroOperator(), zero_linearization(1), v(1.0))


def _random_lin(r, d, symmetric):
    F = r.standard_normal((d, d))
    H = F @ F.T
    if not symmetric:
        S = r.standard_normal((d, d))
        H = H + (S - S.T)
    u = r.standard_normal(d)
    return Linearization(u, r.standard_normal(d), H)


@given(st.integers(1, 5), st.booleans(), st.floats(0.05, 5), st.integers(0, 2**31 - 1))
def test_l1_linearized_resolvent_optimality(d, symmetric, rho, seed):
    r = np.random.default_rng(seed)
    lin = _random_lin(r, d, symmetric)
    lam = r.uniform(0.1, 2.0, size=d)
    s = r.standard_normal(d) * 3
    x, rep = resolve_linearized(LinearizedResolventQuery(rho, L1Subdiff(lam), lin, s), tol=1e-11)
    assert rep.final_residual <= 1e-11
    # (s - x)/rho - lin(x) must lie in lam * d||x||_1, coordinatewise
    g = (s - x) / rho - lin(x)
    scale = 1e-8 * (1 + np.abs(g).max())
    for gi, xi, li in zip(g, x, lam):
        if xi > 0:
            assert abs(gi - li) <= scale
        elif xi < 0:
            assert abs(gi + li) <= scale
        else:
            assert abs(gi) <= li + scale


@given(st.integers(1, 4), st.floats(0.05, 5), st.integers(0, 2**31 - 1))
def test_box_linearized_resolvent_optimality(d, rho, seed):
    r = np.random.default_rng(seed)
    lin = _random_lin(r, d, True)
    lo = -r.uniform(0, 1, size=d)
    hi = r.uniform(0, 1, size=d)
    s = r.standard_normal(d) * 3
    x, _ = resolve_linearized(LinearizedResolventQuery(rho, BoxNormalCone(lo, hi), lin, s), tol=1e-11)
    g = (s - x) / rho - lin(x)  # in the normal cone of the box at x
    assert np.all(x >= lo) and np.all(x <= hi)
    tol = 1e-8 * (1 + np.abs(g).max())
    inner = (x > lo) & (x < hi)
    assert np.all(np.abs(g[inner]) <= tol)
    assert np.all(g[(x == lo) & (x < hi)] <= tol)
    assert np.all(g[(x == hi) & (x > lo)] >= -tol)


def test_zero_A_solves_linear_system_exactly(rng):
    lin = _random_lin(rng, 4, False)
    s = rng.standard_normal(4)
    rho = 0.7
    x, rep = resolve_linearized(LinearizedResolventQuery(rho, ZeroOperator(), lin, s))
    assert np.linalg.norm(x + rho * lin(x) - s) <= 1e-12
    assert rep.method == "direct_linear"


def test_inner_failure_carries_best_iterate(rng):
    lin = _random_lin(rng, 5, False)
    q = LinearizedResolventQuery(3.0, L1Subdiff(np.full(5, 0.1)), lin, rng.standard_normal(5) * 5)
    with pytest.raises(InnerSolveFailure) as info:
        resolve_linearized(q, tol=1e-300, max_iter=3)
    assert info.value.best is not None and info.value.residual > 0


def test_graph_membership_examples():
    I1 = LinearMap.identity(1)
    l1 = OperatorBlock(G=I1, A=L1Subdiff([1.0]))
    assert graph_membership(l1, v(0.0), v(0.5), tol=0.0)
    assert not graph_membership(l1, v(0.0), v(2.0), tol=0.0)
    sig = OperatorBlock(G=I1, D=Sigmoid(1))
    assert graph_membership(sig, v(0.0), v(0.5), tol=0.0)
    assert membership_residual(sig, v(0.0), v(0.6)) > 0
