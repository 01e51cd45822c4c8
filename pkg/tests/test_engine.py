import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from projsplit.engine import (
    expanded_phi,
    ProblemSpec,
    SeparatorState,
    StoppingRule,
    project_update,
    run,
    separator_at,
    separator_value,
)
from projsplit.errors import BisectionFailure, ConfigError, InternalInconsistency, InvariantViolation
from projsplit.hilbert import BlockPoint, LinearMap, gamma_inner
from projsplit.operators import L1Subdiff, LinearMonotone, OperatorBlock, QuadraticGradient, Sigmoid
from projsplit.problems import certify_solution, random_l1_logistic, reference_solve, scalar_lasso, skew_saddle
from projsplit.stepper import StepConfig, block_step, half_forward_step

I1 = LinearMap.identity(1)


def v(*x):
    return np.array(x, dtype=float)


def test_problem_spec_validation():
    with pytest.raises(ConfigError):
        ProblemSpec([])
    with pytest.raises(ConfigError, match="identity"):
        ProblemSpec([OperatorBlock(G=LinearMap(2 * np.eye(1)))])
    with pytest.raises(ConfigError, match="domain dimension"):
        ProblemSpec([OperatorBlock(G=LinearMap(np.ones((1, 2)))), OperatorBlock(G=I1)])


def _one_block_example():
    blk = OperatorBlock(G=I1, C=QuadraticGradient([[1.0]]))
    step = half_forward_step(blk, v(1.0), v(0.0), 0.5)
    return blk, step


def test_separator_single_block_example():
    blk, step = _one_block_example()
    sep = separator_value(v(1.0), [], [step], [blk], 1.0)
    assert (sep.v[0], sep.phi, sep.pi) == (1.0, 0.4375, 1.0)
    assert sep.phi == step.delta
    assert separator_value(v(1.0), [], [step], [blk], 4.0).pi == 0.25


def test_projection_example_and_hyperplane():
    blk, step = _one_block_example()
    sep = separator_value(v(1.0), [], [step], [blk], 1.0)
    p_next = project_update(BlockPoint(v(1.0), ()), sep, 1.0, 1.0)
    assert sep.alpha == 0.4375 and p_next.z[0] == 0.5625
    assert abs(separator_at(p_next, [step], [blk])) <= 1e-15


def test_projection_skipped_when_separator_nonpositive():
    p = BlockPoint(v(1.0, 2.0), (v(3.0, 4.0),))
    sep = SeparatorState([v(1.0, 0.0)], v(1.0, 1.0), -0.5, 3.0)
    assert project_update(p, sep, 1.0, 1.0) is p and sep.alpha == 0.0
    with pytest.raises(InternalInconsistency):
        project_update(p, SeparatorState([v(0.0, 0.0)], v(0.0, 0.0), 1.0, 0.0), 1.0, 1.0)


def _two_block_state(seed, gamma=1.0):
    r = np.random.default_rng(seed)
    G1 = LinearMap(r.standard_normal((2, 3)))
    S = r.standard_normal((2, 2))
    blocks = [OperatorBlock(G=G1, A=L1Subdiff([0.5, 0.5]), B=LinearMonotone(S - S.T)),
              OperatorBlock(G=LinearMap.identity(3), C=QuadraticGradient(np.eye(3), r.standard_normal(3)))]
    spec = ProblemSpec(blocks)
    p = BlockPoint(r.standard_normal(3), (r.standard_normal(2),))
    cfg = StepConfig(gamma=gamma)
    steps = [block_step(b, p.z, w, cfg, cfg.block_rho(b, i)) for i, (b, w) in enumerate(zip(blocks, spec.all_w(p)))]
    return spec, p, steps, r


@given(st.integers(0, 2**31 - 1), st.floats(0.2, 5.0))
def test_separator_forms_gradient_and_projection(seed, gamma):
    spec, p, steps, r = _two_block_state(seed, gamma)
    sep = separator_value(p.z, p.w, steps, spec.blocks, gamma)
    scale = 1 + abs(sep.phi)
    assert separator_at(p, steps, spec.blocks) == pytest.approx(sep.phi, abs=1e-10 * scale)
    assert expanded_phi(p.z, p.w, steps, spec.blocks, sep) == pytest.approx(sep.phi, abs=1e-10 * scale)
    grad = sep.gradient(gamma)
    assert gamma_inner(grad, grad, gamma) == pytest.approx(sep.pi, rel=1e-12)
    # affine: finite differences reproduce the gradient in the gamma inner product
    h = 1e-3
    for _ in range(3):
        d = BlockPoint(r.standard_normal(3), (r.standard_normal(2),))
        fd = (separator_at(p + d.scaled(h), steps, spec.blocks) - separator_at(p, steps, spec.blocks)) / h
        assert fd == pytest.approx(gamma_inner(grad, d, gamma), abs=1e-6 * (1 + abs(fd)))
    if sep.phi > 0:
        nxt = project_update(p, sep, gamma, 1.0)
        assert abs(separator_at(nxt, steps, spec.blocks)) <= 1e-10 * scale


def test_separator_at_graph_point():
    spec, p, steps, _ = _two_block_state(5)
    # a point whose G_i z equals x_i is not generally available; check the
    # definition on the single-block identity case instead
    blk = OperatorBlock(G=I1, C=QuadraticGradient([[2.0]]))
    step = half_forward_step(blk, v(1.0), v(0.0), 0.3)
    q = BlockPoint(step.x.copy(), ())
    want = -0.25 * 2.0 * step.xres ** 2
    # with n = 1, w_1 is forced to 0, so <Gz - x, y - w> vanishes at z = x
    assert separator_at(q, [step], [blk]) == pytest.approx(want, abs=1e-15)


def test_run_scalar_lasso_from_zero():
    inst = scalar_lasso()
    res = run(inst.spec, StepConfig(), stop=StoppingRule(1e-7, 10000), reference=inst.known_solution)
    assert res.converged and res.residual <= 1e-7
    assert abs(res.final.z[0] - 1.0) <= 1e-6
    assert len(res.trace) == res.iterations
    assert all(s >= -1e-9 for s in res.min_slack.values())


def test_run_at_solution_takes_no_steps():
    inst = scalar_lasso()
    res = run(inst.spec, StepConfig(), init=inst.known_solution)
    assert res.converged and res.iterations == 0 and res.residual == 0.0


def test_run_iteration_limit():
    inst = skew_saddle()
    res = run(inst.spec, StepConfig(), stop=StoppingRule(1e-12, 1))
    assert res.status == "max_iters" and res.iterations == 1 and not res.converged


def test_run_rejects_bad_init():
    inst = scalar_lasso()
    with pytest.raises(ConfigError):
        run(inst.spec, StepConfig(), init=BlockPoint(v(0.0, 0.0), (v(0.0),)))
    with pytest.raises(ConfigError):
        run(inst.spec, StepConfig(), init=BlockPoint(v(0.0), ()))


def test_solver_failures_name_block_and_iteration():
    spec = ProblemSpec([OperatorBlock(G=I1, D=Sigmoid(1)), OperatorBlock(G=I1, A=L1Subdiff([1.0]))])
    with pytest.raises(BisectionFailure) as info:
        run(spec, StepConfig(rho_hat=1e-6, max_evals=1), init=BlockPoint(v(2.0), (v(-3.0),)))
    assert info.value.block == 0 and info.value.iteration == 0
    assert "[block 0, iteration 0]" in str(info.value)


def test_fault_injection_trips_delta_check():
    inst = scalar_lasso()
    with pytest.raises(InvariantViolation) as info:
        run(inst.spec, StepConfig(), flip_delta_sign=True)
    assert info.value.check.startswith("delta_lower_bound")
    relaxed = run(inst.spec, StepConfig(), flip_delta_sign=True, strict=False)
    assert relaxed.violations.get("delta_lower_bound_half_forward", 0) > 0


def test_runs_are_deterministic():
    inst = skew_saddle()
    a = run(inst.spec, StepConfig())
    b = run(inst.spec, StepConfig())
    assert a.trace == b.trace and np.array_equal(a.final.flat(), b.final.flat())


def test_three_block_l1_logistic_certified():
    inst = random_l1_logistic(120, 15, n_blocks=3, lam=0.8, seed=4)
    ref = reference_solve(inst)
    res = run(inst.spec, StepConfig(), stop=StoppingRule(1e-7, 50000), reference=ref)
    ok, residuals = certify_solution(inst, res.final, 1e-6)
    assert res.converged and ok, residuals
    assert np.linalg.norm(res.final.z - ref.z) <= 1e-5
    assert res.min_slack["fejer_monotonicity"] >= -1e-10
    assert res.min_slack["separator_validity"] >= -1e-9
    assert res.max_evaluations <= 64


def test_separator_keeps_its_sign_near_the_solution():
    # the expanded separator formula cancels O(1) terms and stalls around 1e-8
    inst = skew_saddle()
    ref = reference_solve(inst)
    res = run(inst.spec, StepConfig(), stop=StoppingRule(1e-11, 2000), reference=ref)
    assert res.converged
    assert np.linalg.norm(res.final.z - ref.z) <= 1e-10
