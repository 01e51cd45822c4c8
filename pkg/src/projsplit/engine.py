"""Outer loop: build the separating hyperplane from the block steps and
project the current point onto it.

For ``p = (z, w_1, ..., w_{n-1})`` and block triples ``(rho_i, x_i, y_i)``
the separator is the affine function

    phi(p) = sum_i <G_i z - x_i, y_i - w_i> - ||x_i - G_i z^k||^2 / (4 beta_i)

which is nonpositive on the extended solution set and, in the gamma-weighted
inner product, has gradient ``(v / gamma, u_1, ..., u_{n-1})``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import ConfigError, InternalInconsistency, InvariantViolation, SolverFailure
from .hilbert import BlockPoint, LinearMap, derived_wn, gamma_inner, gamma_norm
from .operators import OperatorBlock, inv
from .stepper import (
    BlockStepResult,
    Branch,
    StepConfig,
    block_step,
    check_step_condition,
    delta_bound_constants,
    half_forward_delta_bound,
    inclusion_residual,
    proximal_newton_delta_bound,
    sandwich_slacks,
)

log = logging.getLogger(__name__)

X_NORM_ALARM = 1e12


@dataclass
class ProblemSpec:
    blocks: List[OperatorBlock]

    def __post_init__(self):
        if not self.blocks:
            raise ConfigError("a problem needs at least one block")
        last = self.blocks[-1].G
        if not last.is_identity:
            raise ConfigError("the last block must use the identity map")
        d = last.dim_in
        for i, b in enumerate(self.blocks):
            if b.G.dim_in != d:
                raise ConfigError(f"block {i} map has domain dimension {b.G.dim_in}, expected {d}")

    @property
    def n(self) -> int:
        return len(self.blocks)

    @property
    def dim(self) -> int:
        return self.blocks[-1].G.dim_in

    @property
    def leading_maps(self) -> List[LinearMap]:
        return [b.G for b in self.blocks[:-1]]

    def zero_point(self) -> BlockPoint:
        return BlockPoint(np.zeros(self.dim), tuple(np.zeros(b.dim) for b in self.blocks[:-1]))

    def all_w(self, p: BlockPoint):
        """``(w_1, ..., w_n)`` with ``w_n`` derived."""
        return [*p.w, derived_wn(p, self.leading_maps)]


@dataclass
class SeparatorState:
    u: list
    v: np.ndarray
    phi: float
    pi: float
    alpha: float = 0.0
    tau: float = 0.0

    def gradient(self, gamma: float) -> BlockPoint:
        return BlockPoint(self.v / gamma, tuple(self.u))


@dataclass(frozen=True)
class StoppingRule:
    tol: float = 1e-7
    max_iters: int = 10000


@dataclass
class BlockRecord:
    rho: float
    xres: float
    yres: float
    delta: float
    branch: int
    inner: int
    evaluations: int


@dataclass
class IterationRecord:
    k: int
    phi: float
    pi: float
    alpha: float
    residual: float
    blocks: List[BlockRecord]


@dataclass
class RunResult:
    final: BlockPoint
    trace: List[IterationRecord]
    status: str  # "converged" | "max_iters"
    residual: float
    min_slack: dict = field(default_factory=dict)
    violations: dict = field(default_factory=dict)
    max_evaluations: int = 0
    max_eval_bound: int = 0

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def separator_value(z, w: Sequence, steps: Sequence[BlockStepResult],
                    blocks: Sequence[OperatorBlock], gamma: float) -> SeparatorState:
    z = np.asarray(z, dtype=float)
    x_n = steps[-1].x
    u = [s.x - b.G(x_n) for s, b in zip(steps[:-1], blocks[:-1])]
    v = steps[-1].y + sum((b.G.adjoint(s.y) for s, b in zip(steps[:-1], blocks[:-1])),
                          np.zeros_like(z))
    # summed block by block as <G_i z - x_i, y_i - w_i>: the expanded form
    # (expanded_phi) cancels O(1) terms and loses the sign near a solution
    w_n = -sum((b.G.adjoint(wi) for b, wi in zip(blocks[:-1], w)), np.zeros_like(z))
    phi = 0.0
    for s, b, wi in zip(steps, blocks, [*w, w_n]):
        d = s.x - s.gz
        phi += float(-d @ (s.y - wi)) - 0.25 * inv(b.beta) * float(d @ d)
    pi = float(v @ v) / gamma + sum(float(ui @ ui) for ui in u)
    return SeparatorState(u, v, phi, pi)


def expanded_phi(z, w: Sequence, steps: Sequence[BlockStepResult],
                 blocks: Sequence[OperatorBlock], sep: SeparatorState) -> float:
    """``<z, v> + sum <w_i, u_i> - sum (<x_i, y_i> + |x_i - G_i z|^2 / (4 beta_i))``."""
    phi = float(np.asarray(z) @ sep.v) + sum(float(wi @ ui) for wi, ui in zip(w, sep.u))
    for s, b in zip(steps, blocks):
        d = s.x - s.gz
        phi -= float(s.x @ s.y) + 0.25 * inv(b.beta) * float(d @ d)
    return phi


def separator_at(point: BlockPoint, steps: Sequence[BlockStepResult],
                 blocks: Sequence[OperatorBlock], gamma: float = 1.0) -> float:
    """Value of the current separator at an arbitrary point of the product space."""
    ws = [*point.w, derived_wn(point, [b.G for b in blocks[:-1]])]
    total = 0.0
    for s, b, wi in zip(steps, blocks, ws):
        d = s.x - s.gz
        total += float((b.G(point.z) - s.x) @ (s.y - wi)) - 0.25 * inv(b.beta) * float(d @ d)
    return total


def project_update(p: BlockPoint, sep: SeparatorState, gamma: float, tau: float = 1.0) -> BlockPoint:
    """Relaxed projection of ``p`` onto ``{phi <= 0}``; identity when ``phi <= 0``."""
    sep.tau = tau
    if sep.phi <= 0:
        sep.alpha = 0.0
        return p
    if sep.pi <= 0:
        raise InternalInconsistency(f"separator positive (phi={sep.phi:.3e}) with zero gradient")
    sep.alpha = tau * sep.phi / sep.pi
    return BlockPoint(p.z - (sep.alpha / gamma) * sep.v,
                      tuple(wi - sep.alpha * ui for wi, ui in zip(p.w, sep.u)))


def residual_of(steps: Sequence[BlockStepResult]) -> float:
    return max(max(s.xres, s.yres) for s in steps)


class InvariantMonitor:
    """Evaluates the convergence inequalities on every iteration.

    Each check keeps its smallest slack and a count of violations (slack
    below ``-tolerance``). In strict mode the first violation raises
    :class:`InvariantViolation`.
    """

    TOLERANCES = {
        "separator_validity": 1e-9,
        "fejer_monotonicity": 1e-10,
        "step_ratio_sandwich": 1e-9,
        "delta_lower_bound_half_forward": 1e-9,
        "delta_lower_bound_proximal_newton": 1e-9,
        "separator_lower_bound": 1e-9,
        "inclusion_certificate": 1e-9,
        "dual_residual_bound": 1e-9,
        "separator_gradient_norm": 1e-9,
        "separator_two_forms": 1e-9,
        "rho_ceiling": 1e-12,
        "step_condition": 1e-12,
        "bisection_evaluations": 0,
        "bounded_iterates": 0,
    }

    def __init__(self, spec: ProblemSpec, cfg: StepConfig, nonsmooth_rho: dict,
                 reference: Optional[BlockPoint] = None, flip_delta_sign: bool = False,
                 strict: bool = True):
        self.spec = spec
        self.strict = strict
        self.violations = {}
        self.cfg = cfg
        self.nonsmooth_rho = nonsmooth_rho
        self.reference = reference
        self.flip = flip_delta_sign
        self.min_slack = {}
        self.rho_seen = {}
        self.rho_cap = cfg.rho_max(list(nonsmooth_rho.values()))

    def record(self, name: str, slack: float, block=None, iteration=None):
        prev = self.min_slack.get(name, math.inf)
        self.min_slack[name] = min(prev, slack)
        if slack < -self.TOLERANCES[name]:
            self.violations[name] = self.violations.get(name, 0) + 1
            if self.strict:
                raise InvariantViolation(name, slack).annotate(block, iteration)

    def check_steps(self, k: int, steps: Sequence[BlockStepResult]):
        cfg = self.cfg
        for i, (b, s) in enumerate(zip(self.spec.blocks, steps)):
            if s.branch != Branch.GRAPH_SHORTCUT:
                lo, hi = self.rho_seen.get(i, (s.rho, s.rho))
                self.rho_seen[i] = (min(lo, s.rho), max(hi, s.rho))
            dlt = -s.delta if self.flip else s.delta
            self.record("rho_ceiling", self.rho_cap - s.rho, i, k)
            self.record("bounded_iterates", X_NORM_ALARM - float(np.linalg.norm(s.x)), i, k)
            self.record("inclusion_certificate", -inclusion_residual(b, s), i, k)
            if s.branch == Branch.HALF_FORWARD:
                low, high = sandwich_slacks(b, s)
                self.record("step_ratio_sandwich", min(low, high), i, k)
                r = self.nonsmooth_rho[i]
                self.record("delta_lower_bound_half_forward",
                            dlt - half_forward_delta_bound(b, s, r, r), i, k)
            elif s.branch == Branch.PROXIMAL_NEWTON:
                lo, hi = self.rho_seen[i]
                self.record("delta_lower_bound_proximal_newton",
                            dlt - proximal_newton_delta_bound(s, cfg.theta_hi, lo, hi), i, k)
                cond = check_step_condition(b, s.rho, s.x, s.gz, cfg)
                self.record("step_condition", min(cond - cfg.theta_lo, cfg.theta_hi - cond), i, k)
                self.record("bisection_evaluations",
                            min(cfg.max_evals, max(s.eval_bound, 1)) - s.evaluations, i, k)
            else:
                self.record("delta_lower_bound_half_forward", dlt, i, k)

    def check_separator(self, k: int, p: BlockPoint, steps, sep: SeparatorState):
        spec, gamma = self.spec, self.cfg.gamma
        blocks = spec.blocks
        # two expressions of the same affine function agree at the iterate
        alt = expanded_phi(p.z, p.w, steps, blocks, sep)
        self.record("separator_two_forms", -abs(alt - sep.phi) / max(1.0, abs(sep.phi)), None, k)
        grad = sep.gradient(gamma)
        self.record("separator_gradient_norm",
                    -abs(gamma_inner(grad, grad, gamma) - sep.pi) / max(1.0, sep.pi), None, k)
        # lower bound on phi(p^k) from the per-block delta bounds
        c = math.inf
        for i, b in enumerate(blocks):
            if i in self.rho_seen:
                lo, hi = self.rho_seen[i]
                if b.in_smooth_set:
                    hi = self.rho_cap
                c = min(c, *delta_bound_constants(b, self.cfg, lo, hi))
        if math.isfinite(c):
            total = sum(s.xres ** 2 + s.yres ** 2 for s in steps)
            phi = -sep.phi if self.flip else sep.phi
            self.record("separator_lower_bound", phi - c * total, None, k)
        ws = spec.all_w(p)
        bound = sum(b.G.norm_bound * float(np.linalg.norm(wi - s.y))
                    for b, s, wi in zip(blocks, steps, ws))
        self.record("dual_residual_bound", bound - float(np.linalg.norm(sep.v)), None, k)
        if self.reference is not None:
            self.record("separator_validity", -separator_at(self.reference, steps, blocks, gamma), None, k)

    def check_update(self, k: int, p: BlockPoint, p_next: BlockPoint):
        if self.reference is None:
            return
        gamma = self.cfg.gamma
        before = gamma_norm(p - self.reference, gamma)
        after = gamma_norm(p_next - self.reference, gamma)
        self.record("fejer_monotonicity", before - after, None, k)


def _resolve_rhos(spec: ProblemSpec, cfg: StepConfig):
    nonsmooth = {}
    for i, b in enumerate(spec.blocks):
        if not b.in_smooth_set:
            nonsmooth[i] = cfg.block_rho(b, i)
    return nonsmooth


def run(spec: ProblemSpec, cfg: StepConfig, init: Optional[BlockPoint] = None,
        stop: StoppingRule = StoppingRule(), reference: Optional[BlockPoint] = None,
        assertions: bool = True, flip_delta_sign: bool = False, strict: bool = True) -> RunResult:
    """Iterate until the block residual drops below ``stop.tol`` or
    ``stop.max_iters`` projections have been made.

    ``reference`` is a certified solution; when given (and ``assertions`` is
    on) the separator and Fejer checks are evaluated against it. With
    ``strict=False`` violations are counted in the result instead of raised.
    """
    p = spec.zero_point() if init is None else init
    if p.z.shape[0] != spec.dim or len(p.w) != spec.n - 1:
        raise ConfigError("initial point does not match the problem structure")
    for wi, b in zip(p.w, spec.blocks):
        if wi.shape[0] != b.dim:
            raise ConfigError("initial dual block has the wrong dimension")

    nonsmooth = _resolve_rhos(spec, cfg)
    warm = {i: cfg.rho_hat for i, b in enumerate(spec.blocks) if b.in_smooth_set}
    monitor = (InvariantMonitor(spec, cfg, nonsmooth, reference, flip_delta_sign, strict)
               if assertions else None)
    trace: List[IterationRecord] = []
    max_evals = max_bound = 0
    status = "max_iters"
    residual = math.inf

    for k in range(stop.max_iters + 1):
        ws = spec.all_w(p)
        steps = []
        for i, (b, wi) in enumerate(zip(spec.blocks, ws)):
            try:
                s = block_step(b, p.z, wi, cfg, nonsmooth.get(i, warm.get(i)))
            except SolverFailure as err:
                raise err.annotate(i, k)
            if s.branch == Branch.PROXIMAL_NEWTON:
                warm[i] = s.rho
                max_evals = max(max_evals, s.evaluations)
                max_bound = max(max_bound, s.eval_bound)
            steps.append(s)
        residual = residual_of(steps)
        if residual <= stop.tol:
            status = "converged"
            break
        if k == stop.max_iters:
            break
        sep = separator_value(p.z, p.w, steps, spec.blocks, cfg.gamma)
        p_next = project_update(p, sep, cfg.gamma, cfg.tau)
        if monitor is not None:
            monitor.check_steps(k, steps)
            monitor.check_separator(k, p, steps, sep)
            monitor.check_update(k, p, p_next)
        trace.append(IterationRecord(k, sep.phi, sep.pi, sep.alpha, residual, [
            BlockRecord(s.rho, s.xres, s.yres, s.delta, int(s.branch), s.inner_iterations, s.evaluations)
            for s in steps]))
        p = p_next

    log.info("run finished: %s after %d iterations, residual %.3e", status, len(trace), residual)
    return RunResult(p, trace, status, residual,
                     dict(monitor.min_slack) if monitor else {},
                     dict(monitor.violations) if monitor else {}, max_evals, max_bound)
