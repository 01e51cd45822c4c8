"""Per-block steps of the projective splitting iteration.

Each block produces a triple ``(rho, x, y)`` with ``y - (B + D)(x) - C(Gz)``
in ``A(x)``; the engine combines the triples into a separating hyperplane.
Three branches:

* graph shortcut, when ``w`` already lies in ``T(Gz)``;
* half-forward, for blocks without a smooth part ``D``;
* proximal-Newton, for blocks with ``D``, where ``rho`` comes from the
  bracketing/bisection search.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .linesearch import bracket_bisect, step_condition_spec
from .operators import OperatorBlock, inv
from .resolvents import membership_residual, membership_residual_A, resolve_plain

SAFETY = 0.99


class Branch(enum.IntEnum):
    GRAPH_SHORTCUT = 0
    HALF_FORWARD = 1
    PROXIMAL_NEWTON = 2


@dataclass
class StepConfig:
    theta_lo: float = 0.9
    theta_hi: float = 1.9
    rho_hat: float = 1.0
    delta_hat: float = 1.0
    tau: float = 1.0
    tau_lo: float = 0.1
    tau_hi: float = 1.9
    gamma: float = 1.0
    # per-block rho for blocks without D; None entries use the default
    rho: Sequence[Optional[float]] = field(default_factory=tuple)
    shortcut_tol: float = 1e-12
    inner_tol: float = 1e-10
    max_inner_iterations: int = 10000
    max_evals: int = 64

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.theta_lo > 0, "theta_lo must be > 0")
        need(self.theta_lo < self.theta_hi, "theta_lo must be < theta_hi")
        need(self.theta_hi < 2, "theta_hi (overline_theta) must be < 2")
        need(self.tau_lo > 0, "tau_lo must be > 0")
        need(self.tau_lo < self.tau_hi, "tau_lo must be < tau_hi")
        need(self.tau_hi < 2, "tau_hi (overline_tau) must be < 2")
        need(self.tau_lo <= self.tau <= self.tau_hi, "tau must lie in [tau_lo, tau_hi]")
        need(self.rho_hat > 0, "rho_hat must be > 0")
        need(self.delta_hat > 0, "delta_hat must be > 0")
        need(self.gamma > 0, "gamma must be > 0")
        need(self.shortcut_tol >= 0, "shortcut_tol must be >= 0")
        need(self.inner_tol > 0, "inner_tol must be > 0")
        need(self.max_inner_iterations >= 1, "max_inner_iterations must be >= 1")
        need(self.max_evals >= 1, "max_evals must be >= 1")
        for r in self.rho:
            need(r is None or r > 0, "per-block rho values must be > 0")

    def block_rho(self, block: OperatorBlock, index: int) -> float:
        """Constant ``rho`` used for a block without ``D``.

        An explicit value must satisfy ``rho < 1/(1/(4 beta) + ell)``; the
        default is ``min(rho_hat, 0.99/(1/(4 beta) + ell))``.
        """
        bound = block.half_forward_rho_bound()
        user = self.rho[index] if index < len(self.rho) else None
        if user is None:
            return min(self.rho_hat, SAFETY * bound)
        if user >= bound:
            raise ConfigError(
                f"rho for block {index} is {user}, must be < 1/(1/(4 beta) + ell) = {bound:.6g}")
        return float(user)

    def rho_max(self, nonsmooth_rhos: Sequence[float] = ()) -> float:
        """A priori upper bound on every accepted ``rho``."""
        return max([self.rho_hat, self.theta_hi / self.delta_hat, *nonsmooth_rhos])


@dataclass
class BlockStepResult:
    rho: float
    x: np.ndarray
    y: np.ndarray
    gz: np.ndarray
    w: np.ndarray
    delta: float
    branch: Branch
    inner_iterations: int = 0
    evaluations: int = 0
    eval_bound: int = 0
    condition: Optional[float] = None

    @property
    def xres(self) -> float:
        return float(np.linalg.norm(self.x - self.gz))

    @property
    def yres(self) -> float:
        return float(np.linalg.norm(self.y - self.w))


def delta(block: OperatorBlock, z, w, x, y) -> float:
    """``<Gz - x, y - w> - ||x - Gz||^2 / (4 beta)``."""
    gz = block.G(np.asarray(z, dtype=float))
    d = gz - x
    return float(d @ (np.asarray(y) - w) - 0.25 * inv(block.beta) * (d @ d))


def check_step_condition(block: OperatorBlock, rho: float, x, gz, cfg: StepConfig) -> float:
    """``4 ell^2 rho^2 + (1/beta + delta_hat) rho + (m rho ||x - Gz||)^2``."""
    r = block.m * rho * np.linalg.norm(np.asarray(x) - gz)
    return float(4.0 * block.ell ** 2 * rho ** 2 + (inv(block.beta) + cfg.delta_hat) * rho + r ** 2)


def graph_shortcut(block: OperatorBlock, z, w, cfg: StepConfig) -> Optional[BlockStepResult]:
    gz = block.G(z)
    if membership_residual(block, gz, w) > cfg.shortcut_tol:
        return None
    return BlockStepResult(cfg.rho_hat, gz.copy(), np.array(w, dtype=float), gz, w, 0.0,
                           Branch.GRAPH_SHORTCUT)


def half_forward_step(block: OperatorBlock, z, w, rho: float) -> BlockStepResult:
    if block.in_smooth_set:
        raise ConfigError("half-forward step requested for a block with a smooth part")
    bound = block.half_forward_rho_bound()
    if not 0 < rho < bound:
        raise ConfigError(f"rho = {rho} outside (0, {bound:.6g})")
    w = np.asarray(w, dtype=float)
    gz = block.G(z)
    b_gz = block.eval_B(gz)
    x = resolve_plain(block.A, rho, gz + rho * w - rho * (b_gz + block.eval_C(gz)))
    y = (gz - x) / rho + w + (block.eval_B(x) - b_gz)
    return BlockStepResult(rho, x, y, gz, w, delta(block, z, w, x, y), Branch.HALF_FORWARD)


def proximal_newton_step(block: OperatorBlock, z, w, cfg: StepConfig, warm_rho: float) -> BlockStepResult:
    if not block.in_smooth_set:
        raise ConfigError("proximal-Newton step requested for a block without a smooth part")
    w = np.asarray(w, dtype=float)
    reports = []
    spec = step_condition_spec(block, z, w, cfg, reports)
    found = bracket_bisect(spec, warm_rho, cfg.max_evals)
    rho, x, gz = found.rho, found.x, spec.z
    lin = block.linearize_D(gz)
    y = ((gz - x) / rho + w + (block.eval_B(x) - block.eval_B(gz))
         + (block.eval_D(x) - lin(x)))
    return BlockStepResult(
        rho, x, y, gz, w, delta(block, z, w, x, y), Branch.PROXIMAL_NEWTON,
        inner_iterations=sum(r.iterations for r in reports),
        evaluations=found.evaluations, eval_bound=found.eval_bound,
        condition=check_step_condition(block, rho, x, gz, cfg))


def block_step(block: OperatorBlock, z, w, cfg: StepConfig, rho: float) -> BlockStepResult:
    """Dispatch to the right branch. ``rho`` is the constant for blocks
    without ``D`` and the warm start for blocks with one."""
    short = graph_shortcut(block, z, w, cfg)
    if short is not None:
        return short
    if block.in_smooth_set:
        return proximal_newton_step(block, z, w, cfg, rho)
    return half_forward_step(block, z, w, rho)


# -- inequalities every step must satisfy -------------------------------------

def sandwich_slacks(block: OperatorBlock, step: BlockStepResult):
    """Slacks of ``(1 - rho ell)||x - Gz|| <= ||rho (y - w)|| <= (1 + rho ell)||x - Gz||``."""
    a = step.xres
    b = step.rho * step.yres
    rl = step.rho * block.ell
    return b - (1.0 - rl) * a, (1.0 + rl) * a - b


def half_forward_delta_bound(block: OperatorBlock, step: BlockStepResult,
                             rho_lo: float, rho_hi: float) -> float:
    """Explicit lower bound on ``delta`` for a block without ``D`` whose
    ``rho`` stays in ``[rho_lo, rho_hi]``."""
    c = 0.5 * (1.0 / rho_hi - (0.25 * inv(block.beta) + block.ell))
    ratio = rho_lo / (1.0 + rho_hi * block.ell)
    return c * (step.xres ** 2 + ratio ** 2 * step.yres ** 2)


def proximal_newton_delta_bound(step: BlockStepResult, theta_hi: float,
                                rho_min: float, rho_max: float) -> float:
    """Explicit lower bound on ``delta`` for a block with ``D``."""
    return (2.0 - theta_hi) / (4.0 * rho_max) * step.xres ** 2 + 0.5 * rho_min * step.yres ** 2


def delta_bound_constants(block: OperatorBlock, cfg: StepConfig, rho_lo: float, rho_hi: float):
    """``(c1, c2)`` with ``delta >= c1 ||x - Gz||^2 + c2 ||y - w||^2``."""
    if block.in_smooth_set:
        return (2.0 - cfg.theta_hi) / (4.0 * rho_hi), 0.5 * rho_lo
    c = 0.5 * (1.0 / rho_hi - (0.25 * inv(block.beta) + block.ell))
    return c, c * (rho_lo / (1.0 + rho_hi * block.ell)) ** 2


def inclusion_residual(block: OperatorBlock, step: BlockStepResult) -> float:
    """Resolvent residual of ``y - (B + D)(x) - C(Gz) in A(x)``."""
    if step.branch == Branch.GRAPH_SHORTCUT:
        return membership_residual(block, step.x, step.y)
    a = step.y - block.eval_B(step.x) - block.eval_D(step.x) - block.eval_C(step.gz)
    return membership_residual_A(block.A, step.x, a)

