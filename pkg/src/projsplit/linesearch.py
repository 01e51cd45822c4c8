"""Bracketing/bisection search for a proximal parameter.

Given a resolvent oracle ``rho -> J_{rho T}(z)``, find ``rho > 0`` with

    theta_minus <= psi(rho) <= theta_plus,
    psi(rho) = a rho^2 + b rho + weight * (rho ||J_{rho T}(z) - z||)^2.

``psi`` grows at least linearly and at most quartically in ``rho``, so one
evaluation outside the window brackets the whole acceptance interval, and
geometric-mean bisection then lands inside it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import BisectionFailure, ConfigError, ZeroResidual
from .operators import OperatorBlock, inv
from .resolvents import LinearizedResolventQuery, resolve_linearized

MAX_EVALS = 64


@dataclass(frozen=True)
class PsiSpec:
    a: float
    b: float
    theta_minus: float
    theta_plus: float
    resolvent: Callable[[float], np.ndarray]
    z: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        if self.a < 0 or self.b < 0 or self.weight < 0:
            raise ConfigError("psi coefficients must be nonnegative")
        if not 0 < self.theta_minus < self.theta_plus:
            raise ConfigError("need 0 < theta_minus < theta_plus")


@dataclass
class Bracket:
    t_minus: float
    t_plus: float
    evaluations: int = 0


@dataclass
class LineSearchResult:
    rho: float
    x: np.ndarray
    psi: float
    evaluations: int
    bracket: Optional[Bracket]
    eval_bound: int
    # (t_minus, t_plus) right after the first evaluation, before bisection
    initial_bracket: Optional[tuple] = None


def psi_value(spec: PsiSpec, rho: float):
    """``(psi(rho), J_{rho T}(z))``."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    x = spec.resolvent(rho)
    r = rho * np.linalg.norm(x - spec.z)
    return spec.a * rho ** 2 + spec.b * rho + spec.weight * r ** 2, x


def psi(spec: PsiSpec, rho: float) -> float:
    return psi_value(spec, rho)[0]


def termination_bound(t_minus: float, t_plus: float, theta_minus: float, theta_plus: float) -> int:
    """Maximum number of psi evaluations, counting the initial one, once the
    bracket ``[t_minus, t_plus]`` is known.

    Each failed candidate halves ``log(t_plus/t_minus)``; the acceptance
    window always fits inside and has log-width at least
    ``log(theta_plus/theta_minus)/4``.
    """
    width = math.log(t_plus / t_minus)
    window = 0.25 * math.log(theta_plus / theta_minus)
    if width <= window:
        return 2
    return 2 + math.ceil(math.log2(width / window))


def bracket_bisect(spec: PsiSpec, rho0: float, max_evals: int = MAX_EVALS) -> LineSearchResult:
    if not rho0 > 0:
        raise ValueError("rho0 must be positive")
    lo, hi = spec.theta_minus, spec.theta_plus
    val, x = psi_value(spec, rho0)
    evals = 1
    if lo <= val <= hi:
        return LineSearchResult(rho0, x, val, evals, None, 1)
    if val <= 0.0:
        raise ZeroResidual(f"psi({rho0:g}) = 0: the base point is a zero of the operator")
    if val < lo:
        bracket = Bracket(rho0, rho0 * hi / val, evals)
    else:
        bracket = Bracket(rho0 * lo / val, rho0, evals)
    initial = (bracket.t_minus, bracket.t_plus)
    bound = termination_bound(*initial, lo, hi)

    while evals < max_evals:
        rho = math.sqrt(bracket.t_minus * bracket.t_plus)
        val, x = psi_value(spec, rho)
        evals += 1
        bracket.evaluations = evals
        if lo <= val <= hi:
            return LineSearchResult(rho, x, val, evals, bracket, bound, initial)
        if val > hi:
            bracket.t_plus = rho
        else:
            bracket.t_minus = rho
    raise BisectionFailure(
        f"no acceptable rho after {evals} psi evaluations "
        f"(bracket [{bracket.t_minus:.6g}, {bracket.t_plus:.6g}])", bracket=bracket)


def linearized_resolvent_oracle(block: OperatorBlock, z, w, tol: float, max_iter: int,
                                reports: Optional[list] = None):
    """``rho -> J_{rho(A + D_(Gz))}(Gz + rho w - rho (B + C)(Gz))``, which is the
    resolvent of ``T_hat(x) = A(x) + D_(Gz)(x) + (B + C)(Gz) - w`` at ``Gz``."""
    gz = block.G(z)
    lin = block.linearize_D(gz)
    shift = np.asarray(w, dtype=float) - block.eval_B(gz) - block.eval_C(gz)

    def oracle(rho):
        x, report = resolve_linearized(
            LinearizedResolventQuery(rho, block.A, lin, gz + rho * shift), tol=tol, max_iter=max_iter)
        if reports is not None:
            reports.append(report)
        return x

    return oracle, gz


def step_condition_spec(block: OperatorBlock, z, w, cfg, reports: Optional[list] = None) -> PsiSpec:
    """The raw step condition ``theta_lo <= 4 ell^2 rho^2 + (1/beta + delta) rho
    + (m rho ||x - Gz||)^2 <= theta_hi`` as a :class:`PsiSpec`."""
    if block.m <= 0:
        raise ConfigError("step condition search needs a block with m > 0")
    if not cfg.delta_hat > 0:
        raise ConfigError("delta_hat must be positive")
    oracle, gz = linearized_resolvent_oracle(block, z, w, cfg.inner_tol, cfg.max_inner_iterations, reports)
    return PsiSpec(a=4.0 * block.ell ** 2, b=inv(block.beta) + cfg.delta_hat,
                   theta_minus=cfg.theta_lo, theta_plus=cfg.theta_hi,
                   resolvent=oracle, z=gz, weight=block.m ** 2)


def reduce_problem_a(block: OperatorBlock, z, w, cfg, reports: Optional[list] = None) -> PsiSpec:
    """Problem-B form of the step condition: every coefficient divided by ``m^2``."""
    raw = step_condition_spec(block, z, w, cfg, reports)
    m2 = block.m ** 2
    return PsiSpec(a=raw.a / m2, b=raw.b / m2, theta_minus=raw.theta_minus / m2,
                   theta_plus=raw.theta_plus / m2, resolvent=raw.resolvent, z=raw.z)
