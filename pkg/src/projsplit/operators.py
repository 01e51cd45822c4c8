"""Operator oracles for the four-block structure ``T = A + B + C + D``.

* ``A``: maximal monotone, accessed through its resolvent.
* ``B``: monotone and Lipschitz (``lipschitz``).
* ``C``: cocoercive (``beta``, possibly ``math.inf``).
* ``D``: monotone, continuously differentiable, with Lipschitz derivative
  (``hessian_lipschitz``).

All constants are computed when the oracle is built; callers may only make
them more conservative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .errors import ConfigError
from .hilbert import LinearMap, as_vec, operator_norm_bound

INF = math.inf
MONOTONE_EIG_TOL = 1e-10
# max |sigma''| over the real line
SIGMOID_CURVATURE = 1.0 / (6.0 * math.sqrt(3.0))


def inv(beta: float) -> float:
    """``1/beta`` with the convention ``1/inf = 0``."""
    return 0.0 if beta == INF else 1.0 / beta


def _square(M, name):
    M = np.atleast_2d(np.array(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ConfigError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ConfigError(f"{name} has non-finite entries")
    return M


def _check_monotone(M, name):
    sym = 0.5 * (M + M.T)
    lo = np.linalg.eigvalsh(sym).min() if M.size else 0.0
    if lo < -MONOTONE_EIG_TOL:
        raise ConfigError(f"{name} is not monotone: symmetric part has eigenvalue {lo:.3e} < 0")


# -- maximal monotone part ---------------------------------------------------

class MaxMonotone:
    """Maximal monotone operator known through its resolvent."""

    has_plain_resolvent = True
    has_linearized_resolvent = True
    dim: Optional[int] = None

    def resolvent(self, s, rho: float) -> np.ndarray:
        """``(I + rho A)^{-1}(s)``."""
        raise NotImplementedError

    def face(self, x):
        """Local affine description of ``A`` around a point ``x`` in its domain.

        Returns ``(pinned, pinned_values, free_value)``: coordinates in
        ``pinned`` are held at ``pinned_values``; on the others ``A`` is the
        single value ``free_value``. Used to polish inner solves.
        """
        return None

    def interval_1d(self, x: float):
        """``A(x)`` as a closed interval ``(lo, hi)`` for scalar ``x``, or
        ``None`` when ``x`` is outside the domain."""
        raise NotImplementedError

    def kinks_1d(self):
        return []

    def to_config(self) -> dict:
        raise NotImplementedError


class ZeroOperator(MaxMonotone):
    def resolvent(self, s, rho):
        return np.array(s, dtype=float)

    def face(self, x):
        x = np.asarray(x)
        return np.zeros(x.shape, bool), np.zeros(x.shape), np.zeros(x.shape)

    def interval_1d(self, x):
        return 0.0, 0.0

    def to_config(self):
        return {"type": "zero"}

    def __repr__(self):
        return "ZeroOperator()"


class L1Subdiff(MaxMonotone):
    """Subdifferential of ``x -> sum_j lam_j |x_j|``; resolvent is soft-thresholding."""

    def __init__(self, lam):
        lam = np.array(lam, dtype=float)
        if np.any(~np.isfinite(lam)) or np.any(lam <= 0):
            raise ConfigError("l1 weight lambda must be positive")
        self.lam = lam
        self.dim = lam.size if lam.ndim else None

    def resolvent(self, s, rho):
        s = np.asarray(s, dtype=float)
        return np.sign(s) * np.maximum(np.abs(s) - rho * self.lam, 0.0)

    def face(self, x):
        x = np.asarray(x, dtype=float)
        pinned = x == 0.0
        return pinned, np.zeros(x.shape), np.broadcast_to(self.lam, x.shape) * np.sign(x)

    def interval_1d(self, x):
        lam = float(np.ravel(self.lam)[0])
        if x > 0:
            return lam, lam
        if x < 0:
            return -lam, -lam
        return -lam, lam

    def kinks_1d(self):
        return [0.0]

    def to_config(self):
        return {"type": "l1", "lam": self.lam.tolist()}

    def __repr__(self):
        return f"L1Subdiff(lam={self.lam!r})"


class BoxNormalCone(MaxMonotone):
    """Normal cone of the box ``[lo, hi]``; resolvent is clamping."""

    def __init__(self, lo, hi):
        lo = np.array(lo, dtype=float).reshape(-1)
        hi = np.array(hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ConfigError("box bounds have different lengths")
        if np.any(lo > hi):
            raise ConfigError("box lower bound exceeds upper bound")
        self.lo, self.hi = lo, hi
        self.dim = lo.size

    def resolvent(self, s, rho):
        return np.clip(np.asarray(s, dtype=float), self.lo, self.hi)

    def face(self, x):
        x = np.asarray(x, dtype=float)
        at_lo = x == self.lo
        at_hi = x == self.hi
        pinned = at_lo | at_hi
        return pinned, np.where(at_lo, self.lo, self.hi), np.zeros(x.shape)

    def interval_1d(self, x):
        lo, hi = float(self.lo[0]), float(self.hi[0])
        if x < lo or x > hi:
            return None
        left = -INF if x == lo else 0.0
        right = INF if x == hi else 0.0
        return left, right

    def kinks_1d(self):
        return [float(self.lo[0]), float(self.hi[0])]

    def to_config(self):
        return {"type": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}

    def __repr__(self):
        return f"BoxNormalCone(lo={self.lo!r}, hi={self.hi!r})"


def make_l1_subdiff(lam) -> L1Subdiff:
    return L1Subdiff(lam)


def make_box_normal_cone(lo, hi) -> BoxNormalCone:
    return BoxNormalCone(lo, hi)


# -- single-valued parts -----------------------------------------------------

class LinearMonotone:
    """``B(x) = M x + offset`` with ``M + M^T`` positive semidefinite."""

    def __init__(self, M, offset=None, lipschitz=None):
        M = _square(M, "B matrix")
        _check_monotone(M, "B matrix")
        self.M = M
        self.offset = np.zeros(M.shape[0]) if offset is None else as_vec(offset)
        bound = operator_norm_bound(M)
        if lipschitz is None:
            lipschitz = bound
        elif lipschitz < bound / (1 + 1e-6):
            raise ConfigError(f"declared Lipschitz constant {lipschitz} is below ||M|| = {bound}")
        self.lipschitz = float(lipschitz)
        self.dim = M.shape[0]

    def __call__(self, x):
        return self.M @ x + self.offset

    def to_config(self):
        out = {"type": "linear", "M": self.M.tolist(), "lipschitz": self.lipschitz}
        if np.any(self.offset):
            out["offset"] = self.offset.tolist()
        return out


def make_linear_monotone(M) -> LinearMonotone:
    return LinearMonotone(M)


class QuadraticGradient:
    """``C(x) = Q x + q`` for symmetric PSD ``Q``; cocoercive with
    ``beta = 1/lambda_max(Q)`` (``inf`` when ``Q = 0``)."""

    def __init__(self, Q, q=None, beta=None):
        Q = _square(Q, "C matrix")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12):
            raise ConfigError("C matrix must be symmetric")
        eig = np.linalg.eigvalsh(Q)
        if eig.min() < -MONOTONE_EIG_TOL:
            raise ConfigError(f"C matrix is indefinite (eigenvalue {eig.min():.3e})")
        self.Q = Q
        self.q = np.zeros(Q.shape[0]) if q is None else as_vec(q)
        lmax = float(eig.max())
        true_beta = INF if lmax <= 0 else 1.0 / lmax
        if beta is None:
            beta = true_beta
        elif beta > true_beta * (1 + 1e-12):
            raise ConfigError(f"declared cocoercivity {beta} exceeds 1/lambda_max = {true_beta}")
        self.beta = float(beta)
        self.dim = Q.shape[0]

    def __call__(self, x):
        return self.Q @ x + self.q

    def to_config(self):
        return {"type": "quadratic", "Q": self.Q.tolist(), "q": self.q.tolist(),
                "beta": "inf" if self.beta == INF else self.beta}


def make_quadratic_gradient(Q, q=None) -> QuadraticGradient:
    return QuadraticGradient(Q, q)


class SmoothOperator:
    """Monotone ``C^1`` map with ``hessian_lipschitz``-Lipschitz derivative."""

    hessian_lipschitz: float = 0.0
    # Lipschitz constant of the map itself (used by the reference solver)
    gradient_lipschitz: Optional[float] = None
    dim: Optional[int] = None

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x) -> np.ndarray:
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


class Sigmoid(SmoothOperator):
    """Componentwise logistic sigmoid."""

    hessian_lipschitz = SIGMOID_CURVATURE
    gradient_lipschitz = 0.25

    def __init__(self, dim: Optional[int] = None):
        self.dim = dim

    def __call__(self, x):
        return expit(np.asarray(x, dtype=float))

    def jacobian(self, x):
        s = expit(np.asarray(x, dtype=float))
        return np.diag(s * (1.0 - s))

    def to_config(self):
        return {"type": "sigmoid", "dim": self.dim}


class LogisticGradient(SmoothOperator):
    """Gradient of ``h(z) = sum_j log(1 + exp(-y_j <a_j, z>))``."""

    def __init__(self, data, labels):
        data = np.atleast_2d(np.array(data, dtype=float))
        labels = np.array(labels, dtype=float).reshape(-1)
        if data.shape[0] != labels.size:
            raise ConfigError("logistic data rows do not match number of labels")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ConfigError("logistic labels must be -1 or +1")
        self.data = data
        self.labels = labels
        self.dim = data.shape[1]
        row_norms = np.linalg.norm(data, axis=1)
        self.hessian_lipschitz = float(SIGMOID_CURVATURE * np.sum(row_norms ** 3))
        self.gradient_lipschitz = 0.25 * operator_norm_bound(data) ** 2

    def __call__(self, x):
        margins = self.labels * (self.data @ x)
        return -self.data.T @ (self.labels * expit(-margins))

    def jacobian(self, x):
        s = expit(self.data @ x)
        return self.data.T @ ((s * (1.0 - s))[:, None] * self.data)

    def objective(self, x) -> float:
        return float(np.sum(np.logaddexp(0.0, -self.labels * (self.data @ x))))

    def to_config(self):
        return {"type": "logistic", "data": self.data.tolist(), "labels": self.labels.tolist()}


def make_logistic_gradient(data, labels) -> LogisticGradient:
    return LogisticGradient(data, labels)


# -- linearization -----------------------------------------------------------

@dataclass(frozen=True)
class Linearization:
    """Affine map ``x -> D(u) + D'(u)(x - u)``."""

    base: np.ndarray
    value: np.ndarray
    jacobian: np.ndarray

    def __call__(self, x):
        return self.value + self.jacobian @ (x - self.base)

    @property
    def offset(self) -> np.ndarray:
        """Constant term: the map equals ``jacobian @ x + offset``."""
        return self.value - self.jacobian @ self.base


def linearize(D: SmoothOperator, u) -> Linearization:
    u = as_vec(u)
    return Linearization(u, np.asarray(D(u), dtype=float), np.atleast_2d(D.jacobian(u)))


def zero_linearization(dim: int) -> Linearization:
    return Linearization(np.zeros(dim), np.zeros(dim), np.zeros((dim, dim)))


def linearization_error_bound_check(D: SmoothOperator, z, u, slack: float = 1e-12) -> bool:
    """``||D(z) - D_(u)(z)|| <= (m/2)||z - u||^2 + slack``."""
    z, u = as_vec(z), as_vec(u)
    err = np.linalg.norm(D(z) - linearize(D, u)(z))
    return bool(err <= 0.5 * D.hessian_lipschitz * np.linalg.norm(z - u) ** 2 + slack)


# -- block -------------------------------------------------------------------

@dataclass
class OperatorBlock:
    """One term ``G^* (A + B + C + D) G`` of the inclusion.

    ``B``, ``C`` and ``D`` may be ``None`` (zero). A ``D`` whose derivative
    is constant (``hessian_lipschitz == 0``) is folded into ``B``.
    """

    G: LinearMap
    A: MaxMonotone = None
    B: Optional[LinearMonotone] = None
    C: Optional[QuadraticGradient] = None
    D: Optional[SmoothOperator] = None

    def __post_init__(self):
        if not isinstance(self.G, LinearMap):
            self.G = LinearMap(self.G)
        if self.A is None:
            self.A = ZeroOperator()
        d = self.dim
        for name in ("A", "B", "C", "D"):
            op = getattr(self, name)
            op_dim = getattr(op, "dim", None)
            if op_dim is not None and op_dim != d:
                raise ConfigError(f"{name} acts on dimension {op_dim}, block has {d}")
        if self.D is not None and self.D.hessian_lipschitz == 0:
            self._fold_affine_D()

    def _fold_affine_D(self):
        d = self.dim
        jac = np.atleast_2d(self.D.jacobian(np.zeros(d)))
        const = np.asarray(self.D(np.zeros(d)), dtype=float)
        if self.B is None:
            M, off = jac, const
        else:
            M, off = self.B.M + jac, self.B.offset + const
        self.B = LinearMonotone(M, off) if np.any(M) or np.any(off) else None
        self.D = None

    @property
    def dim(self) -> int:
        return self.G.dim_out

    @property
    def ell(self) -> float:
        return 0.0 if self.B is None else self.B.lipschitz

    @property
    def beta(self) -> float:
        return INF if self.C is None else self.C.beta

    @property
    def m(self) -> float:
        return 0.0 if self.D is None else self.D.hessian_lipschitz

    @property
    def in_smooth_set(self) -> bool:
        return self.D is not None and self.m > 0

    def eval_B(self, x):
        return np.zeros_like(x, dtype=float) if self.B is None else self.B(x)

    def eval_C(self, x):
        return np.zeros_like(x, dtype=float) if self.C is None else self.C(x)

    def eval_D(self, x):
        return np.zeros_like(x, dtype=float) if self.D is None else self.D(x)

    def single_valued(self, x):
        """``(B + C + D)(x)``."""
        return self.eval_B(x) + self.eval_C(x) + self.eval_D(x)

    def linearize_D(self, u) -> Linearization:
        if self.D is None:
            return zero_linearization(self.dim)
        return linearize(self.D, u)

    def half_forward_rho_bound(self) -> float:
        """Supremum ``1/(1/(4 beta) + ell)`` allowed for non-smooth blocks."""
        denom = 0.25 * inv(self.beta) + self.ell
        return INF if denom == 0 else 1.0 / denom
