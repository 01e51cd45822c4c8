"""Finite-dimensional Hilbert spaces, the gamma-weighted product space and
orthogonal projection onto the graph of a linear map.

Vectors are plain 1-D float numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import ConfigError

NORM_RTOL = 1e-8
NORM_INFLATION = 1.0 + 1e-6
EXACT_NORM_MAX_DIM = 200


def as_vec(x) -> np.ndarray:
    v = np.array(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ConfigError("vector has non-finite entries")
    return v


def operator_norm_bound(M, rtol: float = NORM_RTOL, max_iter: int = 10000) -> float:
    """Upper bound on the spectral norm of ``M``.

    Power iteration on ``M^T M`` until the estimate stalls to ``rtol``,
    inflated by ``NORM_INFLATION``. Falls back to an SVD when the iteration
    does not settle.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0 or not np.any(M):
        return 0.0
    n = M.shape[1]
    x = np.linspace(1.0, 2.0, n)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iter):
        y = M.T @ (M @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            break
        new = np.sqrt(ny)
        x = y / ny
        if abs(new - est) <= rtol * new:
            est = new
            break
        est = new
    else:
        est = np.linalg.norm(M, 2)
    if max(M.shape) <= EXACT_NORM_MAX_DIM:
        # stalled power iteration can sit below sigma_max when the top
        # singular values cluster; cheap to rule out at desk scale
        est = max(est, float(np.linalg.norm(M, 2)))
    return float(est * NORM_INFLATION)


@dataclass(frozen=True)
class LinearMap:
    """Dense linear map ``G: R^cols -> R^rows`` with a cached norm bound."""

    matrix: np.ndarray
    norm_bound: float = field(default=-1.0)

    def __post_init__(self):
        M = np.atleast_2d(np.array(self.matrix, dtype=float))
        if not np.all(np.isfinite(M)):
            raise ConfigError("linear map has non-finite entries")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)
        if self.norm_bound < 0:
            object.__setattr__(self, "norm_bound", operator_norm_bound(M))

    @classmethod
    def identity(cls, dim: int) -> "LinearMap":
        return cls(np.eye(dim), norm_bound=1.0)

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def dim_in(self) -> int:
        return self.matrix.shape[1]

    @property
    def dim_out(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_identity(self) -> bool:
        M = self.matrix
        return M.shape[0] == M.shape[1] and np.array_equal(M, np.eye(M.shape[0]))

    def __call__(self, x) -> np.ndarray:
        return self.matrix @ x

    def adjoint(self, y) -> np.ndarray:
        return self.matrix.T @ y


@dataclass(frozen=True)
class BlockPoint:
    """A point ``p = (z, w_1, ..., w_{n-1})`` of the product space.

    ``w_n`` is never stored; use :func:`derived_wn`.
    """

    z: np.ndarray
    w: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "z", as_vec(self.z))
        object.__setattr__(self, "w", tuple(as_vec(wi) for wi in self.w))

    @property
    def n_blocks(self) -> int:
        return len(self.w) + 1

    def flat(self) -> np.ndarray:
        return np.concatenate([self.z, *self.w]) if self.w else self.z.copy()

    def __sub__(self, other: "BlockPoint") -> "BlockPoint":
        _check_compatible(self, other)
        return BlockPoint(self.z - other.z, tuple(a - b for a, b in zip(self.w, other.w)))

    def __add__(self, other: "BlockPoint") -> "BlockPoint":
        _check_compatible(self, other)
        return BlockPoint(self.z + other.z, tuple(a + b for a, b in zip(self.w, other.w)))

    def scaled(self, t: float) -> "BlockPoint":
        return BlockPoint(t * self.z, tuple(t * wi for wi in self.w))

    def to_json(self) -> dict:
        return {"z": self.z.tolist(), "w": [wi.tolist() for wi in self.w]}

    @classmethod
    def from_json(cls, data: dict) -> "BlockPoint":
        return cls(data["z"], tuple(data.get("w", ())))


def _check_compatible(p: BlockPoint, q: BlockPoint):
    if p.z.shape != q.z.shape or len(p.w) != len(q.w):
        raise ValueError("block points have different structure")
    for a, b in zip(p.w, q.w):
        if a.shape != b.shape:
            raise ValueError("block points have different block dimensions")


def gamma_inner(p: BlockPoint, q: BlockPoint, gamma: float) -> float:
    """``gamma <z, z'> + sum_i <w_i, w_i'>``."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    _check_compatible(p, q)
    return float(gamma * (p.z @ q.z) + sum(a @ b for a, b in zip(p.w, q.w)))


def gamma_norm(p: BlockPoint, gamma: float) -> float:
    return float(np.sqrt(max(gamma_inner(p, p, gamma), 0.0)))


def derived_wn(p: BlockPoint, G: Sequence[LinearMap]) -> np.ndarray:
    """``w_n = -sum_{i<n} G_i^* w_i``; the zero vector when there is one block."""
    if len(G) != len(p.w):
        raise ValueError(f"expected {len(p.w)} linear maps, got {len(G)}")
    out = np.zeros_like(p.z)
    for Gi, wi in zip(G, p.w):
        if Gi.dim_out != wi.shape[0] or Gi.dim_in != p.z.shape[0]:
            raise ValueError("linear map does not match block dimensions")
        out -= Gi.adjoint(wi)
    return out


def graph_project(z, w, G: LinearMap):
    """Orthogonal projections of ``(z, w)`` onto the graph of ``G`` and its
    orthogonal complement.

    Returns ``((pz, pw), (qz, qw))`` with ``(pz, pw) = P(z, w)`` and
    ``(qz, qw) = P_perp(z, w)``.
    """
    z = as_vec(z)
    w = as_vec(w)
    M = G.matrix
    if M.shape != (w.shape[0], z.shape[0]):
        raise ValueError("dimension mismatch in graph_project")
    small = np.eye(M.shape[1]) + M.T @ M
    big = np.eye(M.shape[0]) + M @ M.T
    t = scipy.linalg.cho_solve(scipy.linalg.cho_factor(small), z + M.T @ w)
    s = scipy.linalg.cho_solve(scipy.linalg.cho_factor(big), M @ z - w)
    return (t, M @ t), (M.T @ s, -s)
