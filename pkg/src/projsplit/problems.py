"""Test-problem catalog, an engine-independent reference solver, and the
solution certificate.

A certificate for ``p = (z, w_1, ..., w_{n-1})`` checks ``w_i in T_i(G_i z)``
for every block, with ``w_n = -sum_{i<n} G_i^* w_i``, through the resolvent
membership residual. The reference solver never calls the engine: scalar
problems are solved by bisection on the interval-valued total operator and
everything else by proximal-gradient (or forward-backward-forward when a
skew part is present) on the last block's nonsmooth term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .engine import ProblemSpec
from .errors import ConfigError, OracleFailure
from .hilbert import BlockPoint, LinearMap
from .operators import (
    INF,
    BoxNormalCone,
    L1Subdiff,
    LinearMonotone,
    LogisticGradient,
    OperatorBlock,
    QuadraticGradient,
    Sigmoid,
    ZeroOperator,
    inv,
)
from .resolvents import membership_residual

CERTIFY_TOL = 1e-8
ORACLE_TOL = 1e-12
MAX_ORACLE_ITERATIONS = 500000
MAX_ROWS, MAX_COLS = 500, 50


@dataclass
class ProblemInstance:
    name: str
    spec: ProblemSpec
    known_solution: Optional[BlockPoint] = None
    provenance: str = "oracle_solved"  # or "closed_form"
    seed: Optional[int] = None
    # catalog parameters that rebuild this instance, when it came from the catalog
    params: dict = field(default_factory=dict)


# -- certificate ---------------------------------------------------------------

def certify_solution(inst: ProblemInstance, p: BlockPoint, tol: float = CERTIFY_TOL):
    """``(ok, residuals)`` where ``residuals[i]`` is the membership residual
    of ``w_i in T_i(G_i z)``."""
    spec = inst.spec
    if p.z.shape[0] != spec.dim or len(p.w) != spec.n - 1:
        raise ConfigError("point does not match the problem structure")
    res = [membership_residual(b, b.G(p.z), wi) for b, wi in zip(spec.blocks, spec.all_w(p))]
    return all(r <= tol for r in res), res


# -- catalog -------------------------------------------------------------------

def _identity_block(dim=1, **ops) -> OperatorBlock:
    return OperatorBlock(G=LinearMap.identity(dim), **ops)


def scalar_lasso() -> ProblemInstance:
    """``0 in d|z| + (z - 2)``: solution ``z = 1`` with ``w_1 = C(1) = -1``."""
    spec = ProblemSpec([
        _identity_block(C=QuadraticGradient([[1.0]], [-2.0])),
        _identity_block(A=L1Subdiff([1.0])),
    ])
    sol = BlockPoint(np.array([1.0]), (np.array([-1.0]),))
    return ProblemInstance("scalar_suite_1", spec, sol, "closed_form", params={"catalog": "scalar_suite_1"})


def scalar_box_sigmoid() -> ProblemInstance:
    """``0 in N_[0,1](z) + sigmoid(z) - 0.4``.

    The unconstrained root ``logit(0.4) < 0`` is clipped to ``z = 0``, where
    ``w_1 = sigmoid(0) - 0.4 = 0.1`` and ``-0.1`` lies in the normal cone.
    """
    spec = ProblemSpec([
        _identity_block(C=QuadraticGradient([[0.0]], [-0.4]), D=Sigmoid(1)),
        _identity_block(A=BoxNormalCone([0.0], [1.0])),
    ])
    sol = BlockPoint(np.array([0.0]), (np.array([0.1]),))
    return ProblemInstance("scalar_suite_2", spec, sol, "closed_form", params={"catalog": "scalar_suite_2"})


SADDLE_COUPLING = [[1.0, 0.5], [0.0, 1.0]]
SADDLE_TARGET = [2.0, -0.5]


def skew_saddle() -> ProblemInstance:
    """Two-block saddle: a skew map seen through a shear, plus a box and a
    strongly monotone pull toward a target outside it."""
    spec = ProblemSpec([
        OperatorBlock(G=LinearMap(np.array(SADDLE_COUPLING)),
                      B=LinearMonotone([[0.0, 1.0], [-1.0, 0.0]])),
        _identity_block(2, A=BoxNormalCone([-1.0, -1.0], [1.0, 1.0]),
                        C=QuadraticGradient(np.eye(2), -np.array(SADDLE_TARGET))),
    ])
    inst = ProblemInstance("scalar_suite_3", spec, None, "oracle_solved", params={"catalog": "scalar_suite_3"})
    return inst


def build_scalar_suite() -> List[ProblemInstance]:
    return [scalar_lasso(), scalar_box_sigmoid(), skew_saddle()]


def build_l1_logistic(data, labels, lam: float, ridge: float = 0.0, n_blocks: int = 1,
                      seed: int = 0) -> ProblemInstance:
    """``min lam ||z||_1 + (ridge/2)||z||^2 + sum_j log(1 + exp(-y_j <a_j, z>))``.

    With one block everything sits in that block. Otherwise the samples are
    split at random (using ``seed``) over the first ``n_blocks - 1`` blocks,
    each holding the logistic gradient of its share, and the last block
    holds the l1 term and the ridge.
    """
    data = np.atleast_2d(np.array(data, dtype=float))
    labels = np.array(labels, dtype=float).reshape(-1)
    rows, cols = data.shape
    if not (isinstance(lam, (int, float)) and lam > 0 and math.isfinite(lam)):
        raise ConfigError("lambda must be a positive number")
    if not ridge >= 0:
        raise ConfigError("ridge must be nonnegative")
    if n_blocks < 1:
        raise ConfigError("n_blocks must be at least 1")
    if rows != labels.size or rows == 0:
        raise ConfigError("need one label per data row and at least one row")
    if rows > MAX_ROWS or cols > MAX_COLS:
        raise ConfigError(f"instance is {rows}x{cols}; at most {MAX_ROWS}x{MAX_COLS} supported")
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise ConfigError("labels must be -1 or +1")
    if n_blocks > 1 and rows < n_blocks - 1:
        raise ConfigError(f"{rows} samples cannot fill {n_blocks - 1} logistic blocks")

    C = QuadraticGradient(ridge * np.eye(cols)) if ridge > 0 else None
    A = L1Subdiff(np.full(cols, float(lam)))
    if n_blocks == 1:
        blocks = [_identity_block(cols, A=A, C=C, D=LogisticGradient(data, labels))]
    else:
        order = np.random.default_rng(seed).permutation(rows)
        parts = np.array_split(order, n_blocks - 1)
        blocks = [_identity_block(cols, D=LogisticGradient(data[idx], labels[idx])) for idx in parts]
        blocks.append(_identity_block(cols, A=A, C=C))
    params = {"catalog": "l1_logistic", "lam": float(lam), "ridge": float(ridge),
              "n_blocks": int(n_blocks), "seed": int(seed)}
    return ProblemInstance(f"l1_logistic_n{n_blocks}", ProblemSpec(blocks), None, "oracle_solved",
                           seed=seed, params=params)


def random_l1_logistic(n_samples: int = 200, dim: int = 20, n_blocks: int = 2, lam: float = 1.0,
                       ridge: float = 0.0, seed: int = 0) -> ProblemInstance:
    """Synthetic sparse classification data from ``seed``."""
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((n_samples, dim)) / math.sqrt(dim)
    truth = np.zeros(dim)
    support = rng.choice(dim, size=max(1, dim // 5), replace=False)
    truth[support] = 3.0 * rng.standard_normal(support.size)
    noisy = data @ truth + 0.5 * rng.standard_normal(n_samples)
    labels = np.where(noisy >= 0, 1.0, -1.0)
    if np.all(labels == labels[0]):
        labels[0] = -labels[0]
    inst = build_l1_logistic(data, labels, lam, ridge, n_blocks, seed)
    inst.params.update({"catalog": "random_l1_logistic", "n_samples": n_samples, "dim": dim})
    return inst


CATALOG = {
    "scalar_suite_1": scalar_lasso,
    "scalar_suite_2": scalar_box_sigmoid,
    "scalar_suite_3": skew_saddle,
    "random_l1_logistic": random_l1_logistic,
}


# -- reference solver ----------------------------------------------------------

def reference_solve(inst: ProblemInstance, tol: float = ORACLE_TOL,
                    max_iter: int = MAX_ORACLE_ITERATIONS) -> BlockPoint:
    """High-accuracy solution computed without the engine, certified at 1e-8."""
    if inst.known_solution is not None:
        return inst.known_solution
    spec = inst.spec
    blocks = spec.blocks
    if spec.dim == 1 and all(b.dim == 1 for b in blocks):
        p = _bisection_1d(spec)
    elif all(isinstance(b.A, ZeroOperator) and b.B is None and b.D is None for b in blocks):
        p = _quadratic_solve(spec)
    elif all(isinstance(b.A, ZeroOperator) for b in blocks[:-1]):
        z = _last_block_solve(spec, tol, max_iter)
        p = BlockPoint(z, tuple(b.single_valued(b.G(z)) for b in blocks[:-1]))
    else:
        raise OracleFailure("no reference method for a nonsmooth term outside the last block")
    ok, res = certify_solution(inst, p, CERTIFY_TOL)
    if not ok:
        raise OracleFailure(f"reference solution failed its certificate (residuals {res})")
    return p


def _quadratic_solve(spec: ProblemSpec) -> BlockPoint:
    d = spec.dim
    K, r = np.zeros((d, d)), np.zeros(d)
    for b in spec.blocks:
        G = b.G.matrix
        Q = np.zeros((b.dim, b.dim)) if b.C is None else b.C.Q
        q = np.zeros(b.dim) if b.C is None else b.C.q
        K += G.T @ Q @ G
        r += G.T @ q
    try:
        z = np.linalg.solve(K, -r)
    except np.linalg.LinAlgError as err:
        raise OracleFailure(f"quadratic system is singular: {err}") from err
    return BlockPoint(z, tuple(b.single_valued(b.G(z)) for b in spec.blocks[:-1]))


def _smooth_total(spec: ProblemSpec):
    """``z -> sum_i G_i^*(B_i + C_i + D_i)(G_i z)`` and a Lipschitz constant."""
    lip = 0.0
    for b in spec.blocks:
        dl = 0.0
        if b.D is not None:
            if b.D.gradient_lipschitz is None:
                raise OracleFailure("smooth operator without a Lipschitz constant")
            dl = b.D.gradient_lipschitz
        lip += b.G.norm_bound ** 2 * (b.ell + inv(b.beta) + dl)

    def F(z):
        return sum((b.G.adjoint(b.single_valued(b.G(z))) for b in spec.blocks), np.zeros_like(z))

    return F, lip


def _last_block_solve(spec: ProblemSpec, tol: float, max_iter: int) -> np.ndarray:
    """Zero of ``A_n + F`` with ``F`` the sum of all single-valued parts.

    Without skew parts ``F`` is a gradient and accelerated proximal-gradient
    with gradient restarts is used; otherwise forward-backward-forward.
    Stops when the fixed-point residual of the prox step, divided by the step
    size, is at most ``tol``.
    """
    A = spec.blocks[-1].A
    F, lip = _smooth_total(spec)
    z = np.zeros(spec.dim)
    if lip == 0:
        return A.resolvent(z, 1.0)
    gradient_case = all(b.B is None for b in spec.blocks)
    best = math.inf
    if gradient_case:
        t = 1.0 / lip
        y, mom = z.copy(), 1.0
        for _ in range(max_iter):
            fz = F(z)
            res = np.linalg.norm(z - A.resolvent(z - t * fz, t)) / t
            best = min(best, res)
            if res <= tol:
                return z
            z_next = A.resolvent(y - t * F(y), t)
            mom_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * mom * mom))
            if (y - z_next) @ (z_next - z) > 0:  # restart on non-descent
                mom_next, y = 1.0, z_next.copy()
            else:
                y = z_next + ((mom - 1.0) / mom_next) * (z_next - z)
            z, mom = z_next, mom_next
    else:
        t = 0.9 / lip
        for _ in range(max_iter):
            fz = F(z)
            x = A.resolvent(z - t * fz, t)
            res = np.linalg.norm(z - x) / t
            best = min(best, res)
            if res <= tol:
                return z
            z = x - t * (F(x) - fz)
    raise OracleFailure(f"reference solver stalled at residual {best:.3e} (target {tol:g})")


# scalar problems: monotone bisection on the interval-valued total operator

def _block_interval(b: OperatorBlock, z: float):
    """``G_i * T_i(G_i z)`` as an interval, or ``None`` off the domain."""
    g = float(b.G.matrix[0, 0])
    x = g * z
    iv = b.A.interval_1d(x)
    if iv is None:
        return None
    sv = float(b.single_valued(np.array([x]))[0])
    lo, hi = sv + iv[0], sv + iv[1]
    return (g * lo, g * hi) if g >= 0 else (g * hi, g * lo)


def _total_interval(spec: ProblemSpec, z: float):
    lo = hi = 0.0
    for b in spec.blocks:
        iv = _block_interval(b, z)
        if iv is None:
            return None
        lo, hi = lo + iv[0], hi + iv[1]
    return lo, hi


def _domain_1d(spec: ProblemSpec):
    lo, hi = -INF, INF
    for b in spec.blocks:
        g = float(b.G.matrix[0, 0])
        if isinstance(b.A, BoxNormalCone) and g != 0:
            a, c = sorted((float(b.A.lo[0]) / g, float(b.A.hi[0]) / g))
            lo, hi = max(lo, a), min(hi, c)
    if lo > hi:
        raise OracleFailure("empty domain")
    return lo, hi


def _sign_1d(spec: ProblemSpec, z: float, dom) -> int:
    """-1 if the total operator is negative at ``z``, +1 if positive, 0 if it
    contains zero. Points left (right) of the domain count as -1 (+1)."""
    if z < dom[0]:
        return -1
    if z > dom[1]:
        return 1
    lo, hi = _total_interval(spec, z)
    if lo > 0:
        return 1
    if hi < 0:
        return -1
    return 0


def _bisection_1d(spec: ProblemSpec) -> BlockPoint:
    dom = _domain_1d(spec)
    a, b = -1.0, 1.0
    for _ in range(1100):
        if _sign_1d(spec, a, dom) <= 0:
            break
        a *= 2.0
    for _ in range(1100):
        if _sign_1d(spec, b, dom) >= 0:
            break
        b *= 2.0
    sa, sb = _sign_1d(spec, a, dom), _sign_1d(spec, b, dom)
    if sa > 0 or sb < 0:
        raise OracleFailure("could not bracket a zero of the total operator")
    z = a if sa == 0 else (b if sb == 0 else None)
    while z is None:
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        s = _sign_1d(spec, mid, dom)
        if s == 0:
            z = mid
        elif s < 0:
            a = mid
        else:
            b = mid
    if z is None:
        z = _snap(spec, a, b, dom)
    return BlockPoint(np.array([z]), tuple(np.array([wi]) for wi in _allocate_duals(spec, z)[:-1]))


def _snap(spec, a, b, dom):
    """After bisection collapses, prefer a kink or domain end inside the
    final bracket, since zeros at kinks are typical."""
    cands = [x for x in dom if math.isfinite(x)]
    for blk in spec.blocks:
        g = float(blk.G.matrix[0, 0])
        if g != 0:
            cands += [k / g for k in blk.A.kinks_1d()]
    width = max(b - a, 1e-15 * max(1.0, abs(a)))
    for c in sorted(cands, key=lambda c: abs(c - 0.5 * (a + b))):
        if a - width <= c <= b + width and _sign_1d(spec, c, dom) == 0:
            return c
    return 0.5 * (a + b)


def _allocate_duals(spec: ProblemSpec, z: float) -> List[float]:
    """Pick ``w_i in T_i(G_i z)`` with ``sum g_i w_i = 0``.

    Each block contributes the interval ``g_i T_i(g_i z)``; infinite ends are
    replaced by finite ones far enough out that zero stays inside the sum,
    then the same convex combination of endpoints is taken in every block.
    """
    ivs = []
    for b in spec.blocks:
        iv = _block_interval(b, z)
        if iv is None:
            raise OracleFailure("bisection point left the domain")
        ivs.append(list(iv))
    reach = 1.0 + 2.0 * sum(abs(e) for iv in ivs for e in iv if math.isfinite(e))
    for iv in ivs:
        lo_inf, hi_inf = not math.isfinite(iv[0]), not math.isfinite(iv[1])
        if lo_inf and hi_inf:
            iv[0], iv[1] = -reach, reach
        elif lo_inf:
            iv[0] = iv[1] - reach
        elif hi_inf:
            iv[1] = iv[0] + reach
    s_lo = sum(iv[0] for iv in ivs)
    s_hi = sum(iv[1] for iv in ivs)
    t = 0.0 if s_hi == s_lo else min(1.0, max(0.0, -s_lo / (s_hi - s_lo)))
    out = []
    for b, iv in zip(spec.blocks, ivs):
        g = float(b.G.matrix[0, 0])
        c = iv[0] + t * (iv[1] - iv[0])
        if g == 0:
            own = b.A.interval_1d(0.0)
            sv = float(b.single_valued(np.zeros(1))[0])
            lo = own[0] if math.isfinite(own[0]) else (own[1] if math.isfinite(own[1]) else 0.0)
            out.append(sv + lo)
        else:
            out.append(c / g)
    return out


# -- serialization -------------------------------------------------------------

def _matrix(x, dim=None, name="matrix"):
    M = np.atleast_2d(np.array(x, dtype=float))
    if dim is not None and M.shape != (dim, dim):
        raise ConfigError(f"{name} must be {dim}x{dim}, got {M.shape}")
    return M


def _beta(value):
    if value is None:
        return None
    if value == "inf":
        return INF
    return float(value)


def operator_from_config(kind: str, cfg: Optional[dict], dim: int):
    if cfg is None:
        return None
    t = cfg.get("type")
    try:
        if kind == "A":
            if t == "zero":
                return ZeroOperator()
            if t == "l1":
                lam = np.array(cfg["lam"], dtype=float)
                return L1Subdiff(np.broadcast_to(lam, (dim,)).copy())
            if t == "box":
                lo = np.broadcast_to(np.array(cfg["lo"], dtype=float), (dim,))
                hi = np.broadcast_to(np.array(cfg["hi"], dtype=float), (dim,))
                return BoxNormalCone(lo, hi)
        elif kind == "B" and t == "linear":
            return LinearMonotone(_matrix(cfg["M"], dim, "B.M"), cfg.get("offset"), cfg.get("lipschitz"))
        elif kind == "C" and t == "quadratic":
            return QuadraticGradient(_matrix(cfg["Q"], dim, "C.Q"), cfg.get("q"), _beta(cfg.get("beta")))
        elif kind == "D":
            if t == "sigmoid":
                return Sigmoid(dim)
            if t == "logistic":
                return LogisticGradient(cfg["data"], cfg["labels"])
    except KeyError as err:
        raise ConfigError(f"operator {kind} of type {t!r} is missing field {err}") from None
    raise ConfigError(f"unknown operator type {t!r} for {kind}")


def block_from_config(cfg: dict) -> OperatorBlock:
    G = cfg.get("G", "identity")
    if G == "identity":
        if "dim" not in cfg:
            raise ConfigError("identity block needs 'dim'")
        gmap = LinearMap.identity(int(cfg["dim"]))
    else:
        gmap = LinearMap(_matrix(G, name="G"))
    d = gmap.dim_out
    return OperatorBlock(G=gmap, **{k: operator_from_config(k, cfg.get(k), d) for k in "ABCD"})


def block_to_config(b: OperatorBlock) -> dict:
    out = {"G": "identity" if b.G.is_identity else b.G.matrix.tolist(), "dim": b.dim}
    for k in "ABCD":
        op = getattr(b, k)
        if op is not None and not isinstance(op, ZeroOperator):
            out[k] = op.to_config()
    return out


def point_from_config(cfg) -> BlockPoint:
    return BlockPoint.from_json(cfg)


def instance_from_config(cfg: dict) -> ProblemInstance:
    """Build from ``{"catalog": name, ...params}`` or
    ``{"name": ..., "blocks": [...], "known_solution": ...}``."""
    if "catalog" in cfg:
        params = dict(cfg)
        name = params.pop("catalog")
        if name == "l1_logistic":
            try:
                data, labels = params.pop("data"), params.pop("labels")
            except KeyError as err:
                raise ConfigError(f"l1_logistic needs {err}") from None
            return build_l1_logistic(data, labels, **params)
        if name not in CATALOG:
            raise ConfigError(f"unknown catalog problem {name!r}; known: {sorted(CATALOG)}")
        try:
            return CATALOG[name](**params)
        except TypeError as err:
            raise ConfigError(f"bad parameters for {name}: {err}") from None
    if "blocks" not in cfg:
        raise ConfigError("problem needs either 'catalog' or 'blocks'")
    spec = ProblemSpec([block_from_config(b) for b in cfg["blocks"]])
    known = cfg.get("known_solution")
    inst = ProblemInstance(cfg.get("name", "inline"), spec,
                           None if known is None else point_from_config(known),
                           "closed_form" if known is not None else "oracle_solved")
    if inst.known_solution is not None:
        ok, res = certify_solution(inst, inst.known_solution)
        if not ok:
            raise ConfigError(f"known_solution fails its certificate (residuals {res})")
    return inst


def instance_to_config(inst: ProblemInstance) -> dict:
    """Inline description; round-trips through :func:`instance_from_config`."""
    out = {"name": inst.name, "blocks": [block_to_config(b) for b in inst.spec.blocks]}
    if inst.known_solution is not None:
        out["known_solution"] = inst.known_solution.to_json()
    return out
