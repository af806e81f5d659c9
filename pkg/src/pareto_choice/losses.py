"""Pareto-embedding loss terms and their analytic subgradients.

The batched kernel takes embeddings ``(B, m, d')``, masks ``(B, m)`` and
object-space distance matrices ``(B, m, m)`` and returns per-task values of
the four terms plus the gradient of the weighted, task-averaged total.

Subgradient convention: ``min`` routes the gradient to the first achieving
index and the hinge has zero slope at exactly zero.  Norms and distances
have zero gradient where they vanish.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .choice_core import InvalidArgument, as_mask


@dataclass(frozen=True)
class LossWeights:
    alpha_po: float = 0.25
    alpha_dom: float = 0.25
    alpha_mds: float = 0.25
    alpha_l2: float = 0.25

    def __post_init__(self):
        w = self.as_array()
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidArgument(f"loss weights must be non-negative, got {tuple(w)}")
        if abs(w.sum() - 1.0) > 1e-9:
            raise InvalidArgument(f"loss weights must sum to 1, got {w.sum()!r}")

    @classmethod
    def from_sequence(cls, alphas) -> "LossWeights":
        a = [float(x) for x in alphas]
        if len(a) != 4:
            raise InvalidArgument(f"expected 4 loss weights, got {len(a)}")
        return cls(*a)

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha_po, self.alpha_dom, self.alpha_mds, self.alpha_l2], dtype=np.float64)


@dataclass(frozen=True)
class LossBreakdown:
    po: float
    dom: float
    mds: float
    l2: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {"po": self.po, "dom": self.dom, "mds": self.mds, "l2": self.l2, "total": self.total}


@njit(cache=True)
def _kernel(Z, c, dist_q, w, chosen_only, want_grad):
    B, m, dp = Z.shape
    parts = np.zeros((B, 4))
    G = np.zeros(Z.shape)
    pair_norm = 2.0 / (m * (m - 1)) if m > 1 else 0.0
    for b in range(B):
        z = Z[b]
        g = G[b]
        # hinge on every point i that (nearly) dominates a chosen point j
        for j in range(m):
            if c[b, j] == 0:
                continue
            for i in range(m):
                if i == j:
                    continue
                kmin = 0
                vmin = 1.0 + z[i, 0] - z[j, 0]
                for k in range(1, dp):
                    v = 1.0 + z[i, k] - z[j, k]
                    if v < vmin:
                        vmin = v
                        kmin = k
                if vmin > 0.0:
                    parts[b, 0] += vmin
                    if want_grad:
                        g[i, kmin] += w[0]
                        g[j, kmin] -= w[0]
        # every non-chosen point i should be dominated with margin by its closest dominator
        for i in range(m):
            if c[b, i] != 0:
                continue
            restrict = False
            if chosen_only:
                for j in range(m):
                    if j != i and c[b, j] != 0:
                        restrict = True
                        break
            best = np.inf
            jbest = -1
            for j in range(m):
                if j == i or (restrict and c[b, j] == 0):
                    continue
                s = 0.0
                for k in range(dp):
                    v = 1.0 + z[i, k] - z[j, k]
                    if v > 0.0:
                        s += v
                if s < best:
                    best = s
                    jbest = j
            if jbest < 0:
                continue
            parts[b, 1] += best
            if want_grad:
                for k in range(dp):
                    if 1.0 + z[i, k] - z[jbest, k] > 0.0:
                        g[i, k] += w[1]
                        g[jbest, k] -= w[1]
        # stress between object-space and embedding distances
        for i in range(m):
            for j in range(i + 1, m):
                dz = 0.0
                for k in range(dp):
                    dz += (z[i, k] - z[j, k]) ** 2
                dz = np.sqrt(dz)
                r = dist_q[b, i, j] - dz
                parts[b, 2] += pair_norm * r * r
                if want_grad and dz > 0.0:
                    coef = -2.0 * pair_norm * r / dz * w[2]
                    for k in range(dp):
                        step = coef * (z[i, k] - z[j, k])
                        g[i, k] += step
                        g[j, k] -= step
        # pull towards the origin
        for i in range(m):
            nrm = 0.0
            for k in range(dp):
                nrm += z[i, k] * z[i, k]
            nrm = np.sqrt(nrm)
            parts[b, 3] += nrm
            if want_grad and nrm > 0.0:
                for k in range(dp):
                    g[i, k] += w[3] * z[i, k] / nrm
    if want_grad:
        G /= B
    return parts, G


def pairwise_dist(X: np.ndarray) -> np.ndarray:
    """Euclidean distance matrices for a stack ``(B, m, d)`` of point sets."""
    diff = X[:, :, None, :] - X[:, None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def loss_terms(Q, Z, c, w: LossWeights | None = None, grad: bool = False,
               chosen_only: bool = False, dist_Q=None):
    """Per-task loss terms ``(B, 4)`` and, if requested, the gradient of the mean total.

    ``Q`` may be omitted when ``dist_Q`` is given.
    """
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    if Z.ndim != 3 or Z.shape[1] < 1 or Z.shape[2] < 1:
        raise InvalidArgument(f"expected embeddings of shape (B, m, d'), got {Z.shape}")
    B, m, _ = Z.shape
    c = np.ascontiguousarray(c, dtype=np.float64)
    if c.shape != (B, m):
        raise InvalidArgument(f"mask shape {c.shape} does not match embeddings {Z.shape}")
    if m == 1 and np.any(c == 0):
        raise InvalidArgument("domination loss undefined for a single non-chosen object")
    if dist_Q is None:
        Q = np.asarray(Q, dtype=np.float64)
        if Q.ndim != 3 or Q.shape[:2] != (B, m):
            raise InvalidArgument(f"task shape {Q.shape} does not match embeddings {Z.shape}")
        dist_Q = pairwise_dist(Q)
    dist_Q = np.ascontiguousarray(dist_Q, dtype=np.float64)
    a = (w if w is not None else LossWeights()).as_array()
    parts, G = _kernel(Z, c, dist_Q, a, bool(chosen_only), bool(grad))
    return parts, (G if grad else None)


def batch_loss(Q, Z, c, w: LossWeights, grad: bool = True, chosen_only: bool = False, dist_Q=None):
    """Mean composite loss over a stack of tasks.

    Returns ``(breakdown, dZ)`` where every component of ``breakdown`` is the
    task-average and ``dZ`` is the gradient of the averaged total.
    """
    parts, G = loss_terms(Q, Z, c, w, grad=grad, chosen_only=chosen_only, dist_Q=dist_Q)
    means = parts.mean(axis=0)
    total = float(w.as_array() @ means)
    return LossBreakdown(*(float(x) for x in means), total=total), G


def _single(Q, Z, c):
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.ndim != 2 or Z.shape[0] < 1:
        raise InvalidArgument(f"embedding must be a non-empty (m, d') matrix, got {Z.shape}")
    m = Z.shape[0]
    c = np.ones(m, dtype=np.int8) if c is None else as_mask(c, m)
    if Q is None:
        dist = np.zeros((1, m, m))
    else:
        Q = np.asarray(getattr(Q, "features", Q), dtype=np.float64)
        if Q.ndim == 1:
            Q = Q[:, None]
        if Q.shape[0] != m:
            raise InvalidArgument(f"task has {Q.shape[0]} objects but embedding has {m}")
        dist = pairwise_dist(Q[None])
    return Z[None], c[None], dist


def loss_po(Z, c) -> float:
    """Hinge penalty on points that (nearly) dominate a chosen point."""
    Zb, cb, dist = _single(None, Z, c)
    if Zb.shape[1] == 1:
        return 0.0
    return float(loss_terms(None, Zb, cb, dist_Q=dist)[0][0, 0])


def loss_dom(Z, c, chosen_only: bool = False) -> float:
    """Hinge penalty on non-chosen points not yet dominated with margin by some other point."""
    Zb, cb, dist = _single(None, Z, c)
    return float(loss_terms(None, Zb, cb, dist_Q=dist, chosen_only=chosen_only)[0][0, 1])


def loss_mds(Q, Z) -> float:
    """Pairwise-normalized raw stress between object-space and embedding distances."""
    Zb, cb, dist = _single(Q, Z, None)
    return float(loss_terms(None, Zb, cb, dist_Q=dist)[0][0, 2])


def loss_l2(Z) -> float:
    """Sum of Euclidean norms of the embedded points."""
    Zb, cb, dist = _single(None, Z, None)
    return float(loss_terms(None, Zb, cb, dist_Q=dist)[0][0, 3])


def loss_total(Q, Z, c, w: LossWeights, chosen_only: bool = False) -> LossBreakdown:
    Zb, cb, dist = _single(Q, Z, c)
    return batch_loss(None, Zb, cb, w, grad=False, chosen_only=chosen_only, dist_Q=dist)[0]


def loss_grad(Q, Z, c, w: LossWeights, chosen_only: bool = False) -> np.ndarray:
    """Gradient of one task's composite loss w.r.t. its embedding, shape ``(m, d')``."""
    Zb, cb, dist = _single(Q, Z, c)
    return batch_loss(None, Zb, cb, w, grad=True, chosen_only=chosen_only, dist_Q=dist)[1][0]
