"""Mirror maps, Bregman divergences and the per-state proximal policy step.

Two geometries are supported:

* ``negative-entropy``: KL divergence, 1-strongly convex w.r.t. the l1 norm;
  the step is a multiplicative-weights (softmax) update.
* ``squared-l2``: half squared Euclidean distance, 1-strongly convex w.r.t. l2;
  the step is a Euclidean projection of ``pi + eta*Q`` onto the simplex.

All functions accept a single row (1-D) or a stack of rows (2-D, one per state).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

ENTROPY = "negative-entropy"
SQUARED_L2 = "squared-l2"

_ALIASES = {
    "negative-entropy": ENTROPY,
    "entropy": ENTROPY,
    "kl": ENTROPY,
    "squared-l2": SQUARED_L2,
    "l2": SQUARED_L2,
    "euclidean": SQUARED_L2,
}

# Floor applied to softmax outputs so rows stay strictly inside the simplex.
PROB_FLOOR = 1e-300

# Support-test margins within this many ulps (relative to the largest |v|) are
# treated as zero by the projection, so a row whose exact projection is a vertex
# comes out as an exact one-hot vector rather than carrying 1e-16 residue.
_SNAP_ULPS = 64.0


@dataclass(frozen=True)
class MirrorMap:
    kind: str
    lam: float = 1.0
    norm_p: int = 1

    def __post_init__(self):
        if self.kind not in (ENTROPY, SQUARED_L2):
            raise ValidationError(f"map: unknown mirror map kind {self.kind!r}")
        if not self.lam > 0:
            raise ValidationError("map: strong-convexity constant must be positive")

    @classmethod
    def negative_entropy(cls) -> "MirrorMap":
        return cls(ENTROPY, 1.0, 1)

    @classmethod
    def squared_l2(cls) -> "MirrorMap":
        return cls(SQUARED_L2, 1.0, 2)

    @classmethod
    def from_name(cls, name: str) -> "MirrorMap":
        kind = _ALIASES.get(str(name).lower())
        if kind is None:
            raise ValidationError(f"map: unknown mirror map {name!r}")
        return cls.negative_entropy() if kind == ENTROPY else cls.squared_l2()


def bregman(mmap: MirrorMap, p: np.ndarray, q: np.ndarray) -> np.ndarray | float:
    """``D(p || q)`` along the last axis; ``inf`` when KL is unbounded."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValidationError(f"bregman: shape mismatch {p.shape} vs {q.shape}")
    if mmap.kind == SQUARED_L2:
        out = 0.5 * np.sum((p - q) ** 2, axis=-1)
    else:
        pos = p > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(pos, p * (np.log(np.where(pos, p, 1.0)) - np.log(q)), 0.0)
        out = np.sum(terms, axis=-1)
        out = np.where(np.any(pos & (q <= 0), axis=-1), np.inf, out)
    return float(out) if np.ndim(out) == 0 else out


def reference_norm(mmap: MirrorMap, x: np.ndarray) -> np.ndarray | float:
    """Norm the map is strongly convex against (l1 or l2), along the last axis."""
    return np.linalg.norm(np.asarray(x, dtype=float), ord=mmap.norm_p, axis=-1)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (row-wise for 2-D input)."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 or v.shape[-1] == 0:
        raise ValidationError("project_simplex: empty vector")
    if not np.all(np.isfinite(v)):
        raise ValidationError("project_simplex: entries must be finite")
    single = v.ndim == 1
    x = np.atleast_2d(v)
    rows, n = x.shape
    order = np.argsort(-x, axis=1, kind="stable")
    u = np.take_along_axis(x, order, axis=1)
    css = np.cumsum(u, axis=1)
    j = np.arange(1, n + 1)
    margin = u - (css - 1.0) / j
    tol = _SNAP_ULPS * np.finfo(float).eps * np.maximum(1.0, np.abs(u).max(axis=1, keepdims=True))
    in_support = margin > tol
    in_support[:, 0] = True
    rho = n - np.argmax(in_support[:, ::-1], axis=1)
    tau = (css[np.arange(rows), rho - 1] - 1.0) / rho
    y_sorted = np.where(j[None, :] <= rho[:, None], np.maximum(u - tau[:, None], 0.0), 0.0)
    y_sorted[rho == 1, 0] = 1.0
    y = np.empty_like(y_sorted)
    np.put_along_axis(y, order, y_sorted, axis=1)
    return y[0] if single else y


def pmd_step(mmap: MirrorMap, pi_row: np.ndarray, q_row: np.ndarray, eta: float) -> np.ndarray:
    """``argmax_p  eta*<p, q> - D(p || pi)`` over the simplex, row-wise."""
    pi_row = np.asarray(pi_row, dtype=float)
    q_row = np.asarray(q_row, dtype=float)
    if pi_row.shape != q_row.shape:
        raise ValidationError(f"pmd_step: shape mismatch {pi_row.shape} vs {q_row.shape}")
    if eta < 0:
        raise ValidationError("pmd_step: eta must be nonnegative")
    if mmap.kind == ENTROPY and np.any(pi_row <= 0):
        raise ValidationError("pmd_step: entropy step needs a strictly positive policy row")
    if eta == 0:
        return pi_row.copy()
    if mmap.kind == SQUARED_L2:
        return project_simplex(pi_row + eta * q_row)
    logits = np.log(pi_row) + eta * q_row
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=-1, keepdims=True)
    return np.maximum(w, PROB_FLOOR)
