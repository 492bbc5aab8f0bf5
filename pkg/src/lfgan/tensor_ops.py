"""Dense third-order tensor primitives.

Outer products, symmetrization over index permutations, weighted rank-R
symmetric reconstruction and Frobenius distances. Everything is a plain
float64 ndarray in C (row-major) order; third-order tensors have shape
(d1, d2, d3).
"""

import numpy as np

# The six mode permutations of a cubic tensor, identity first.
_PERMS = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))


def _as_finite_array(x, name):
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.size == 0:
        raise ValueError(f"{name} must be nonempty")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def outer3(u, v, w):
    """Third-order outer product: result[i, j, k] = u[i] * v[j] * w[k]."""
    u = _as_finite_array(u, "u")
    v = _as_finite_array(v, "v")
    w = _as_finite_array(w, "w")
    if u.ndim != 1 or v.ndim != 1 or w.ndim != 1:
        raise ValueError("outer3 expects three vectors")
    return np.einsum("i,j,k->ijk", u, v, w)


def symmetrize(t):
    """Average a cubic tensor over all six mode permutations.

    The computation is orbit-stable: every position belonging to the same
    index multiset {i, j, k} evaluates the identical expression, so the
    output is bitwise symmetric and re-symmetrizing returns it unchanged.
    """
    t = np.ascontiguousarray(t, dtype=np.float64)
    if t.ndim != 3 or not (t.shape[0] == t.shape[1] == t.shape[2]):
        raise ValueError(f"symmetrize requires a cubic tensor, got shape {t.shape}")
    d = t.shape[0]
    r = np.arange(d)
    i, j, k = np.meshgrid(r, r, r, indexing="ij")
    idx = np.sort(np.stack([i, j, k]), axis=0)
    base = t[idx[0], idx[1], idx[2]]
    acc = np.zeros_like(base)
    for p in _PERMS[1:]:
        acc += t[idx[p[0]], idx[p[1]], idx[p[2]]] - base
    return base + acc / 6.0


def cp_reconstruct(lam, factors):
    """Weighted sum of symmetric rank-1 tensors: sum_j lam[j] * a_j ⊗ a_j ⊗ a_j.

    `factors` is a sequence of R equal-length vectors (or an (R, d) array).
    """
    lam = _as_finite_array(lam, "lam")
    if lam.ndim != 1 or lam.size < 1:
        raise ValueError("lam must be a vector of length R >= 1")
    try:
        f = np.ascontiguousarray(factors, dtype=np.float64)
    except ValueError as exc:
        raise ValueError("factors must share a common length") from exc
    if f.ndim != 2:
        raise ValueError("factors must share a common length")
    if f.shape[0] != lam.size:
        raise ValueError(f"{lam.size} weights but {f.shape[0]} factors")
    if not np.all(np.isfinite(f)):
        raise ValueError("factors contain non-finite entries")
    return np.einsum("r,ri,rj,rk->ijk", lam, f, f, f)


def frob_dist(a, b):
    """Frobenius distance sqrt(sum((a - b)^2)) between equal-shape arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))
