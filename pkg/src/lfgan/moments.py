"""Streaming first/second/third-order moment estimation for feature vectors.

The accumulator keeps running sums (Σφ, Σφ⊗φ, Σφ⊗φ⊗φ); `finalize` turns them
into the seven moment terms the factorization consumes:

    m1 = E[φ⊗φ]              m2 = E[φ]⊗E[φ]
    t1 = E[φ⊗φ⊗φ]            t2 = E[φ⊗φ]⊗E[φ]
    t3 = E[φ]⊗-in-the-middle  t4 = E[φ]⊗E[φ⊗φ]
    t5 = E[φ]⊗E[φ]⊗E[φ]

Only the third-order sum is O(d³) state; the mixed tensors t2–t4 are assembled
from the matrix and vector sums at finalize time.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class MomentAccumulator:
    """Running sums over a stream of d-dimensional feature vectors."""

    dim: int
    count: int = 0
    sum1: np.ndarray = field(default=None)  # (d,)
    sum2: np.ndarray = field(default=None)  # (d, d)
    sum3: np.ndarray = field(default=None)  # (d, d, d)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.sum1 is None:
            self.sum1 = np.zeros(self.dim)
        if self.sum2 is None:
            self.sum2 = np.zeros((self.dim, self.dim))
        if self.sum3 is None:
            self.sum3 = np.zeros((self.dim, self.dim, self.dim))


@dataclass
class SymmetricMomentSet:
    """Finalized moment terms; m1/t1/t5 are permutation-symmetric."""

    m1: np.ndarray
    m2: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    t3: np.ndarray
    t4: np.ndarray
    t5: np.ndarray

    @property
    def dim(self):
        return self.m1.shape[0]


def accumulate(acc, batch):
    """Fold a batch of feature vectors into the accumulator (returns a new one).

    `batch` is an (n, d) array or a list of length-d vectors; an empty batch
    returns the accumulator unchanged.
    """
    b = np.asarray(batch, dtype=np.float64)
    if b.size == 0:
        return acc
    if b.ndim == 1:
        b = b[None, :]
    if b.ndim != 2 or b.shape[1] != acc.dim:
        raise ValueError(f"batch of dim {b.shape[-1]} into accumulator of dim {acc.dim}")
    if not np.all(np.isfinite(b)):
        raise ValueError("batch contains non-finite features")
    return MomentAccumulator(
        dim=acc.dim,
        count=acc.count + b.shape[0],
        sum1=acc.sum1 + b.sum(axis=0),
        sum2=acc.sum2 + np.einsum("ni,nj->ij", b, b),
        sum3=acc.sum3 + np.einsum("ni,nj,nk->ijk", b, b, b),
    )


def merge(a, b):
    """Combine two accumulators over disjoint streams (parallel reduction)."""
    if a.dim != b.dim:
        raise ValueError(f"cannot merge accumulators of dim {a.dim} and {b.dim}")
    return MomentAccumulator(
        dim=a.dim,
        count=a.count + b.count,
        sum1=a.sum1 + b.sum1,
        sum2=a.sum2 + b.sum2,
        sum3=a.sum3 + b.sum3,
    )


def finalize(acc):
    """Normalize the sums into the seven moment terms.

    The mean sits in mode 0 of t2's complement ordering: t2 = E[φ⊗φ]⊗μ,
    t3 places μ in the middle mode, t4 = μ⊗E[φ⊗φ].
    """
    if acc.count < 1:
        raise ValueError("cannot finalize an empty accumulator")
    n = float(acc.count)
    mu = acc.sum1 / n
    m1 = acc.sum2 / n
    return SymmetricMomentSet(
        m1=m1,
        m2=np.outer(mu, mu),
        t1=acc.sum3 / n,
        t2=np.einsum("ij,k->ijk", m1, mu),
        t3=np.einsum("ik,j->ijk", m1, mu),
        t4=np.einsum("i,jk->ijk", mu, m1),
        t5=np.einsum("i,j,k->ijk", mu, mu, mu),
    )


class FeatureBuffer:
    """Fixed-capacity ring of the most recent feature vectors.

    Training pushes every feature batch here; the factorization reads a fresh
    snapshot each refresh so the moments track the drifting feature map.
    """

    def __init__(self, dim, capacity=4096):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.dim = dim
        self.capacity = capacity
        self._buf = np.zeros((capacity, dim))
        self._head = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, batch):
        b = np.asarray(batch, dtype=np.float64)
        if b.size == 0:
            return
        if b.ndim == 1:
            b = b[None, :]
        if b.shape[1] != self.dim:
            raise ValueError(f"feature dim {b.shape[1]} != buffer dim {self.dim}")
        if b.shape[0] >= self.capacity:  # only the newest `capacity` rows survive
            self._buf[:] = b[-self.capacity:]
            self._head = 0
            self._size = self.capacity
            return
        end = self._head + b.shape[0]
        if end <= self.capacity:
            self._buf[self._head:end] = b
        else:
            split = self.capacity - self._head
            self._buf[self._head:] = b[:split]
            self._buf[:end - self.capacity] = b[split:]
        self._head = end % self.capacity
        self._size = min(self._size + b.shape[0], self.capacity)

    def snapshot(self):
        """Copy of the stored vectors, oldest first."""
        if self._size < self.capacity:
            return self._buf[:self._size].copy()
        return np.roll(self._buf, -self._head, axis=0).copy()

    def moments(self):
        """Finalized moment set over the current contents."""
        return finalize(accumulate(MomentAccumulator(dim=self.dim), self.snapshot()))
