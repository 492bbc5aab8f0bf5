"""Weighted symmetric CP factorization of second/third-order feature moments.

Fits cross-term weights w, component weights λ and factors a_j so that

    M1 + w1·M2          ≈ Σ_j λ_j a_j⊗a_j
    T1 + Σ_{k=2..5} w_k·T_k ≈ Σ_j λ_j a_j⊗a_j⊗a_j

by minimizing the squared Frobenius residuals plus an orthogonality penalty
γ_o‖AᵀA − I‖²_F on the factor matrix (factors as columns). Gradients are
analytic; the optimizer is full-batch descent with per-parameter RMS step
scaling and backtracking. Small problem sizes (d_f ≤ 64), so robustness is
preferred over speed throughout.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

# Classical third-cumulant cross-term coefficients: starting point the learned
# weights generalize. (w1 pairs with M2; w2..w5 with T2..T5.)
CUMULANT_INIT_W = (-1.0, -1.0, -1.0, -1.0, 2.0)

FACTOR_NORM_BOUND = 10.0


@dataclass
class CpModel:
    """Rank-R weighted symmetric CP model.

    `factors` has shape (R, d_f) — row j is a_j. `w` holds the five cross-term
    weights (w[0] scales the matrix term M2; w[1:] scale T2..T5).
    """

    rank: int
    w: np.ndarray
    lam: np.ndarray
    factors: np.ndarray
    final_loss: float = None

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.lam = np.asarray(self.lam, dtype=np.float64)
        self.factors = np.asarray(self.factors, dtype=np.float64)
        if self.rank < 1:
            raise ValueError(f"rank must be >= 1, got {self.rank}")
        if self.w.shape != (5,):
            raise ValueError(f"w must have 5 entries, got shape {self.w.shape}")
        if self.lam.shape != (self.rank,):
            raise ValueError(f"lam shape {self.lam.shape} != rank {self.rank}")
        if self.factors.ndim != 2 or self.factors.shape[0] != self.rank:
            raise ValueError(f"factors shape {self.factors.shape} != ({self.rank}, d_f)")
        for arr, name in ((self.w, "w"), (self.lam, "lam"), (self.factors, "factors")):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def dim(self):
        return self.factors.shape[1]


@dataclass
class CpFitConfig:
    rank: int = 8
    gamma_o: float = 0.1
    steps: int = 2000
    lr: float = 0.05
    init_scale: float = 1.0
    seed: int = 0
    tol: float = 1e-10
    # Loss may rise by at most this much between accepted steps.
    backtrack_tol: float = 1e-12
    restarts: int = 4
    restart_tol: float = 1e-4

    def __post_init__(self):
        if self.steps < 1 or self.lr <= 0:
            raise ValueError("steps and lr must be positive")
        if self.gamma_o < 0:
            raise ValueError("gamma_o must be >= 0")


def _residuals(model, moments):
    """E2 = matrix-side residual, E3 = tensor-side residual."""
    a = model.factors
    e2 = moments.m1 + model.w[0] * moments.m2 - np.einsum("r,ri,rj->ij", model.lam, a, a)
    t_mix = (model.w[1] * moments.t2 + model.w[2] * moments.t3
             + model.w[3] * moments.t4 + model.w[4] * moments.t5)
    e3 = moments.t1 + t_mix - np.einsum("r,ri,rj,rk->ijk", model.lam, a, a, a)
    return e2, e3


def loss_l(model, moments, gamma_o=0.0):
    """‖E2‖²_F + ‖E3‖²_F + γ_o·‖AᵀA−I‖²_F (factors are the columns of A)."""
    if model.dim != moments.dim:
        raise ValueError(f"model dim {model.dim} != moments dim {moments.dim}")
    e2, e3 = _residuals(model, moments)
    total = float(np.sum(e2 * e2) + np.sum(e3 * e3))
    if gamma_o != 0.0:
        total += gamma_o * ortho_penalty(model)
    return total


def ortho_penalty(model):
    """‖AᵀA − I‖²_F with factors stacked as the columns of A."""
    a_cols = model.factors.T
    g = a_cols.T @ a_cols - np.eye(model.rank)
    return float(np.sum(g * g))


def grad_loss_l(model, moments, gamma_o=0.0):
    """Analytic gradients of loss_l w.r.t. (w, lam, factors)."""
    if model.dim != moments.dim:
        raise ValueError(f"model dim {model.dim} != moments dim {moments.dim}")
    a = model.factors
    e2, e3 = _residuals(model, moments)

    gw = np.empty(5)
    gw[0] = 2.0 * np.sum(e2 * moments.m2)
    for k, t in enumerate((moments.t2, moments.t3, moments.t4, moments.t5)):
        gw[k + 1] = 2.0 * np.sum(e3 * t)

    # d/dλ_r: the rank-1 summands enter both residuals with a minus sign.
    quad = np.einsum("ri,ij,rj->r", a, e2, a)
    cub = np.einsum("ijk,ri,rj,rk->r", e3, a, a, a)
    glam = -2.0 * quad - 2.0 * cub

    # d/da_r: product rule over the three tensor modes plus both matrix modes.
    ga = (-2.0 * model.lam[:, None] * (a @ (e2 + e2.T).T)
          - 2.0 * model.lam[:, None] * (np.einsum("ijk,rj,rk->ri", e3, a, a)
                                        + np.einsum("ijk,ri,rk->rj", e3, a, a)
                                        + np.einsum("ijk,ri,rj->rk", e3, a, a)))
    if gamma_o != 0.0:
        a_cols = a.T
        g = a_cols.T @ a_cols - np.eye(model.rank)
        ga += gamma_o * 4.0 * (a_cols @ g).T
    return gw, glam, ga


def canonicalize(model):
    """Deterministic component order and sign convention.

    Components sort by |λ| descending (stable); each factor's first entry of
    largest magnitude is made positive, with the flip absorbed into λ so the
    rank-1 tensor summands λ·a⊗a⊗a are untouched.
    """
    order = np.argsort(-np.abs(model.lam), kind="stable")
    lam = model.lam[order].copy()
    factors = model.factors[order].copy()
    for j in range(model.rank):
        pivot = int(np.argmax(np.abs(factors[j])))
        if factors[j, pivot] < 0:
            factors[j] = -factors[j]
            lam[j] = -lam[j]
    return replace(model, lam=lam, factors=factors)


def _project_norms(factors):
    norms = np.linalg.norm(factors, axis=1)
    over = norms > FACTOR_NORM_BOUND
    if np.any(over):
        factors = factors.copy()
        factors[over] *= (FACTOR_NORM_BOUND / norms[over])[:, None]
    return factors


def _pack(w, lam, factors):
    return np.concatenate([w, lam, factors.ravel()])


def _unpack(vec, rank, dim):
    return vec[:5], vec[5:5 + rank], vec[5 + rank:].reshape(rank, dim)


def _descend(model, moments, config, history=None):
    """RMS-scaled gradient descent with backtracking; returns (model, loss)."""
    rank, dim = model.rank, model.dim
    p = _pack(model.w, model.lam, model.factors)
    s = np.zeros_like(p)  # running second-moment of gradients
    rho, eps = 0.9, 1e-8
    trust = 1.0
    cur = loss_l(model, moments, config.gamma_o)
    if history is not None:
        history.append(cur)
    prev = math.inf
    for _ in range(config.steps):
        w, lam, factors = _unpack(p, rank, dim)
        gw, glam, ga = grad_loss_l(CpModel(rank, w, lam, factors), moments, config.gamma_o)
        g = _pack(gw, glam, ga)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient during factorization fit")
        s = rho * s + (1.0 - rho) * g * g
        step = config.lr * g / (np.sqrt(s) + eps)
        accepted = False
        for _ in range(30):
            q = p - trust * step
            wq, lq, fq = _unpack(q, rank, dim)
            fq = _project_norms(fq)
            cand = loss_l(CpModel(rank, wq, lq, fq), moments, config.gamma_o)
            if not math.isfinite(cand):
                raise FloatingPointError(f"factorization loss diverged to {cand}")
            if cand <= cur + config.backtrack_tol:
                p = _pack(wq, lq, fq)
                prev, cur = cur, cand
                if history is not None:
                    history.append(cur)
                trust = min(trust * 1.25, 1.0)
                accepted = True
                break
            trust *= 0.5
        if not accepted or (prev - cur >= 0 and prev - cur < config.tol and trust >= 1.0):
            break
    w, lam, factors = _unpack(p, rank, dim)
    return CpModel(rank, w, lam, factors), cur


def fit(moments, config, warm_start=None, history=None):
    """Fit a CpModel to a SymmetricMomentSet by deterministic descent.

    A warm start reuses a previous model's parameters as the initial point
    (rank and dimension must match). Cold starts draw factors from a seeded
    Gaussian; when the first run stalls above `restart_tol` (relative to the
    moment scale), up to `restarts` further seeded inits run and the best
    final loss wins — all deterministic given `config.seed`. When provided,
    `history` collects the accepted-loss sequence of the last descent run.
    """
    dim = moments.dim
    if config.rank > dim:
        raise ValueError(f"rank {config.rank} exceeds feature dimension {dim}")
    scale = float(np.sum(moments.m1 ** 2) + np.sum(moments.t1 ** 2)) + 1e-30

    if warm_start is not None:
        if warm_start.rank != config.rank or warm_start.dim != dim:
            raise ValueError("warm start shape does not match config/moments")
        model, cur = _descend(warm_start, moments, config, history)
        model = replace(model, final_loss=cur)
        return canonicalize(model)

    best, best_loss = None, math.inf
    for trial in range(1 + max(config.restarts, 0)):
        rng = np.random.default_rng(config.seed + 7919 * trial)
        init = CpModel(
            rank=config.rank,
            w=np.array(CUMULANT_INIT_W),
            lam=np.ones(config.rank),
            factors=rng.normal(scale=config.init_scale / math.sqrt(dim),
                               size=(config.rank, dim)),
        )
        if history is not None:
            history.clear()
        model, cur = _descend(init, moments, config, history)
        if cur < best_loss:
            best, best_loss = model, cur
        if best_loss / scale <= config.restart_tol:
            break
    best = replace(best, final_loss=best_loss)
    return canonicalize(best)


def loss_l_feature_grad(model, phi):
    """Factorization loss on a batch's own moment estimates, plus ∂/∂φ.

    Lets the feature map co-adapt: the returned (n, d_f) gradient chains into
    the feature head W as vᵀ·g. The orthogonality penalty is omitted — it
    does not depend on the features. Derived terms (M2, T2..T5) follow the
    moment pipeline exactly, so the value matches loss_l on the same batch.
    """
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 2 or phi.shape[1] != model.dim:
        raise ValueError(f"features must be (n, {model.dim}), got {phi.shape}")
    n = phi.shape[0]
    from .moments import MomentAccumulator, accumulate, finalize

    ms = finalize(accumulate(MomentAccumulator(dim=model.dim), phi))
    e2, e3 = _residuals(model, ms)
    value = float(np.sum(e2 * e2) + np.sum(e3 * e3))

    mu, m1 = phi.mean(axis=0), ms.m1
    w = model.w
    # chain through the derived terms: m1 feeds E2 and T2/T3/T4, μ feeds all
    g_m1 = 2.0 * e2 \
        + 2.0 * w[1] * np.einsum("abk,k->ab", e3, mu) \
        + 2.0 * w[2] * np.einsum("ajb,j->ab", e3, mu) \
        + 2.0 * w[3] * np.einsum("iab,i->ab", e3, mu)
    g_mu = 2.0 * w[0] * (e2 @ mu + e2.T @ mu) \
        + 2.0 * w[1] * np.einsum("ijc,ij->c", e3, m1) \
        + 2.0 * w[2] * np.einsum("ick,ik->c", e3, m1) \
        + 2.0 * w[3] * np.einsum("cjk,jk->c", e3, m1) \
        + 2.0 * w[4] * (np.einsum("cjk,j,k->c", e3, mu, mu)
                        + np.einsum("ick,i,k->c", e3, mu, mu)
                        + np.einsum("ijc,i,j->c", e3, mu, mu))
    g_t1 = 2.0 * e3
    t1_term = (np.einsum("cjk,pj,pk->pc", g_t1, phi, phi)
               + np.einsum("ick,pi,pk->pc", g_t1, phi, phi)
               + np.einsum("ijc,pi,pj->pc", g_t1, phi, phi))
    grad = (g_mu[None, :] + phi @ (g_m1 + g_m1.T) + t1_term) / n
    return value, grad
