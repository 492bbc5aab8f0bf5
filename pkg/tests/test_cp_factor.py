import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from lfgan.cp_factor import (
    CUMULANT_INIT_W,
    CpFitConfig,
    CpModel,
    canonicalize,
    fit,
    grad_loss_l,
    loss_l,
    ortho_penalty,
)
from lfgan.moments import MomentAccumulator, SymmetricMomentSet, accumulate, finalize


def direct_loss(model, moments, gamma_o=0.0):
    """Independent straightforward evaluation of the factorization loss."""
    mat = moments.m1 + model.w[0] * moments.m2
    for j in range(model.rank):
        mat = mat - model.lam[j] * np.outer(model.factors[j], model.factors[j])
    ten = (moments.t1 + model.w[1] * moments.t2 + model.w[2] * moments.t3
           + model.w[3] * moments.t4 + model.w[4] * moments.t5)
    for j in range(model.rank):
        a = model.factors[j]
        ten = ten - model.lam[j] * np.einsum("i,j,k->ijk", a, a, a)
    total = np.sum(mat ** 2) + np.sum(ten ** 2)
    a_cols = model.factors.T
    gram = a_cols.T @ a_cols - np.eye(model.rank)
    return float(total + gamma_o * np.sum(gram ** 2))


def random_moments(seed, n=64, d=5):
    rng = np.random.default_rng(seed)
    return finalize(accumulate(MomentAccumulator(dim=d), rng.normal(size=(n, d))))


def random_model(seed, rank, d):
    rng = np.random.default_rng(seed)
    return CpModel(rank=rank, w=rng.normal(size=5), lam=rng.normal(size=rank),
                   factors=rng.normal(size=(rank, d)))


def planted_moments(lam, factors, w=CUMULANT_INIT_W, mu_seed=None):
    """Moment set whose loss is exactly zero at (w, lam, factors), γ_o=0.

    The mixed terms follow their defining relations (m1⊗μ and permutations),
    so the set is shaped like real data while the residuals vanish at the
    planted parameters. Requires w2=w3=w4 so t1 stays fully symmetric.
    """
    lam = np.asarray(lam, dtype=np.float64)
    factors = np.asarray(factors, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    assert w[1] == w[2] == w[3]
    d = factors.shape[1]
    if mu_seed is None:
        mu = np.zeros(d)
    else:
        mu = np.random.default_rng(mu_seed).normal(scale=0.3, size=d)
    m2 = np.outer(mu, mu)
    cp2 = np.einsum("r,ri,rj->ij", lam, factors, factors)
    m1 = cp2 - w[0] * m2
    t2 = np.einsum("ij,k->ijk", m1, mu)
    t3 = np.einsum("ik,j->ijk", m1, mu)
    t4 = np.einsum("i,jk->ijk", mu, m1)
    t5 = np.einsum("i,j,k->ijk", mu, mu, mu)
    cp3 = np.einsum("r,ri,rj,rk->ijk", lam, factors, factors, factors)
    t1 = cp3 - (w[1] * t2 + w[2] * t3 + w[3] * t4 + w[4] * t5)
    return SymmetricMomentSet(m1=m1, m2=m2, t1=t1, t2=t2, t3=t3, t4=t4, t5=t5)


def fd_grad(model, moments, gamma_o, eps=1e-6):
    """Central finite differences through every parameter."""

    def at(w, lam, factors):
        return loss_l(CpModel(model.rank, w, lam, factors), moments, gamma_o)

    gw = np.zeros(5)
    for i in range(5):
        dw = np.zeros(5)
        dw[i] = eps
        gw[i] = (at(model.w + dw, model.lam, model.factors)
                 - at(model.w - dw, model.lam, model.factors)) / (2 * eps)
    glam = np.zeros(model.rank)
    for j in range(model.rank):
        dl = np.zeros(model.rank)
        dl[j] = eps
        glam[j] = (at(model.w, model.lam + dl, model.factors)
                   - at(model.w, model.lam - dl, model.factors)) / (2 * eps)
    ga = np.zeros_like(model.factors)
    for j in range(model.rank):
        for p in range(model.dim):
            da = np.zeros_like(model.factors)
            da[j, p] = eps
            ga[j, p] = (at(model.w, model.lam, model.factors + da)
                        - at(model.w, model.lam, model.factors - da)) / (2 * eps)
    return gw, glam, ga


def match_components(recovered, planted):
    """Hungarian matching on |cosine|; returns matched similarity per component."""
    rn = recovered / np.linalg.norm(recovered, axis=1, keepdims=True)
    pn = planted / np.linalg.norm(planted, axis=1, keepdims=True)
    sim = np.abs(rn @ pn.T)
    rows, cols = linear_sum_assignment(-sim)
    return sim[rows, cols]


class TestLoss:
    def test_zero_model_is_raw_moment_norms(self):
        ms = random_moments(0)
        model = CpModel(rank=2, w=np.zeros(5), lam=np.zeros(2), factors=np.ones((2, 5)))
        want = np.sum(ms.m1 ** 2) + np.sum(ms.t1 ** 2)
        assert loss_l(model, ms) == pytest.approx(want, rel=1e-13)

    def test_planted_optimum_is_zero(self):
        rng = np.random.default_rng(1)
        lam = np.array([2.0, -1.3, 0.7])
        factors = rng.normal(size=(3, 6))
        ms = planted_moments(lam, factors, mu_seed=5)
        model = CpModel(rank=3, w=np.array(CUMULANT_INIT_W), lam=lam, factors=factors)
        scale = np.sum(ms.m1 ** 2) + np.sum(ms.t1 ** 2)
        assert loss_l(model, ms) <= 1e-20 * scale

    def test_matches_direct_formula(self):
        ms = random_moments(2, d=4)
        model = random_model(3, rank=3, d=4)
        for g in (0.0, 0.37):
            assert loss_l(model, ms, g) == pytest.approx(direct_loss(model, ms, g), rel=1e-12)

    def test_permutation_invariance(self):
        ms = random_moments(4, d=4)
        model = random_model(5, rank=3, d=4)
        perm = [2, 0, 1]
        permuted = CpModel(rank=3, w=model.w, lam=model.lam[perm], factors=model.factors[perm])
        assert loss_l(model, ms, 0.2) == pytest.approx(loss_l(permuted, ms, 0.2), rel=1e-12)

    def test_sign_flip_moves_matrix_term_only(self):
        ms = random_moments(6, d=4)
        model = random_model(7, rank=2, d=4)
        flipped = CpModel(rank=2, w=model.w, lam=-model.lam, factors=-model.factors)
        # λ·a⊗a⊗a is untouched by (λ,a)→(−λ,−a) …
        cp3 = np.einsum("r,ri,rj,rk->ijk", model.lam, model.factors, model.factors, model.factors)
        cp3_f = np.einsum("r,ri,rj,rk->ijk", flipped.lam, flipped.factors,
                          flipped.factors, flipped.factors)
        np.testing.assert_array_equal(cp3, cp3_f)
        # … while the matrix summand flips sign, so the full loss moves.
        assert loss_l(model, ms) != pytest.approx(loss_l(flipped, ms), rel=1e-6)

    def test_dim_mismatch_raises(self):
        with pytest.raises(ValueError):
            loss_l(random_model(0, rank=2, d=3), random_moments(1, d=4))


class TestGrad:
    def test_zero_at_planted_optimum(self):
        rng = np.random.default_rng(8)
        lam = np.array([1.5, -0.8])
        factors = rng.normal(size=(2, 5))
        ms = planted_moments(lam, factors, mu_seed=9)
        model = CpModel(rank=2, w=np.array(CUMULANT_INIT_W), lam=lam, factors=factors)
        gw, glam, ga = grad_loss_l(model, ms)
        assert np.abs(gw).max() <= 1e-9
        assert np.abs(glam).max() <= 1e-9
        assert np.abs(ga).max() <= 1e-9

    def test_matches_finite_differences(self):
        ms = random_moments(10, n=48, d=6)
        model = random_model(11, rank=3, d=6)
        for gamma_o in (0.0, 0.25):
            gw, glam, ga = grad_loss_l(model, ms, gamma_o)
            fw, flam, fa = fd_grad(model, ms, gamma_o)
            np.testing.assert_allclose(gw, fw, rtol=1e-5, atol=1e-7)
            np.testing.assert_allclose(glam, flam, rtol=1e-5, atol=1e-7)
            np.testing.assert_allclose(ga, fa, rtol=1e-5, atol=1e-7)

    def test_scaled_moments_still_match_fd(self):
        base = random_moments(12, n=48, d=5)
        c = 3.7
        scaled = SymmetricMomentSet(m1=c * base.m1, m2=c * base.m2, t1=c * base.t1,
                                    t2=c * base.t2, t3=c * base.t3, t4=c * base.t4,
                                    t5=c * base.t5)
        model = random_model(13, rank=2, d=5)
        gw, glam, ga = grad_loss_l(model, scaled)
        fw, flam, fa = fd_grad(model, scaled, 0.0)
        np.testing.assert_allclose(gw, fw, rtol=1e-5, atol=1e-6)
        np.testing.assert_allclose(glam, flam, rtol=1e-5, atol=1e-6)
        np.testing.assert_allclose(ga, fa, rtol=1e-5, atol=1e-6)


class TestFit:
    def test_rank1_axis_recovery(self):
        d = 4
        e1 = np.zeros(d)
        e1[0] = 1.0
        ms = planted_moments([2.0], [e1])
        model = fit(ms, CpFitConfig(rank=1, gamma_o=0.0, seed=0))
        assert model.final_loss <= 1e-6
        assert model.lam[0] == pytest.approx(2.0, abs=1e-3)
        direction = model.factors[0] / np.linalg.norm(model.factors[0])
        assert abs(direction @ e1) >= 0.9999

    def test_planted_orthogonal_recovery(self):
        rng = np.random.default_rng(14)
        q, _ = np.linalg.qr(rng.normal(size=(10, 10)))
        factors = q[:, :4].T
        lam = np.array([3.0, 2.2, 1.5, 0.9])
        ms = planted_moments(lam, factors, mu_seed=15)
        model = fit(ms, CpFitConfig(rank=4, gamma_o=0.0, seed=1))
        sims = match_components(model.factors, factors)
        assert np.all(sims >= 0.99), f"matched cosines {sims}"

    def test_ortho_weight_shrinks_gram_residual(self):
        rng = np.random.default_rng(16)
        q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
        factors = 1.4 * q[:, :3].T  # non-unit norms: ortho penalty must pull
        ms = planted_moments([2.0, 1.4, 0.8], factors, mu_seed=17)
        free = fit(ms, CpFitConfig(rank=3, gamma_o=0.0, seed=2))
        reg = fit(ms, CpFitConfig(rank=3, gamma_o=0.1, seed=2))
        assert ortho_penalty(reg) < ortho_penalty(free)

    def test_deterministic(self):
        ms = random_moments(18, n=96, d=5)
        cfg = CpFitConfig(rank=2, gamma_o=0.05, steps=300, seed=3)
        a = fit(ms, cfg)
        b = fit(ms, cfg)
        np.testing.assert_array_equal(a.factors, b.factors)
        np.testing.assert_array_equal(a.lam, b.lam)
        np.testing.assert_array_equal(a.w, b.w)

    def test_descent_never_increases_loss(self):
        ms = random_moments(20, n=96, d=5)
        cfg = CpFitConfig(rank=2, steps=400, seed=4, restarts=0)
        history = []
        fit(ms, cfg, history=history)
        diffs = np.diff(history)
        assert np.all(diffs <= cfg.backtrack_tol)

    def test_warm_start_resumes(self):
        ms = random_moments(22, n=96, d=5)
        rough = fit(ms, CpFitConfig(rank=2, steps=50, seed=5, restarts=0))
        refined = fit(ms, CpFitConfig(rank=2, steps=500, seed=5, restarts=0),
                      warm_start=rough)
        assert refined.final_loss <= rough.final_loss + 1e-12

    def test_rank_exceeding_dim_raises(self):
        with pytest.raises(ValueError):
            fit(random_moments(24, d=3), CpFitConfig(rank=4))


class TestCanonicalize:
    def test_sorted_and_sign_fixed(self):
        model = CpModel(rank=3, w=np.zeros(5), lam=np.array([0.5, -2.0, 1.0]),
                        factors=np.array([[0.0, 1.0], [-1.0, 0.5], [0.3, -0.9]]))
        canon = canonicalize(model)
        assert list(np.abs(canon.lam)) == sorted(np.abs(model.lam), reverse=True)
        for j in range(3):
            pivot = np.argmax(np.abs(canon.factors[j]))
            assert canon.factors[j, pivot] > 0

    def test_preserves_tensor_reconstruction(self):
        model = random_model(26, rank=3, d=4)
        canon = canonicalize(model)
        cp3 = np.einsum("r,ri,rj,rk->ijk", model.lam, model.factors,
                        model.factors, model.factors)
        cp3_c = np.einsum("r,ri,rj,rk->ijk", canon.lam, canon.factors,
                          canon.factors, canon.factors)
        np.testing.assert_allclose(cp3, cp3_c, rtol=1e-12)

    def test_idempotent(self):
        model = random_model(28, rank=4, d=5)
        once = canonicalize(model)
        twice = canonicalize(once)
        np.testing.assert_array_equal(once.factors, twice.factors)
        np.testing.assert_array_equal(once.lam, twice.lam)
