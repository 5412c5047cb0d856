#include <doctest.h>

#include <cmath>
#include <vector>

#include "tsqa/ddi.hpp"
#include "tsqa/nn.hpp"
#include "tsqa/rng.hpp"
#include "tsqa/tape.hpp"

using tsqa::Rng;
using tsqa::Tensor;
using tsqa::diff::Tape;
using tsqa::diff::Value;
using namespace tsqa::ddi;

namespace {

Tensor randn(int r, int c, uint64_t seed, double sigma = 1.0) {
    Rng rng(seed);
    return Tensor::gaussian(r, c, sigma, rng);
}

QuantizerConfig tiny_cfg(int levels = 2, int base = 4, int dim = 6) {
    QuantizerConfig cfg;
    cfg.levels = levels;
    cfg.base_codes = base;
    cfg.code_dim = dim;
    return cfg;
}

struct Setup {
    tsqa::nn::ParamStore store;
    CodebookHierarchy hierarchy;
    int dim;

    Setup(const QuantizerConfig& qcfg, int model_dim, uint64_t seed)
        : hierarchy(qcfg), dim(model_dim) {
        Rng rng(seed);
        init_quantizer_params(store, model_dim, qcfg.code_dim, rng);
        hierarchy.init_random(rng);
    }
};

double row_cosine(const Tensor& a, const Tensor& b, int i) {
    double dot = 0, na = 0, nb = 0;
    for (int c = 0; c < a.cols; ++c) {
        dot += a.at(i, c) * b.at(i, c);
        na += a.at(i, c) * a.at(i, c);
        nb += b.at(i, c) * b.at(i, c);
    }
    return dot / (std::max(std::sqrt(na), 1e-12) * std::max(std::sqrt(nb), 1e-12));
}

double infonce_oracle(const Tensor& a, const Tensor& b, double tau) {
    auto cosine = [&](int i, int j) {
        double dot = 0, na = 0, nb = 0;
        for (int k = 0; k < a.cols; ++k) {
            dot += a.at(i, k) * b.at(j, k);
            na += a.at(i, k) * a.at(i, k);
            nb += b.at(j, k) * b.at(j, k);
        }
        return dot / (std::max(std::sqrt(na), 1e-12) * std::max(std::sqrt(nb), 1e-12));
    };
    double loss = 0.0;
    for (int i = 0; i < a.rows; ++i) {
        double denom = 0.0;
        for (int j = 0; j < a.rows; ++j) denom += std::exp(cosine(i, j) / tau);
        loss -= std::log(std::exp(cosine(i, i) / tau) / denom);
    }
    return loss;
}

}  // namespace

TEST_CASE("pool_broadcast obeys the segment rules") {
    Tensor x(5, 2);
    for (int r = 0; r < 5; ++r) {
        x.at(r, 0) = r + 1.0;  // 1..5
        x.at(r, 1) = 10.0 * (r + 1.0);
    }

    Tensor same = pool_broadcast(x, 1);
    CHECK(tsqa::max_abs_diff(same, x) == 0.0);

    Tensor pooled = pool_broadcast(x, 2);
    // segments {0,1}, {2,3}, {4}: means 1.5, 3.5, and the ragged row alone
    CHECK(pooled.at(0, 0) == doctest::Approx(1.5));
    CHECK(pooled.at(1, 0) == doctest::Approx(1.5));
    CHECK(pooled.at(2, 0) == doctest::Approx(3.5));
    CHECK(pooled.at(3, 0) == doctest::Approx(3.5));
    CHECK(pooled.at(4, 0) == 5.0);
    CHECK(pooled.at(4, 1) == 50.0);

    Tensor wide = pool_broadcast(x, 8);  // one ragged segment spanning everything
    for (int r = 0; r < 5; ++r) CHECK(wide.at(r, 0) == doctest::Approx(3.0));

    CHECK_THROWS(pool_broadcast(x, 0));
}

TEST_CASE("vq_assign picks the nearest code with low-index ties") {
    Tensor codes(2, 2);
    codes.at(1, 0) = 1.0;
    codes.at(1, 1) = 1.0;

    Tensor v(3, 2);
    v.at(0, 0) = 0.9;
    v.at(0, 1) = 0.8;  // closer to (1,1)
    v.at(1, 0) = 0.0;
    v.at(1, 1) = 0.0;  // exactly code 0
    v.at(2, 0) = 0.5;
    v.at(2, 1) = 0.5;  // equidistant, tie to 0

    auto [idx, q] = vq_assign(codes, v);
    CHECK(idx == std::vector<int>{1, 0, 0});
    CHECK(q.at(0, 0) == 1.0);
    CHECK(q.at(1, 0) == 0.0);
    CHECK(q.at(2, 0) == 0.0);

    CHECK_THROWS(vq_assign(Tensor::zeros(0, 2), v));
    CHECK_THROWS(vq_assign(Tensor::zeros(2, 3), v));
}

TEST_CASE("vq_assign is a true argmin over random data") {
    Tensor codes = randn(13, 5, 1);
    Tensor vecs = randn(20, 5, 2);
    auto [idx, q] = vq_assign(codes, vecs);
    for (int i = 0; i < vecs.rows; ++i) {
        double chosen = 0.0;
        for (int c = 0; c < 5; ++c) {
            const double d = vecs.at(i, c) - codes.at(idx[static_cast<size_t>(i)], c);
            chosen += d * d;
        }
        for (int k = 0; k < codes.rows; ++k) {
            double dist = 0.0;
            for (int c = 0; c < 5; ++c) {
                const double d = vecs.at(i, c) - codes.at(k, c);
                dist += d * d;
            }
            CHECK(chosen <= dist + 1e-15);
        }
    }
}

TEST_CASE("hierarchy shape follows the doubling schedule") {
    CodebookHierarchy h(tiny_cfg(3, 16, 32));
    CHECK(h.window(1) == 4);
    CHECK(h.window(2) == 2);
    CHECK(h.window(3) == 1);
    CHECK(h.codes_at(1) == 16);
    CHECK(h.codes_at(2) == 32);
    CHECK(h.codes_at(3) == 64);
    CHECK_THROWS(h.window(0));
    CHECK_THROWS(h.window(4));

    QuantizerConfig bad = tiny_cfg();
    bad.levels = 0;
    CHECK_THROWS(CodebookHierarchy{bad});
    bad = tiny_cfg();
    bad.ema_decay = 1.0;
    CHECK_THROWS(validate(bad));
}

TEST_CASE("rvq recursion telescopes and matches a straight-line oracle") {
    const int n = 6, dim = 10;
    auto qcfg = tiny_cfg(2, 4, 6);
    Setup su(qcfg, dim, 42);
    Tensor input = randn(n, dim, 3);

    Tape t;
    tsqa::nn::ParamBind p(t, su.store);
    Value e = t.input(input, true);
    RvqResult res = rvq_forward(t, p, su.hierarchy, e);

    // Straight-line recomputation with plain loops.
    const Tensor& dw = su.store.get("quant.down.w");
    const Tensor& db = su.store.get("quant.down.b");
    Tensor tilde(n, qcfg.code_dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < qcfg.code_dim; ++j) {
            double acc = db.at(0, j);
            for (int k = 0; k < dim; ++k) acc += input.at(i, k) * dw.at(k, j);
            tilde.at(i, j) = acc;
        }

    Tensor residual = tilde;
    Tensor q_total = Tensor::zeros(n, qcfg.code_dim);
    for (int m = 1; m <= qcfg.levels; ++m) {
        Tensor pooled = pool_broadcast(residual, su.hierarchy.window(m));
        auto [idx, q] = vq_assign(su.hierarchy.level(m).codes, pooled);
        CHECK(idx == res.assignments[static_cast<size_t>(m - 1)].indices);
        for (size_t i = 0; i < residual.data.size(); ++i) {
            residual.data[i] -= q.data[i];
            q_total.data[i] += q.data[i];
        }
    }

    // Telescoping identity: accumulated codes plus final residual recover
    // the down-projected tokens.
    Tensor recon = q_total;
    for (size_t i = 0; i < recon.data.size(); ++i) recon.data[i] += residual.data[i];
    CHECK(tsqa::max_abs_diff(recon, tilde) < 1e-12);

    // Z matches up-projecting the accumulated codes.
    const Tensor& uw = su.store.get("quant.up.w");
    const Tensor& ub = su.store.get("quant.up.b");
    Tensor z_want(n, dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j) {
            double acc = ub.at(0, j);
            for (int k = 0; k < qcfg.code_dim; ++k) acc += q_total.at(i, k) * uw.at(k, j);
            z_want.at(i, j) = acc;
        }
    CHECK(tsqa::max_abs_diff(t.val(res.common), z_want) < 1e-12);

    // Commitment loss: mean over tokens of the squared gap.
    double vq_want = 0.0;
    for (size_t i = 0; i < tilde.data.size(); ++i) {
        const double gap = tilde.data[i] - q_total.data[i];
        vq_want += gap * gap;
    }
    vq_want /= n;
    CHECK(t.val(res.vq_loss).at(0, 0) == doctest::Approx(vq_want).epsilon(1e-12));

    // Residual decomposition identity in model space.
    Tensor zu = t.val(res.common);
    for (size_t i = 0; i < zu.data.size(); ++i) zu.data[i] += t.val(res.unique).data[i];
    CHECK(tsqa::max_abs_diff(zu, input) < 1e-12);
}

TEST_CASE("commitment gradient matches its closed form") {
    auto qcfg = tiny_cfg(2, 4, 6);
    Setup su(qcfg, 10, 7);
    Tensor input = randn(5, 10, 8);

    Tape t;
    tsqa::nn::ParamBind p(t, su.store);
    RvqResult res = rvq_forward(t, p, su.hierarchy, t.input(input, true));
    t.backward(res.vq_loss);

    // dL/d(tilde) = 2 (tilde - q) / n with q held constant.
    Tensor tilde = t.val(res.down);
    Tensor q_total = tilde;
    const Tensor& grad = t.grad(res.down);
    Tensor residual = tilde;
    for (int m = 1; m <= qcfg.levels; ++m) {
        Tensor pooled = pool_broadcast(residual, su.hierarchy.window(m));
        auto [idx, q] = vq_assign(su.hierarchy.level(m).codes, pooled);
        for (size_t i = 0; i < residual.data.size(); ++i) residual.data[i] -= q.data[i];
    }
    for (size_t i = 0; i < tilde.data.size(); ++i) {
        const double want = 2.0 * residual.data[i] / tilde.rows;
        CHECK(grad.data[i] == doctest::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("commitment loss survives finite differencing through the input") {
    auto qcfg = tiny_cfg(2, 4, 6);
    Setup su(qcfg, 8, 9);
    Tensor input = randn(4, 8, 10);

    Tape t;
    tsqa::nn::ParamBind p(t, su.store);
    Value e = t.input(input, true);
    RvqResult res = rvq_forward(t, p, su.hierarchy, e);
    t.backward(res.vq_loss);

    const double eps = 1e-6;
    Rng pick(11);
    for (int trial = 0; trial < 8; ++trial) {
        size_t idx = pick.uniform_index(input.data.size());
        const double orig = input.data[idx];
        t.poke_leaf(e, idx, orig + eps);
        t.replay();
        const double up = t.val(res.vq_loss).at(0, 0);
        t.poke_leaf(e, idx, orig - eps);
        t.replay();
        const double down = t.val(res.vq_loss).at(0, 0);
        t.poke_leaf(e, idx, orig);
        t.replay();
        const double numeric = (up - down) / (2 * eps);
        const double analytic = t.grad(e).data[idx];
        CHECK(std::abs(analytic - numeric) /
                  std::max({std::abs(analytic), std::abs(numeric), 1e-8}) <
              1e-5);
    }
}

TEST_CASE("straight-through gradient equals the quantized-path gradient") {
    auto qcfg = tiny_cfg(2, 4, 6);
    Setup su(qcfg, 8, 12);
    Tensor input = randn(4, 8, 13);
    Tensor w = randn(4, 8, 15);

    // Common-path loss only, so res.down receives gradient purely through
    // the straight-through estimator.
    Tape t;
    tsqa::nn::ParamBind p(t, su.store);
    Value e = t.input(input, true);
    RvqResult res = rvq_forward(t, p, su.hierarchy, e);
    t.backward(t.sum_all(t.mul(res.common, t.constant(w))));

    double mag = 0.0;
    for (double g : t.grad(e).data) mag = std::max(mag, std::abs(g));
    CHECK(mag > 0.0);

    // Rebuild the same loss with the accumulated codes as a free input. The
    // estimator's contract: the gradient routed into the pre-quantization
    // tokens equals the gradient the codes themselves would receive.
    Tensor q_total = Tensor::zeros(4, qcfg.code_dim);
    Tensor residual = t.val(res.down);
    for (int m = 1; m <= qcfg.levels; ++m) {
        Tensor pooled = pool_broadcast(residual, su.hierarchy.window(m));
        auto [idx, q] = vq_assign(su.hierarchy.level(m).codes, pooled);
        for (size_t i = 0; i < residual.data.size(); ++i) {
            residual.data[i] -= q.data[i];
            q_total.data[i] += q.data[i];
        }
    }
    Tape t2;
    tsqa::nn::ParamBind p2(t2, su.store);
    Value q_in = t2.input(q_total, true);
    Value z2 = tsqa::nn::linear(t2, p2, "quant.up", q_in);
    t2.backward(t2.sum_all(t2.mul(z2, t2.constant(w))));

    CHECK(tsqa::max_abs_diff(t.grad(res.down), t2.grad(q_in)) == 0.0);
}

TEST_CASE("shared hierarchy mutations are visible to both modalities") {
    auto qcfg = tiny_cfg(1, 3, 4);
    Setup su(qcfg, 6, 20);
    // Distinct inputs standing in for the two modalities.
    Tensor en = randn(4, 6, 21), ev = randn(4, 6, 22);

    auto indices_for = [&](const Tensor& x) {
        Tape t;
        tsqa::nn::ParamBind p(t, su.store);
        RvqResult r = rvq_forward(t, p, su.hierarchy, t.input(x, true));
        return r.assignments[0].indices;
    };

    auto before_n = indices_for(en);
    auto before_v = indices_for(ev);

    // Push one code far away; any token that used it must move, in both
    // modalities, because they index the same tensors.
    const int moved = before_n[0];
    for (int c = 0; c < qcfg.code_dim; ++c)
        su.hierarchy.level(1).codes.at(moved, c) = 1e6;

    auto after_n = indices_for(en);
    auto after_v = indices_for(ev);
    CHECK(after_n[0] != moved);
    for (size_t i = 0; i < before_v.size(); ++i)
        if (before_v[i] == moved) CHECK(after_v[i] != moved);
}

TEST_CASE("ema leaves unassigned codes bit-identical") {
    auto qcfg = tiny_cfg(1, 4, 3);
    CodebookHierarchy h(qcfg);
    Rng rng(23);
    h.init_random(rng);
    Tensor before = h.level(1).codes;

    // One token assigned to its nearest code; note which.
    Tensor v = randn(1, 3, 24);
    auto [idx, q] = vq_assign(h.level(1).codes, v);
    std::vector<LevelAssignment> batch = {{idx, v}};
    ema_update(h, batch);

    for (int k = 0; k < h.level(1).codes.rows; ++k) {
        for (int c = 0; c < 3; ++c) {
            if (k == idx[0])
                continue;
            CHECK(h.level(1).codes.at(k, c) == before.at(k, c));
        }
    }
    // The assigned code moved.
    double moved = 0.0;
    for (int c = 0; c < 3; ++c)
        moved = std::max(moved, std::abs(h.level(1).codes.at(idx[0], c) - before.at(idx[0], c)));
    CHECK(moved > 0.0);
}

TEST_CASE("ema converges to a repeatedly assigned vector") {
    auto qcfg = tiny_cfg(1, 2, 3);
    CodebookHierarchy h(qcfg);
    Rng rng(25);
    h.init_random(rng);

    Tensor target(1, 3);
    target.at(0, 0) = 0.3;
    target.at(0, 1) = -0.7;
    target.at(0, 2) = 1.1;

    auto dist_to_code = [&](int k) {
        double sq = 0.0;
        for (int c = 0; c < 3; ++c) {
            const double d = h.level(1).codes.at(k, c) - target.at(0, c);
            sq += d * d;
        }
        return std::sqrt(sq);
    };

    auto [idx0, q0] = vq_assign(h.level(1).codes, target);
    const int k = idx0[0];
    const double initial = dist_to_code(k);
    double prev = initial;
    for (int step = 0; step < 200; ++step) {
        std::vector<LevelAssignment> batch = {{std::vector<int>{k}, target}};
        ema_update(h, batch);
        const double cur = dist_to_code(k);
        CHECK(cur <= prev + 1e-12);
        prev = cur;
    }
    // With decay 0.99 the gap contracts like 0.99^200 ~ 0.13 of the start.
    CHECK(prev < 0.2 * initial);
}

TEST_CASE("zero-decay ema jumps to the batch mean") {
    auto qcfg = tiny_cfg(1, 2, 2);
    qcfg.ema_decay = 0.0;
    CodebookHierarchy h(qcfg);
    Rng rng(26);
    h.init_random(rng);

    Tensor batch(2, 2);
    batch.at(0, 0) = 1.0;
    batch.at(0, 1) = 3.0;
    batch.at(1, 0) = 3.0;
    batch.at(1, 1) = 5.0;
    std::vector<LevelAssignment> a = {{std::vector<int>{0, 0}, batch}};
    ema_update(h, a);

    // count 2, sum (4, 8) -> code ~ (2, 4) up to the epsilon in the divisor
    CHECK(h.level(1).codes.at(0, 0) == doctest::Approx(2.0).epsilon(1e-4));
    CHECK(h.level(1).codes.at(0, 1) == doctest::Approx(4.0).epsilon(1e-4));
}

TEST_CASE("ddi loss composes its three terms with the stated weights") {
    auto qcfg = tiny_cfg(2, 4, 6);
    Setup su(qcfg, 10, 30);
    Tensor en = randn(5, 10, 31), ev = randn(5, 10, 32);

    Tape t;
    tsqa::nn::ParamBind p(t, su.store);
    RvqResult rn = rvq_forward(t, p, su.hierarchy, t.input(en, true));
    RvqResult rv = rvq_forward(t, p, su.hierarchy, t.input(ev, true));
    DdiLossConfig cfg;
    CHECK(cfg.alpha == 5.0);
    CHECK(cfg.beta == 1.0);
    const double total = t.val(ddi_loss(t, rn, rv, cfg)).at(0, 0);

    const Tensor zn = t.val(rn.common), zv = t.val(rv.common);
    const Tensor un = t.val(rn.unique), uv = t.val(rv.unique);
    const double vq = t.val(rn.vq_loss).at(0, 0) + t.val(rv.vq_loss).at(0, 0);
    const double com = 0.5 * (infonce_oracle(zn, zv, cfg.temperature) +
                              infonce_oracle(zv, zn, cfg.temperature));
    double orth = 0.0;
    for (int i = 0; i < 5; ++i)
        orth += std::abs(row_cosine(zn, un, i)) + std::abs(row_cosine(zv, uv, i));
    orth = 0.5 * orth / 5.0;

    CHECK(total == doctest::Approx(vq + cfg.alpha * com + cfg.beta * orth).epsilon(1e-9));
}

TEST_CASE("ddi loss edge cases") {
    Tape t;
    Rng rng(33);
    Value z1 = t.input(randn(1, 6, 34), true);
    Value u0 = t.constant(Tensor::zeros(1, 6));
    Value vq0 = t.constant(Tensor::zeros(1, 1));
    DdiLossConfig cfg;

    // One token: both InfoNCE directions are single-candidate softmaxes, and
    // a zero unique part kills the orthogonality term, so only vq remains.
    const double total = t.val(ddi_loss_parts(t, z1, u0, vq0, z1, u0, vq0, cfg)).at(0, 0);
    CHECK(total == doctest::Approx(0.0).epsilon(1e-12));

    Value z2 = t.input(randn(2, 6, 35), true);
    Value u2 = t.input(randn(2, 6, 36), true);
    CHECK_THROWS(ddi_loss_parts(t, z1, u0, vq0, z2, u2, vq0, cfg));
}

TEST_CASE("mixing hierarchies is rejected") {
    auto qcfg = tiny_cfg(1, 2, 3);
    Setup a(qcfg, 5, 40);
    CodebookHierarchy other(qcfg);
    Rng rng(41);
    other.init_random(rng);

    Tape t;
    tsqa::nn::ParamBind p(t, a.store);
    RvqResult rn = rvq_forward(t, p, a.hierarchy, t.input(randn(3, 5, 42), true));
    RvqResult rv = rvq_forward(t, p, other, t.input(randn(3, 5, 43), true));
    CHECK_THROWS(ddi_loss(t, rn, rv, DdiLossConfig{}));
}

TEST_CASE("projector stand-in keeps the decomposition identity") {
    tsqa::nn::ParamStore store;
    Rng rng(50);
    init_quantizer_params(store, 8, 4, rng);
    Tensor input = randn(5, 8, 51);

    Tape t;
    tsqa::nn::ParamBind p(t, store);
    Value e = t.input(input, true);
    RvqResult res = projector_forward(t, p, e);
    CHECK(res.assignments.empty());
    CHECK(res.hierarchy == nullptr);
    CHECK(t.val(res.vq_loss).at(0, 0) == 0.0);

    Tensor zu = t.val(res.common);
    for (size_t i = 0; i < zu.data.size(); ++i) zu.data[i] += t.val(res.unique).data[i];
    CHECK(tsqa::max_abs_diff(zu, input) < 1e-12);

    // Continuous path: gradients flow through the common part into the input.
    t.backward(t.sum_all(t.mul(res.common, t.constant(randn(5, 8, 52)))));
    double mag = 0.0;
    for (double g : t.grad(e).data) mag = std::max(mag, std::abs(g));
    CHECK(mag > 0.0);
}

TEST_CASE("interaction is an exact no-op at initialization") {
    tsqa::nn::ParamStore store;
    Rng rng(60);
    init_interaction(store, 8, rng);
    Tensor en = randn(4, 8, 61), ev = randn(3, 8, 62);
    Tensor un = randn(3, 8, 63), uv = randn(4, 8, 64);

    Tape t;
    tsqa::nn::ParamBind p(t, store);
    auto [bar_n, bar_v] = unique_interaction(t, p, t.input(en, true), t.input(ev, true),
                                             t.input(un, true), t.input(uv, true));
    CHECK(tsqa::max_abs_diff(t.val(bar_n), en) == 0.0);
    CHECK(tsqa::max_abs_diff(t.val(bar_v), ev) == 0.0);
    CHECK(t.val(bar_n).rows == 4);
    CHECK(t.val(bar_v).rows == 3);
}

TEST_CASE("interaction with zero unique rows leaves tokens unchanged") {
    tsqa::nn::ParamStore store;
    Rng rng(65);
    init_interaction(store, 8, rng);
    // Pretend training happened: output projections are no longer zero.
    store.get("interact.n.o") = randn(8, 8, 66);
    store.get("interact.v.o") = randn(8, 8, 67);

    Tensor en = randn(4, 8, 68), ev = randn(4, 8, 69);
    Tape t;
    tsqa::nn::ParamBind p(t, store);
    auto [bar_n, bar_v] =
        unique_interaction(t, p, t.input(en, true), t.input(ev, true),
                           t.constant(Tensor::zeros(4, 8)), t.constant(Tensor::zeros(4, 8)));
    CHECK(tsqa::max_abs_diff(t.val(bar_n), en) == 0.0);
    CHECK(tsqa::max_abs_diff(t.val(bar_v), ev) == 0.0);
}

TEST_CASE("trained interaction moves gradients into both modalities") {
    tsqa::nn::ParamStore store;
    Rng rng(70);
    init_interaction(store, 8, rng);
    store.get("interact.n.o") = randn(8, 8, 71, 0.3);
    store.get("interact.v.o") = randn(8, 8, 72, 0.3);

    Tape t;
    tsqa::nn::ParamBind p(t, store);
    Value en = t.input(randn(4, 8, 73), true);
    Value ev = t.input(randn(4, 8, 74), true);
    Value un = t.input(randn(4, 8, 75), true);
    Value uv = t.input(randn(4, 8, 76), true);
    auto [bar_n, bar_v] = unique_interaction(t, p, en, ev, un, uv);
    t.backward(t.sum_all(t.mul(t.concat_rows(bar_n, bar_v), t.constant(randn(8, 8, 77)))));

    for (Value v : {en, ev, un, uv}) {
        double mag = 0.0;
        for (double g : t.grad(v).data) mag = std::max(mag, std::abs(g));
        CHECK(mag > 0.0);
    }
    p.collect_grads();
    for (const char* name : {"interact.n.q", "interact.n.o", "interact.v.k", "interact.v.v"}) {
        double mag = 0.0;
        for (double g : store.grad(name).data) mag = std::max(mag, std::abs(g));
        CAPTURE(name);
        CHECK(mag > 0.0);
    }
}
