#include "tsqa/ddi.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "tsqa/pa.hpp"
#include "tsqa/rng.hpp"

namespace tsqa::ddi {

using diff::Tape;
using diff::Value;

void validate(const QuantizerConfig& cfg) {
    if (cfg.levels < 1) throw std::invalid_argument("quantizer needs at least one level");
    if (cfg.base_codes < 1) throw std::invalid_argument("quantizer base_codes must be positive");
    if (cfg.code_dim < 1) throw std::invalid_argument("quantizer code_dim must be positive");
    if (cfg.ema_decay < 0.0 || cfg.ema_decay >= 1.0)
        throw std::invalid_argument("ema_decay must lie in [0, 1)");
    if (!(cfg.ema_eps > 0.0)) throw std::invalid_argument("ema_eps must be positive");
}

CodebookHierarchy::CodebookHierarchy(const QuantizerConfig& cfg) : cfg_(cfg) {
    validate(cfg);
    for (int m = 1; m <= cfg_.levels; ++m) {
        CodebookLevel lvl;
        lvl.codes = Tensor::zeros(codes_at(m), cfg_.code_dim);
        lvl.ema_count = Tensor::zeros(codes_at(m), 1);
        lvl.ema_sum = Tensor::zeros(codes_at(m), cfg_.code_dim);
        levels_.push_back(std::move(lvl));
    }
}

int CodebookHierarchy::window(int level) const {
    if (level < 1 || level > cfg_.levels) throw std::out_of_range("codebook level out of range");
    return 1 << (cfg_.levels - level);
}

int CodebookHierarchy::codes_at(int level) const {
    if (level < 1 || level > cfg_.levels) throw std::out_of_range("codebook level out of range");
    return cfg_.base_codes * (1 << (level - 1));
}

CodebookLevel& CodebookHierarchy::level(int level) {
    if (level < 1 || level > cfg_.levels) throw std::out_of_range("codebook level out of range");
    return levels_[static_cast<size_t>(level - 1)];
}

const CodebookLevel& CodebookHierarchy::level(int level) const {
    if (level < 1 || level > cfg_.levels) throw std::out_of_range("codebook level out of range");
    return levels_[static_cast<size_t>(level - 1)];
}

void CodebookHierarchy::init_from_tokens(const Tensor& tokens, Rng& rng, double noise_sigma) {
    if (tokens.rows < 1 || tokens.cols != cfg_.code_dim)
        throw std::invalid_argument("codebook init needs a nonempty batch in code space");
    for (auto& lvl : levels_) {
        for (int k = 0; k < lvl.codes.rows; ++k) {
            const int src = static_cast<int>(rng.uniform_index(tokens.rows));
            for (int c = 0; c < cfg_.code_dim; ++c)
                lvl.codes.at(k, c) = tokens.at(src, c) + rng.gaussian(0.0, noise_sigma);
            lvl.ema_count.at(k, 0) = 1.0;
            for (int c = 0; c < cfg_.code_dim; ++c) lvl.ema_sum.at(k, c) = lvl.codes.at(k, c);
        }
    }
    initialized_ = true;
}

void CodebookHierarchy::init_random(Rng& rng, double sigma) {
    for (auto& lvl : levels_) {
        lvl.codes = Tensor::gaussian(lvl.codes.rows, lvl.codes.cols, sigma, rng);
        lvl.ema_count.fill(1.0);
        lvl.ema_sum = lvl.codes;
    }
    initialized_ = true;
}

void CodebookHierarchy::snap_f32() {
    for (auto& lvl : levels_) {
        lvl.codes.snap_f32();
        lvl.ema_count.snap_f32();
        lvl.ema_sum.snap_f32();
    }
}

Tensor pool_broadcast(const Tensor& residuals, int window) {
    if (window < 1) throw std::invalid_argument("pool window must be at least 1");
    if (window == 1) return residuals;
    Tensor out(residuals.rows, residuals.cols);
    for (int s = 0; s * window < residuals.rows; ++s) {
        const int begin = s * window;
        const int end = std::min(begin + window, residuals.rows);
        for (int c = 0; c < residuals.cols; ++c) {
            double mean = 0.0;
            for (int r = begin; r < end; ++r) mean += residuals.at(r, c);
            mean /= (end - begin);
            for (int r = begin; r < end; ++r) out.at(r, c) = mean;
        }
    }
    return out;
}

std::pair<std::vector<int>, Tensor> vq_assign(const Tensor& codes, const Tensor& vectors) {
    if (codes.rows == 0) throw std::invalid_argument("cannot assign against an empty codebook");
    if (codes.cols != vectors.cols)
        throw std::invalid_argument("code dimension does not match the vectors");
    std::vector<int> indices(static_cast<size_t>(vectors.rows));
    Tensor quantized(vectors.rows, vectors.cols);
    for (int i = 0; i < vectors.rows; ++i) {
        int best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (int k = 0; k < codes.rows; ++k) {
            double dist = 0.0;
            for (int c = 0; c < codes.cols; ++c) {
                const double diff = vectors.at(i, c) - codes.at(k, c);
                dist += diff * diff;
            }
            if (dist < best_dist) {  // strict, so ties keep the lowest index
                best_dist = dist;
                best = k;
            }
        }
        indices[static_cast<size_t>(i)] = best;
        for (int c = 0; c < codes.cols; ++c) quantized.at(i, c) = codes.at(best, c);
    }
    return {std::move(indices), std::move(quantized)};
}

void init_quantizer_params(nn::ParamStore& s, int dim, int code_dim, Rng& rng) {
    nn::init_linear(s, "quant.down", dim, code_dim, rng);
    nn::init_linear(s, "quant.up", code_dim, dim, rng);
}

RvqResult rvq_forward(Tape& t, nn::ParamBind& p, const CodebookHierarchy& h, Value e) {
    if (!h.initialized())
        throw std::logic_error("codebooks must be initialized before quantization");
    RvqResult out;
    out.hierarchy = &h;
    out.down = nn::linear(t, p, "quant.down", e);
    const Tensor tilde = t.val(out.down);
    const int n = tilde.rows;
    if (n < 1) throw std::invalid_argument("quantization needs at least one token");

    Tensor residual = tilde;
    Tensor q_total = Tensor::zeros(n, tilde.cols);
    for (int m = 1; m <= h.levels(); ++m) {
        Tensor pooled = pool_broadcast(residual, h.window(m));
        auto [indices, q] = vq_assign(h.level(m).codes, pooled);
        for (size_t i = 0; i < residual.data.size(); ++i) {
            residual.data[i] -= q.data[i];
            q_total.data[i] += q.data[i];
        }
        out.assignments.push_back({std::move(indices), std::move(pooled)});
        double norm_sum = 0.0;
        for (int r = 0; r < n; ++r) {
            double sq = 0.0;
            for (int c = 0; c < residual.cols; ++c) sq += residual.at(r, c) * residual.at(r, c);
            norm_sum += std::sqrt(sq);
        }
        out.residual_norms.push_back(norm_sum / n);
    }

    Value q_const = t.constant(q_total);
    Value ste = t.straight_through(q_const, out.down);
    out.common = nn::linear(t, p, "quant.up", ste);
    out.unique = t.sub(e, out.common);
    Value gap = t.sub(out.down, q_const);
    out.vq_loss = t.scale(t.sum_all(t.mul(gap, gap)), 1.0 / n);
    return out;
}

RvqResult projector_forward(Tape& t, nn::ParamBind& p, Value e) {
    RvqResult out;
    out.down = nn::linear(t, p, "quant.down", e);
    out.common = nn::linear(t, p, "quant.up", t.gelu(out.down));
    out.unique = t.sub(e, out.common);
    out.vq_loss = t.constant(Tensor::zeros(1, 1));
    return out;
}

void ema_update(CodebookHierarchy& h,
                const std::vector<const std::vector<LevelAssignment>*>& batches) {
    const auto& cfg = h.config();
    for (int m = 1; m <= h.levels(); ++m) {
        CodebookLevel& lvl = h.level(m);
        Tensor count = Tensor::zeros(lvl.codes.rows, 1);
        Tensor sum = Tensor::zeros(lvl.codes.rows, lvl.codes.cols);
        for (const auto* batch : batches) {
            if (static_cast<int>(batch->size()) != h.levels())
                throw std::invalid_argument("assignment batch does not match the hierarchy");
            const LevelAssignment& a = (*batch)[static_cast<size_t>(m - 1)];
            for (int i = 0; i < a.pooled.rows; ++i) {
                const int k = a.indices[static_cast<size_t>(i)];
                count.at(k, 0) += 1.0;
                for (int c = 0; c < sum.cols; ++c) sum.at(k, c) += a.pooled.at(i, c);
            }
        }
        for (int k = 0; k < lvl.codes.rows; ++k) {
            lvl.ema_count.at(k, 0) =
                cfg.ema_decay * lvl.ema_count.at(k, 0) + (1.0 - cfg.ema_decay) * count.at(k, 0);
            for (int c = 0; c < sum.cols; ++c)
                lvl.ema_sum.at(k, c) =
                    cfg.ema_decay * lvl.ema_sum.at(k, c) + (1.0 - cfg.ema_decay) * sum.at(k, c);
            if (count.at(k, 0) > 0.0) {
                const double denom = lvl.ema_count.at(k, 0) + cfg.ema_eps;
                for (int c = 0; c < sum.cols; ++c)
                    lvl.codes.at(k, c) = lvl.ema_sum.at(k, c) / denom;
            }
        }
    }
}

void ema_update(CodebookHierarchy& h, const std::vector<LevelAssignment>& assignments) {
    ema_update(h, std::vector<const std::vector<LevelAssignment>*>{&assignments});
}

Value ddi_loss_parts(Tape& t, Value common_n, Value unique_n, Value vq_n, Value common_v,
                     Value unique_v, Value vq_v, const DdiLossConfig& cfg) {
    const int n = t.val(common_n).rows;
    if (t.val(common_v).rows != n || t.val(unique_n).rows != n || t.val(unique_v).rows != n)
        throw std::invalid_argument("disentanglement loss inputs must share the token count");

    Value vq = t.add(vq_n, vq_v);
    Value com = t.scale(t.add(align::infonce(t, common_n, common_v, cfg.temperature, false),
                              align::infonce(t, common_v, common_n, cfg.temperature, false)),
                        0.5);
    Value orth = t.scale(t.add(t.mean_all(t.abs(t.cos_sim_rows(common_n, unique_n))),
                               t.mean_all(t.abs(t.cos_sim_rows(common_v, unique_v)))),
                         0.5);
    return t.add(vq, t.add(t.scale(com, cfg.alpha), t.scale(orth, cfg.beta)));
}

Value ddi_loss(Tape& t, const RvqResult& numeric, const RvqResult& visual,
               const DdiLossConfig& cfg) {
    if (numeric.hierarchy != visual.hierarchy)
        throw std::invalid_argument("both modalities must be quantized by the shared hierarchy");
    return ddi_loss_parts(t, numeric.common, numeric.unique, numeric.vq_loss, visual.common,
                          visual.unique, visual.vq_loss, cfg);
}

void init_interaction(nn::ParamStore& s, int dim, Rng& rng) {
    for (const char* side : {"interact.n", "interact.v"}) {
        const std::string prefix(side);
        s.create(prefix + ".q", Tensor::xavier(dim, dim, rng));
        s.create(prefix + ".k", Tensor::xavier(dim, dim, rng));
        s.create(prefix + ".v", Tensor::xavier(dim, dim, rng));
        s.create(prefix + ".o", Tensor::zeros(dim, dim));
    }
}

namespace {

// Single-head cross-attention with bias-free projections; the zero-init
// output projection makes the interaction an exact no-op at the start.
Value cross_attend(Tape& t, nn::ParamBind& p, const std::string& prefix, Value queries,
                   Value keys_values) {
    Value q = t.matmul(queries, p[prefix + ".q"]);
    Value k = t.matmul(keys_values, p[prefix + ".k"]);
    Value v = t.matmul(keys_values, p[prefix + ".v"]);
    const double scale = 1.0 / std::sqrt(static_cast<double>(t.val(q).cols));
    Value probs = t.softmax_rows(t.scale(t.matmul(q, k, false, true), scale));
    return t.matmul(t.matmul(probs, v), p[prefix + ".o"]);
}

}  // namespace

std::pair<Value, Value> unique_interaction(Tape& t, nn::ParamBind& p, Value e_n, Value e_v,
                                           Value u_n, Value u_v) {
    Value bar_n = t.add(e_n, cross_attend(t, p, "interact.n", e_n, u_v));
    Value bar_v = t.add(e_v, cross_attend(t, p, "interact.v", e_v, u_n));
    return {bar_n, bar_v};
}

}  // namespace tsqa::ddi
