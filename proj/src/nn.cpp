#include "tsqa/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "tsqa/rng.hpp"

namespace tsqa::nn {

using diff::Tape;
using diff::Value;

Tensor& ParamStore::create(const std::string& name, Tensor init) {
    if (params_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    grads_[name] = Tensor::zeros(init.rows, init.cols);
    return params_[name] = std::move(init);
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return it->second;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, _] : params_) out.push_back(name);
    return out;  // std::map keeps them sorted
}

Tensor& ParamStore::grad(const std::string& name) {
    auto it = grads_.find(name);
    if (it == grads_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return it->second;
}

void ParamStore::zero_grads() {
    for (auto& [_, g] : grads_) g.fill(0.0);
}

void ParamStore::snap_f32() {
    for (auto& [_, p] : params_) p.snap_f32();
}

Value ParamBind::operator[](const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Value v = tape_->input(store_->get(name), true);
    bound_[name] = v;
    return v;
}

void ParamBind::collect_grads() {
    for (const auto& [name, v] : bound_) {
        const Tensor& src = tape_->grad(v);
        Tensor& dst = store_->grad(name);
        for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
    }
}

Value linear(Tape& t, ParamBind& p, const std::string& prefix, Value x) {
    return t.add(t.matmul(x, p[prefix + ".w"]), p[prefix + ".b"]);
}

Value layer_norm(Tape& t, ParamBind& p, const std::string& prefix, Value x) {
    return t.add(t.mul(t.layer_norm_rows(x), p[prefix + ".g"]), p[prefix + ".b"]);
}

Value attention(Tape& t, ParamBind& p, const std::string& prefix, Value q_in, Value kv_in,
                int heads, bool causal) {
    Value q = linear(t, p, prefix + ".q", q_in);
    Value k = linear(t, p, prefix + ".k", kv_in);
    Value v = linear(t, p, prefix + ".v", kv_in);
    const int dim = t.val(q).cols;
    if (heads <= 0 || dim % heads != 0)
        throw std::invalid_argument("attention dim must split evenly across heads");
    const int dh = dim / heads;
    const int nq = t.val(q).rows;
    const int nk = t.val(k).rows;

    Value ctx;
    for (int h = 0; h < heads; ++h) {
        Value qh = t.slice(q, 0, nq, h * dh, (h + 1) * dh);
        Value kh = t.slice(k, 0, nk, h * dh, (h + 1) * dh);
        Value vh = t.slice(v, 0, nk, h * dh, (h + 1) * dh);
        Value scores = t.scale(t.matmul(qh, kh, false, true), 1.0 / std::sqrt(double(dh)));
        Value probs = t.softmax_rows(scores, causal);
        Value ctx_h = t.matmul(probs, vh);
        ctx = (h == 0) ? ctx_h : t.concat_cols(ctx, ctx_h);
    }
    return linear(t, p, prefix + ".o", ctx);
}

Value transformer_block(Tape& t, ParamBind& p, const std::string& prefix, Value x, int heads,
                        bool causal) {
    Value a_in = layer_norm(t, p, prefix + ".ln1", x);
    Value h = t.add(x, attention(t, p, prefix + ".attn", a_in, a_in, heads, causal));
    Value f_in = layer_norm(t, p, prefix + ".ln2", h);
    Value f = linear(t, p, prefix + ".ffn2", t.gelu(linear(t, p, prefix + ".ffn1", f_in)));
    return t.add(h, f);
}

void init_linear(ParamStore& s, const std::string& prefix, int in, int out, Rng& rng, bool zero) {
    s.create(prefix + ".w", zero ? Tensor::zeros(in, out) : Tensor::xavier(in, out, rng));
    s.create(prefix + ".b", Tensor::zeros(1, out));
}

void init_layer_norm(ParamStore& s, const std::string& prefix, int dim) {
    s.create(prefix + ".g", Tensor::full(1, dim, 1.0));
    s.create(prefix + ".b", Tensor::zeros(1, dim));
}

void init_attention(ParamStore& s, const std::string& prefix, int dim, Rng& rng, bool zero_out) {
    init_linear(s, prefix + ".q", dim, dim, rng);
    init_linear(s, prefix + ".k", dim, dim, rng);
    init_linear(s, prefix + ".v", dim, dim, rng);
    init_linear(s, prefix + ".o", dim, dim, rng, zero_out);
}

void init_transformer_block(ParamStore& s, const std::string& prefix, int dim, int ffn_mult,
                            Rng& rng) {
    init_layer_norm(s, prefix + ".ln1", dim);
    init_attention(s, prefix + ".attn", dim, rng);
    init_layer_norm(s, prefix + ".ln2", dim);
    init_linear(s, prefix + ".ffn1", dim, ffn_mult * dim, rng);
    init_linear(s, prefix + ".ffn2", ffn_mult * dim, dim, rng);
}

}  // namespace tsqa::nn
