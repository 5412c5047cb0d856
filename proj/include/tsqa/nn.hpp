#pragma once

#include <map>
#include <string>
#include <vector>

#include "tsqa/tape.hpp"

namespace tsqa {
class Rng;
}

namespace tsqa::nn {

// Named master copies of learnable tensors plus matching gradient
// accumulators. Forward passes bind these onto a tape per step; the
// optimizer walks the names.
class ParamStore {
public:
    Tensor& create(const std::string& name, Tensor init);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) != 0; }
    std::vector<std::string> names() const;  // sorted, stable iteration order
    size_t count() const { return params_.size(); }

    Tensor& grad(const std::string& name);
    void zero_grads();
    // Keeps every master tensor on the float32 grid so checkpoints
    // round-trip bit-for-bit.
    void snap_f32();

private:
    std::map<std::string, Tensor> params_;
    std::map<std::string, Tensor> grads_;
};

// Binds parameters onto one tape as gradient leaves, lazily and at most once
// per name, then moves the accumulated tape gradients back into the store.
class ParamBind {
public:
    ParamBind(diff::Tape& tape, ParamStore& store) : tape_(&tape), store_(&store) {}

    diff::Value operator[](const std::string& name);
    void collect_grads();

private:
    diff::Tape* tape_;
    ParamStore* store_;
    std::map<std::string, diff::Value> bound_;
};

// y = x W + b, params "<prefix>.w" and "<prefix>.b".
diff::Value linear(diff::Tape& t, ParamBind& p, const std::string& prefix, diff::Value x);

// Learnable layer norm: standardize rows, then scale/shift with
// "<prefix>.g" / "<prefix>.b" row vectors.
diff::Value layer_norm(diff::Tape& t, ParamBind& p, const std::string& prefix, diff::Value x);

// Multi-head scaled dot-product attention over packed projections
// "<prefix>.q|k|v|o" (each a linear). q_in supplies the queries, kv_in keys
// and values; heads split the model dim evenly.
diff::Value attention(diff::Tape& t, ParamBind& p, const std::string& prefix, diff::Value q_in,
                      diff::Value kv_in, int heads, bool causal);

// Pre-norm block: x + Attn(LN(x)) followed by x + FFN(LN(x)).
diff::Value transformer_block(diff::Tape& t, ParamBind& p, const std::string& prefix,
                              diff::Value x, int heads, bool causal);

// Parameter registration mirrors of the forward helpers.
void init_linear(ParamStore& s, const std::string& prefix, int in, int out, Rng& rng,
                 bool zero = false);
void init_layer_norm(ParamStore& s, const std::string& prefix, int dim);
void init_attention(ParamStore& s, const std::string& prefix, int dim, Rng& rng,
                    bool zero_out = false);
void init_transformer_block(ParamStore& s, const std::string& prefix, int dim, int ffn_mult,
                            Rng& rng);

}  // namespace tsqa::nn
