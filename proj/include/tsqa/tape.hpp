#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "tsqa/tensor.hpp"

namespace tsqa::diff {

class Tape;

// Lightweight handle to a node on a tape.
struct Value {
    Tape* tape = nullptr;
    int id = -1;
    bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode autodiff over a flat tape of matrix operations; every loss in
// the pipeline is built on it. Ops record a forward closure (so the tape can
// be replayed bit-for-bit) and a backward closure (chain rule into the
// parents). backward() visits nodes in reverse creation order exactly once.
class Tape {
public:
    Tape() = default;
    // Node closures capture the tape address, so the tape must stay put.
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf holding external data. Gradients accumulate into it only when
    // requires_grad is set.
    Value input(const Tensor& t, bool requires_grad);
    Value constant(const Tensor& t) { return input(t, false); }

    // Elementwise sum. b may also be a 1xC row vector broadcast over a's rows.
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    // Elementwise product. b may also be a 1xC row vector broadcast over rows.
    Value mul(Value a, Value b);
    Value scale(Value a, double c);

    // op(a) * op(b); transpose flags mirror the kernel layer.
    Value matmul(Value a, Value b, bool ta = false, bool tb = false);

    // Row-wise softmax with max subtraction. With causal set, entry (i, j)
    // for j > i is masked out (requires a square input).
    Value softmax_rows(Value a, bool causal = false);
    // Row-wise log softmax, the numerically safe path for cross-entropy and
    // InfoNCE losses.
    Value log_softmax_rows(Value a);
    // Row-wise standardization with population variance; no learnable terms
    // (models apply gain/bias as separate row-vector params).
    Value layer_norm_rows(Value a, double eps = 1e-5);

    Value concat_rows(Value a, Value b);
    Value concat_cols(Value a, Value b);
    // Half-open row/col ranges.
    Value slice(Value a, int r0, int r1, int c0, int c1);
    Value slice_rows(Value a, int r0, int r1);

    Value mean_all(Value a);
    Value sum_all(Value a);
    // Column means: [R,C] -> [1,C].
    Value mean_rows(Value a);

    // Pairwise cosine similarities between rows of a and rows of b -> [Na,Nb].
    // Norms are floored at 1e-12; the backward honors the clamp.
    Value cos_sim_matrix(Value a, Value b);
    // Row-by-row cosine similarity -> [N,1].
    Value cos_sim_rows(Value a, Value b);

    Value log(Value a);
    Value exp(Value a);
    Value abs(Value a);
    Value gelu(Value a);

    // Identity forward, zero backward.
    Value stop_grad(Value a);
    // Forward copies `quantized` verbatim; backward routes the output
    // gradient untouched into `grad_target`. This is the straight-through
    // estimator: downstream gradients w.r.t. grad_target equal the gradients
    // w.r.t. the quantized path exactly.
    Value straight_through(Value quantized, Value grad_target);

    // out[i,0] = a[i, idx[i]]; the usual target-selection step of a
    // cross-entropy loss.
    Value pick(Value a, std::vector<int> idx);
    // Embedding lookup: out[i,:] = table[ids[i],:], scatter-add backward.
    Value gather_rows(Value table, std::vector<int> ids);

    const Tensor& val(Value v) const;
    const Tensor& grad(Value v) const;
    const std::string& op_name(Value v) const;

    // Overwrites one entry of a leaf's value. Finite differencing pokes a
    // coordinate and replays; only leaves may be edited.
    void poke_leaf(Value leaf, size_t flat_index, double v);

    // Seeds the (1x1) loss node with gradient 1 and propagates through the
    // tape in reverse creation order, each node exactly once.
    void backward(Value loss);
    void zero_grad();

    // Recomputes every non-leaf value in creation order from the recorded
    // closures. A replayed tape must match the original bit-for-bit.
    void replay();

    size_t size() const { return nodes_.size(); }
    void clear();

private:
    struct Node {
        Tensor val;
        Tensor grad;
        bool requires_grad = false;
        bool touched = false;  // received a gradient contribution
        std::string op;
        std::vector<int> parents;
        std::function<Tensor()> forward;        // empty for leaves
        std::function<void(const Tensor&)> back;  // empty when nothing to propagate
    };

    Value push(std::string op, std::vector<int> parents, Tensor val,
               std::function<Tensor()> fwd, std::function<void(const Tensor&)> back);
    Node& node(Value v);
    const Node& node(Value v) const;
    void check_mine(Value v) const;
    // Accumulates g into node id's gradient and marks it touched.
    void accum(int id, const Tensor& g);
    void accum_at(int id, int r, int c, double g);

    // deque so that Tensor references handed out by val()/grad() survive
    // later node creation.
    std::deque<Node> nodes_;
};

}  // namespace tsqa::diff
