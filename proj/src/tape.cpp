#include "tsqa/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "tsqa/kernels.hpp"

namespace tsqa::diff {

namespace {

constexpr double kNormFloor = 1e-12;

[[noreturn]] void fail(const std::string& op, const std::string& msg) {
    throw std::invalid_argument(op + ": " + msg);
}

void require(bool ok, const char* op, const std::string& msg) {
    if (!ok) fail(op, msg);
}

double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_deriv(double x) {
    const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
}

}  // namespace

Value Tape::push(std::string op, std::vector<int> parents, Tensor val,
                 std::function<Tensor()> fwd, std::function<void(const Tensor&)> back) {
    Node n;
    n.val = std::move(val);
    n.grad = Tensor(n.val.rows, n.val.cols);
    n.op = std::move(op);
    n.parents = std::move(parents);
    for (int p : n.parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
    n.forward = std::move(fwd);
    // Constant subgraphs need no backward work at all.
    if (n.requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Value{this, static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Value v) {
    check_mine(v);
    return nodes_[v.id];
}

const Tape::Node& Tape::node(Value v) const {
    check_mine(v);
    return nodes_[v.id];
}

void Tape::check_mine(Value v) const {
    if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
        throw std::invalid_argument("tape: value handle does not belong to this tape");
}

void Tape::accum(int id, const Tensor& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.grad.same_shape(g))
        fail("accum", "gradient shape " + g.shape_str() + " vs node " + n.grad.shape_str());
    for (size_t i = 0; i < g.data.size(); ++i) n.grad.data[i] += g.data[i];
    n.touched = true;
}

void Tape::accum_at(int id, int r, int c, double g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    n.grad.at(r, c) += g;
    n.touched = true;
}

const Tensor& Tape::val(Value v) const { return node(v).val; }
const Tensor& Tape::grad(Value v) const { return node(v).grad; }
const std::string& Tape::op_name(Value v) const { return node(v).op; }

void Tape::poke_leaf(Value leaf, size_t flat_index, double v) {
    Node& n = node(leaf);
    require(n.op == "leaf", "poke_leaf", "node is a " + n.op + ", not a leaf");
    require(flat_index < n.val.data.size(), "poke_leaf", "index out of range");
    n.val.data[flat_index] = v;
}

void Tape::zero_grad() {
    for (auto& n : nodes_) {
        n.grad.fill(0.0);
        n.touched = false;
    }
}

void Tape::clear() { nodes_.clear(); }

void Tape::replay() {
    for (auto& n : nodes_)
        if (n.forward) n.val = n.forward();
}

void Tape::backward(Value loss) {
    Node& l = node(loss);
    require(l.val.rows == 1 && l.val.cols == 1, "backward",
            "loss must be 1x1, got " + l.val.shape_str());
    l.grad.at(0, 0) += 1.0;
    l.touched = true;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.touched && n.back) n.back(n.grad);
    }
}

Value Tape::input(const Tensor& t, bool requires_grad) {
    Node n;
    n.val = t;
    n.grad = Tensor(t.rows, t.cols);
    n.requires_grad = requires_grad;
    n.op = "leaf";
    nodes_.push_back(std::move(n));
    return Value{this, static_cast<int>(nodes_.size()) - 1};
}

Value Tape::add(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    const bool bcast = B.rows == 1 && A.rows > 1 && B.cols == A.cols;
    require(bcast || A.same_shape(B), "add",
            "shapes " + A.shape_str() + " and " + B.shape_str());
    auto fwd = [this, ai = a.id, bi = b.id, bcast]() {
        const Tensor& x = nodes_[ai].val;
        const Tensor& y = nodes_[bi].val;
        if (!bcast) return kernels::add(x, y);
        Tensor out = x;
        for (int i = 0; i < out.rows; ++i)
            for (int j = 0; j < out.cols; ++j) out.at(i, j) += y.at(0, j);
        return out;
    };
    auto back = [this, ai = a.id, bi = b.id, bcast](const Tensor& g) {
        accum(ai, g);
        if (!bcast) {
            accum(bi, g);
        } else {
            Tensor gb(1, g.cols);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) gb.at(0, j) += g.at(i, j);
            accum(bi, gb);
        }
    };
    return push("add", {a.id, b.id}, fwd(), fwd, back);
}

Value Tape::sub(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.same_shape(B), "sub", "shapes " + A.shape_str() + " and " + B.shape_str());
    auto fwd = [this, ai = a.id, bi = b.id]() {
        const Tensor& x = nodes_[ai].val;
        const Tensor& y = nodes_[bi].val;
        Tensor out(x.rows, x.cols);
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = x.data[i] - y.data[i];
        return out;
    };
    auto back = [this, ai = a.id, bi = b.id](const Tensor& g) {
        accum(ai, g);
        if (!nodes_[bi].requires_grad) return;
        Tensor gb(g.rows, g.cols);
        for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] = -g.data[i];
        accum(bi, gb);
    };
    return push("sub", {a.id, b.id}, fwd(), fwd, back);
}

Value Tape::mul(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    const bool bcast = B.rows == 1 && A.rows > 1 && B.cols == A.cols;
    require(bcast || A.same_shape(B), "mul",
            "shapes " + A.shape_str() + " and " + B.shape_str());
    auto fwd = [this, ai = a.id, bi = b.id, bcast]() {
        const Tensor& x = nodes_[ai].val;
        const Tensor& y = nodes_[bi].val;
        if (!bcast) return kernels::mul(x, y);
        Tensor out = x;
        for (int i = 0; i < out.rows; ++i)
            for (int j = 0; j < out.cols; ++j) out.at(i, j) *= y.at(0, j);
        return out;
    };
    auto back = [this, ai = a.id, bi = b.id, bcast](const Tensor& g) {
        const Tensor& x = nodes_[ai].val;
        const Tensor& y = nodes_[bi].val;
        if (!bcast) {
            if (nodes_[ai].requires_grad) accum(ai, kernels::mul(g, y));
            if (nodes_[bi].requires_grad) accum(bi, kernels::mul(g, x));
            return;
        }
        if (nodes_[ai].requires_grad) {
            Tensor ga(g.rows, g.cols);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) ga.at(i, j) = g.at(i, j) * y.at(0, j);
            accum(ai, ga);
        }
        if (nodes_[bi].requires_grad) {
            Tensor gb(1, g.cols);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) gb.at(0, j) += g.at(i, j) * x.at(i, j);
            accum(bi, gb);
        }
    };
    return push("mul", {a.id, b.id}, fwd(), fwd, back);
}

Value Tape::scale(Value a, double c) {
    auto fwd = [this, ai = a.id, c]() { return kernels::scale(nodes_[ai].val, c); };
    auto back = [this, ai = a.id, c](const Tensor& g) { accum(ai, kernels::scale(g, c)); };
    return push("scale", {a.id}, fwd(), fwd, back);
}

Value Tape::matmul(Value a, Value b, bool ta, bool tb) {
    require(!(ta && tb), "matmul", "transposing both operands is unsupported");
    auto fwd = [this, ai = a.id, bi = b.id, ta, tb]() {
        return kernels::matmul(nodes_[ai].val, nodes_[bi].val, ta, tb);
    };
    auto back = [this, ai = a.id, bi = b.id, ta, tb](const Tensor& g) {
        const Tensor& A = nodes_[ai].val;
        const Tensor& B = nodes_[bi].val;
        if (!ta && !tb) {
            if (nodes_[ai].requires_grad) accum(ai, kernels::matmul(g, B, false, true));
            if (nodes_[bi].requires_grad) accum(bi, kernels::matmul(A, g, true, false));
        } else if (ta) {  // C = A^T B
            if (nodes_[ai].requires_grad) accum(ai, kernels::matmul(B, g, false, true));
            if (nodes_[bi].requires_grad) accum(bi, kernels::matmul(A, g, false, false));
        } else {  // C = A B^T
            if (nodes_[ai].requires_grad) accum(ai, kernels::matmul(g, B, false, false));
            if (nodes_[bi].requires_grad) accum(bi, kernels::matmul(g, A, true, false));
        }
    };
    Tensor out = kernels::matmul(val(a), val(b), ta, tb);
    return push("matmul", {a.id, b.id}, std::move(out), fwd, back);
}

Value Tape::softmax_rows(Value a, bool causal) {
    const Tensor& A = val(a);
    require(!causal || A.rows == A.cols, "softmax_rows",
            "causal mask needs a square matrix, got " + A.shape_str());
    auto fwd = [this, ai = a.id, causal]() {
        const Tensor& x = nodes_[ai].val;
        Tensor out(x.rows, x.cols);
        for (int i = 0; i < x.rows; ++i) {
            const int lim = causal ? i + 1 : x.cols;
            double m = x.at(i, 0);
            for (int j = 1; j < lim; ++j) m = std::max(m, x.at(i, j));
            double z = 0.0;
            for (int j = 0; j < lim; ++j) {
                const double e = std::exp(x.at(i, j) - m);
                out.at(i, j) = e;
                z += e;
            }
            for (int j = 0; j < lim; ++j) out.at(i, j) /= z;
            for (int j = lim; j < x.cols; ++j) out.at(i, j) = 0.0;
        }
        return out;
    };
    auto back = [this, ai = a.id, me = static_cast<int>(nodes_.size()), causal](const Tensor& g) {
        const Tensor& p = nodes_[me].val;
        Tensor gx(g.rows, g.cols);
        for (int i = 0; i < g.rows; ++i) {
            const int lim = causal ? i + 1 : g.cols;
            double s = 0.0;
            for (int j = 0; j < lim; ++j) s += g.at(i, j) * p.at(i, j);
            for (int j = 0; j < lim; ++j) gx.at(i, j) = p.at(i, j) * (g.at(i, j) - s);
        }
        accum(ai, gx);
    };
    return push("softmax_rows", {a.id}, fwd(), fwd, back);
}

Value Tape::log_softmax_rows(Value a) {
    auto fwd = [this, ai = a.id]() {
        const Tensor& x = nodes_[ai].val;
        Tensor out(x.rows, x.cols);
        for (int i = 0; i < x.rows; ++i) {
            double m = x.at(i, 0);
            for (int j = 1; j < x.cols; ++j) m = std::max(m, x.at(i, j));
            double z = 0.0;
            for (int j = 0; j < x.cols; ++j) z += std::exp(x.at(i, j) - m);
            const double lz = m + std::log(z);
            for (int j = 0; j < x.cols; ++j) out.at(i, j) = x.at(i, j) - lz;
        }
        return out;
    };
    auto back = [this, ai = a.id, me = static_cast<int>(nodes_.size())](const Tensor& g) {
        const Tensor& y = nodes_[me].val;
        Tensor gx(g.rows, g.cols);
        for (int i = 0; i < g.rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < g.cols; ++j) s += g.at(i, j);
            for (int j = 0; j < g.cols; ++j)
                gx.at(i, j) = g.at(i, j) - std::exp(y.at(i, j)) * s;
        }
        accum(ai, gx);
    };
    return push("log_softmax_rows", {a.id}, fwd(), fwd, back);
}

Value Tape::layer_norm_rows(Value a, double eps) {
    auto fwd = [this, ai = a.id, eps]() {
        const Tensor& x = nodes_[ai].val;
        Tensor out(x.rows, x.cols);
        for (int i = 0; i < x.rows; ++i) {
            double mu = 0.0;
            for (int j = 0; j < x.cols; ++j) mu += x.at(i, j);
            mu /= x.cols;
            double var = 0.0;
            for (int j = 0; j < x.cols; ++j) {
                const double d = x.at(i, j) - mu;
                var += d * d;
            }
            var /= x.cols;
            const double inv = 1.0 / std::sqrt(var + eps);
            for (int j = 0; j < x.cols; ++j) out.at(i, j) = (x.at(i, j) - mu) * inv;
        }
        return out;
    };
    auto back = [this, ai = a.id, me = static_cast<int>(nodes_.size()), eps](const Tensor& g) {
        const Tensor& x = nodes_[ai].val;
        const Tensor& y = nodes_[me].val;
        Tensor gx(g.rows, g.cols);
        for (int i = 0; i < g.rows; ++i) {
            double mu = 0.0;
            for (int j = 0; j < x.cols; ++j) mu += x.at(i, j);
            mu /= x.cols;
            double var = 0.0;
            for (int j = 0; j < x.cols; ++j) {
                const double d = x.at(i, j) - mu;
                var += d * d;
            }
            var /= x.cols;
            const double inv = 1.0 / std::sqrt(var + eps);
            double gm = 0.0, gym = 0.0;
            for (int j = 0; j < g.cols; ++j) {
                gm += g.at(i, j);
                gym += g.at(i, j) * y.at(i, j);
            }
            gm /= g.cols;
            gym /= g.cols;
            for (int j = 0; j < g.cols; ++j)
                gx.at(i, j) = inv * (g.at(i, j) - gm - y.at(i, j) * gym);
        }
        accum(ai, gx);
    };
    return push("layer_norm_rows", {a.id}, fwd(), fwd, back);
}

Value Tape::concat_rows(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.cols == B.cols, "concat_rows",
            "column mismatch " + A.shape_str() + " vs " + B.shape_str());
    auto fwd = [this, ai = a.id, bi = b.id]() {
        const Tensor& x = nodes_[ai].val;
        const Tensor& y = nodes_[bi].val;
        Tensor out(x.rows + y.rows, x.cols);
        std::copy(x.data.begin(), x.data.end(), out.data.begin());
        std::copy(y.data.begin(), y.data.end(), out.data.begin() + x.data.size());
        return out;
    };
    auto back = [this, ai = a.id, bi = b.id](const Tensor& g) {
        const int ra = nodes_[ai].val.rows;
        if (nodes_[ai].requires_grad) {
            Tensor ga(ra, g.cols);
            std::copy(g.data.begin(), g.data.begin() + ga.data.size(), ga.data.begin());
            accum(ai, ga);
        }
        if (nodes_[bi].requires_grad) {
            Tensor gb(g.rows - ra, g.cols);
            std::copy(g.data.begin() + static_cast<size_t>(ra) * g.cols, g.data.end(),
                      gb.data.begin());
            accum(bi, gb);
        }
    };
    return push("concat_rows", {a.id, b.id}, fwd(), fwd, back);
}

Value Tape::concat_cols(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.rows == B.rows, "concat_cols",
            "row mismatch " + A.shape_str() + " vs " + B.shape_str());
    auto fwd = [this, ai = a.id, bi = b.id]() {
        const Tensor& x = nodes_[ai].val;
        const Tensor& y = nodes_[bi].val;
        Tensor out(x.rows, x.cols + y.cols);
        for (int i = 0; i < out.rows; ++i) {
            for (int j = 0; j < x.cols; ++j) out.at(i, j) = x.at(i, j);
            for (int j = 0; j < y.cols; ++j) out.at(i, x.cols + j) = y.at(i, j);
        }
        return out;
    };
    auto back = [this, ai = a.id, bi = b.id](const Tensor& g) {
        const int ca = nodes_[ai].val.cols;
        if (nodes_[ai].requires_grad) {
            Tensor ga(g.rows, ca);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < ca; ++j) ga.at(i, j) = g.at(i, j);
            accum(ai, ga);
        }
        if (nodes_[bi].requires_grad) {
            Tensor gb(g.rows, g.cols - ca);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < gb.cols; ++j) gb.at(i, j) = g.at(i, ca + j);
            accum(bi, gb);
        }
    };
    return push("concat_cols", {a.id, b.id}, fwd(), fwd, back);
}

Value Tape::slice(Value a, int r0, int r1, int c0, int c1) {
    const Tensor& A = val(a);
    require(0 <= r0 && r0 < r1 && r1 <= A.rows && 0 <= c0 && c0 < c1 && c1 <= A.cols,
            "slice", "range [" + std::to_string(r0) + "," + std::to_string(r1) + ")x[" +
                         std::to_string(c0) + "," + std::to_string(c1) + ") out of " +
                         A.shape_str());
    auto fwd = [this, ai = a.id, r0, r1, c0, c1]() {
        const Tensor& x = nodes_[ai].val;
        Tensor out(r1 - r0, c1 - c0);
        for (int i = 0; i < out.rows; ++i)
            for (int j = 0; j < out.cols; ++j) out.at(i, j) = x.at(r0 + i, c0 + j);
        return out;
    };
    auto back = [this, ai = a.id, r0, c0](const Tensor& g) {
        Node& pa = nodes_[ai];
        if (!pa.requires_grad) return;
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) pa.grad.at(r0 + i, c0 + j) += g.at(i, j);
        pa.touched = true;
    };
    return push("slice", {a.id}, fwd(), fwd, back);
}

Value Tape::slice_rows(Value a, int r0, int r1) { return slice(a, r0, r1, 0, val(a).cols); }

Value Tape::mean_all(Value a) {
    const double inv = 1.0 / static_cast<double>(val(a).size());
    auto fwd = [this, ai = a.id, inv]() {
        const Tensor& x = nodes_[ai].val;
        double s = 0.0;
        for (double v : x.data) s += v;
        Tensor out(1, 1);
        out.at(0, 0) = s * inv;
        return out;
    };
    auto back = [this, ai = a.id, inv](const Tensor& g) {
        Node& pa = nodes_[ai];
        if (!pa.requires_grad) return;
        const double gv = g.at(0, 0) * inv;
        for (auto& v : pa.grad.data) v += gv;
        pa.touched = true;
    };
    return push("mean_all", {a.id}, fwd(), fwd, back);
}

Value Tape::sum_all(Value a) {
    auto fwd = [this, ai = a.id]() {
        const Tensor& x = nodes_[ai].val;
        double s = 0.0;
        for (double v : x.data) s += v;
        Tensor out(1, 1);
        out.at(0, 0) = s;
        return out;
    };
    auto back = [this, ai = a.id](const Tensor& g) {
        Node& pa = nodes_[ai];
        if (!pa.requires_grad) return;
        const double gv = g.at(0, 0);
        for (auto& v : pa.grad.data) v += gv;
        pa.touched = true;
    };
    return push("sum_all", {a.id}, fwd(), fwd, back);
}

Value Tape::mean_rows(Value a) {
    const double inv = 1.0 / static_cast<double>(val(a).rows);
    auto fwd = [this, ai = a.id, inv]() {
        const Tensor& x = nodes_[ai].val;
        Tensor out(1, x.cols);
        for (int i = 0; i < x.rows; ++i)
            for (int j = 0; j < x.cols; ++j) out.at(0, j) += x.at(i, j);
        for (int j = 0; j < x.cols; ++j) out.at(0, j) *= inv;
        return out;
    };
    auto back = [this, ai = a.id, inv](const Tensor& g) {
        Node& pa = nodes_[ai];
        if (!pa.requires_grad) return;
        for (int i = 0; i < pa.grad.rows; ++i)
            for (int j = 0; j < pa.grad.cols; ++j) pa.grad.at(i, j) += g.at(0, j) * inv;
        pa.touched = true;
    };
    return push("mean_rows", {a.id}, fwd(), fwd, back);
}

namespace {

// Row norms floored so zero rows stay finite; the backward drops the
// self-term for floored rows (the norm is locally constant there).
void row_norms(const Tensor& x, std::vector<double>& n, std::vector<bool>& clamped) {
    n.resize(x.rows);
    clamped.resize(x.rows);
    for (int i = 0; i < x.rows; ++i) {
        const double v = std::sqrt(kernels::dot(x.row_ptr(i), x.row_ptr(i), x.cols));
        clamped[i] = v < kNormFloor;
        n[i] = clamped[i] ? kNormFloor : v;
    }
}

}  // namespace

Value Tape::cos_sim_matrix(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.cols == B.cols, "cos_sim_matrix",
            "dim mismatch " + A.shape_str() + " vs " + B.shape_str());
    auto fwd = [this, ai = a.id, bi = b.id]() {
        const Tensor& x = nodes_[ai].val;
        const Tensor& y = nodes_[bi].val;
        std::vector<double> na, nb;
        std::vector<bool> ca, cb;
        row_norms(x, na, ca);
        row_norms(y, nb, cb);
        Tensor s = kernels::matmul(x, y, false, true);
        for (int i = 0; i < s.rows; ++i)
            for (int j = 0; j < s.cols; ++j) s.at(i, j) /= na[i] * nb[j];
        return s;
    };
    auto back = [this, ai = a.id, bi = b.id, me = static_cast<int>(nodes_.size())](const Tensor& g) {
        const Tensor& x = nodes_[ai].val;
        const Tensor& y = nodes_[bi].val;
        const Tensor& s = nodes_[me].val;
        std::vector<double> na, nb;
        std::vector<bool> ca, cb;
        row_norms(x, na, ca);
        row_norms(y, nb, cb);
        // W_ij = g_ij / (na_i nb_j); da = W y - diag(c) x with
        // c_i = sum_j g_ij s_ij / na_i^2 (zero when the norm was floored).
        Tensor w(g.rows, g.cols);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) w.at(i, j) = g.at(i, j) / (na[i] * nb[j]);
        if (nodes_[ai].requires_grad) {
            Tensor ga = kernels::matmul(w, y, false, false);
            for (int i = 0; i < ga.rows; ++i) {
                if (ca[i]) continue;
                double c = 0.0;
                for (int j = 0; j < g.cols; ++j) c += g.at(i, j) * s.at(i, j);
                c /= na[i] * na[i];
                for (int j = 0; j < ga.cols; ++j) ga.at(i, j) -= c * x.at(i, j);
            }
            accum(ai, ga);
        }
        if (nodes_[bi].requires_grad) {
            Tensor gb = kernels::matmul(w, x, true, false);
            for (int j = 0; j < gb.rows; ++j) {
                if (cb[j]) continue;
                double c = 0.0;
                for (int i = 0; i < g.rows; ++i) c += g.at(i, j) * s.at(i, j);
                c /= nb[j] * nb[j];
                for (int k = 0; k < gb.cols; ++k) gb.at(j, k) -= c * y.at(j, k);
            }
            accum(bi, gb);
        }
    };
    return push("cos_sim_matrix", {a.id, b.id}, fwd(), fwd, back);
}

Value Tape::cos_sim_rows(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.same_shape(B), "cos_sim_rows",
            "shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    auto fwd = [this, ai = a.id, bi = b.id]() {
        const Tensor& x = nodes_[ai].val;
        const Tensor& y = nodes_[bi].val;
        std::vector<double> na, nb;
        std::vector<bool> ca, cb;
        row_norms(x, na, ca);
        row_norms(y, nb, cb);
        Tensor out(x.rows, 1);
        for (int i = 0; i < x.rows; ++i)
            out.at(i, 0) = kernels::dot(x.row_ptr(i), y.row_ptr(i), x.cols) / (na[i] * nb[i]);
        return out;
    };
    auto back = [this, ai = a.id, bi = b.id, me = static_cast<int>(nodes_.size())](const Tensor& g) {
        const Tensor& x = nodes_[ai].val;
        const Tensor& y = nodes_[bi].val;
        const Tensor& s = nodes_[me].val;
        std::vector<double> na, nb;
        std::vector<bool> ca, cb;
        row_norms(x, na, ca);
        row_norms(y, nb, cb);
        for (int i = 0; i < x.rows; ++i) {
            const double gi = g.at(i, 0);
            if (gi == 0.0) continue;
            if (nodes_[ai].requires_grad) {
                Node& pa = nodes_[ai];
                for (int j = 0; j < x.cols; ++j) {
                    double d = y.at(i, j) / (na[i] * nb[i]);
                    if (!ca[i]) d -= s.at(i, 0) * x.at(i, j) / (na[i] * na[i]);
                    pa.grad.at(i, j) += gi * d;
                }
                pa.touched = true;
            }
            if (nodes_[bi].requires_grad) {
                Node& pb = nodes_[bi];
                for (int j = 0; j < x.cols; ++j) {
                    double d = x.at(i, j) / (na[i] * nb[i]);
                    if (!cb[i]) d -= s.at(i, 0) * y.at(i, j) / (nb[i] * nb[i]);
                    pb.grad.at(i, j) += gi * d;
                }
                pb.touched = true;
            }
        }
    };
    return push("cos_sim_rows", {a.id, b.id}, fwd(), fwd, back);
}

Value Tape::log(Value a) {
    auto fwd = [this, ai = a.id]() {
        const Tensor& x = nodes_[ai].val;
        Tensor out(x.rows, x.cols);
        for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = std::log(x.data[i]);
        return out;
    };
    auto back = [this, ai = a.id](const Tensor& g) {
        const Tensor& x = nodes_[ai].val;
        Tensor gx(g.rows, g.cols);
        for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] = g.data[i] / x.data[i];
        accum(ai, gx);
    };
    return push("log", {a.id}, fwd(), fwd, back);
}

Value Tape::exp(Value a) {
    auto fwd = [this, ai = a.id]() {
        const Tensor& x = nodes_[ai].val;
        Tensor out(x.rows, x.cols);
        for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = std::exp(x.data[i]);
        return out;
    };
    auto back = [this, ai = a.id, me = static_cast<int>(nodes_.size())](const Tensor& g) {
        accum(ai, kernels::mul(g, nodes_[me].val));
    };
    return push("exp", {a.id}, fwd(), fwd, back);
}

Value Tape::abs(Value a) {
    auto fwd = [this, ai = a.id]() {
        const Tensor& x = nodes_[ai].val;
        Tensor out(x.rows, x.cols);
        for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = std::abs(x.data[i]);
        return out;
    };
    auto back = [this, ai = a.id](const Tensor& g) {
        const Tensor& x = nodes_[ai].val;
        Tensor gx(g.rows, g.cols);
        for (size_t i = 0; i < g.data.size(); ++i) {
            const double sign = x.data[i] > 0.0 ? 1.0 : (x.data[i] < 0.0 ? -1.0 : 0.0);
            gx.data[i] = g.data[i] * sign;
        }
        accum(ai, gx);
    };
    return push("abs", {a.id}, fwd(), fwd, back);
}

Value Tape::gelu(Value a) {
    auto fwd = [this, ai = a.id]() {
        const Tensor& x = nodes_[ai].val;
        Tensor out(x.rows, x.cols);
        for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = gelu_fwd(x.data[i]);
        return out;
    };
    auto back = [this, ai = a.id](const Tensor& g) {
        const Tensor& x = nodes_[ai].val;
        Tensor gx(g.rows, g.cols);
        for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] = g.data[i] * gelu_deriv(x.data[i]);
        accum(ai, gx);
    };
    return push("gelu", {a.id}, fwd(), fwd, back);
}

Value Tape::stop_grad(Value a) {
    auto fwd = [this, ai = a.id]() { return nodes_[ai].val; };
    Node n;
    n.val = val(a);
    n.grad = Tensor(n.val.rows, n.val.cols);
    n.requires_grad = false;  // nothing upstream ever sees a gradient
    n.op = "stop_grad";
    n.parents = {a.id};
    n.forward = fwd;
    nodes_.push_back(std::move(n));
    return Value{this, static_cast<int>(nodes_.size()) - 1};
}

Value Tape::straight_through(Value quantized, Value grad_target) {
    const Tensor& Q = val(quantized);
    require(Q.same_shape(val(grad_target)), "straight_through",
            "shape mismatch " + Q.shape_str() + " vs " + val(grad_target).shape_str());
    auto fwd = [this, qi = quantized.id]() { return nodes_[qi].val; };
    auto back = [this, ti = grad_target.id](const Tensor& g) { accum(ti, g); };
    return push("straight_through", {quantized.id, grad_target.id}, Q, fwd, back);
}

Value Tape::pick(Value a, std::vector<int> idx) {
    const Tensor& A = val(a);
    require(static_cast<int>(idx.size()) == A.rows, "pick",
            "need one index per row, got " + std::to_string(idx.size()) + " for " +
                A.shape_str());
    for (int v : idx)
        require(0 <= v && v < A.cols, "pick", "index " + std::to_string(v) + " out of range");
    auto fwd = [this, ai = a.id, idx]() {
        const Tensor& x = nodes_[ai].val;
        Tensor out(x.rows, 1);
        for (int i = 0; i < x.rows; ++i) out.at(i, 0) = x.at(i, idx[i]);
        return out;
    };
    auto back = [this, ai = a.id, idx](const Tensor& g) {
        Node& pa = nodes_[ai];
        if (!pa.requires_grad) return;
        for (int i = 0; i < g.rows; ++i) pa.grad.at(i, idx[i]) += g.at(i, 0);
        pa.touched = true;
    };
    return push("pick", {a.id}, fwd(), fwd, back);
}

Value Tape::gather_rows(Value table, std::vector<int> ids) {
    const Tensor& T = val(table);
    require(!ids.empty(), "gather_rows", "empty id list");
    for (int v : ids)
        require(0 <= v && v < T.rows, "gather_rows",
                "row id " + std::to_string(v) + " out of range for " + T.shape_str());
    auto fwd = [this, ti = table.id, ids]() {
        const Tensor& t = nodes_[ti].val;
        Tensor out(static_cast<int>(ids.size()), t.cols);
        for (size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < t.cols; ++j) out.at(static_cast<int>(i), j) = t.at(ids[i], j);
        return out;
    };
    auto back = [this, ti = table.id, ids](const Tensor& g) {
        Node& pt = nodes_[ti];
        if (!pt.requires_grad) return;
        for (size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < g.cols; ++j)
                pt.grad.at(ids[i], j) += g.at(static_cast<int>(i), j);
        pt.touched = true;
    };
    return push("gather_rows", {table.id}, fwd(), fwd, back);
}

}  // namespace tsqa::diff
