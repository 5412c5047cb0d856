#include "tsqa/kernels.hpp"

#include <atomic>
#include <stdexcept>

namespace tsqa::kernels {

namespace {

std::atomic<bool> g_parallel{true};

void check_matmul_shapes(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    if (ta && tb) throw std::invalid_argument("matmul: transposing both operands is unsupported");
    const int ak = ta ? a.rows : a.cols;
    const int bk = tb ? b.cols : b.rows;
    if (ak != bk)
        throw std::invalid_argument("matmul: inner dimension mismatch " + a.shape_str() +
                                    (ta ? "^T" : "") + " x " + b.shape_str() + (tb ? "^T" : ""));
}

}  // namespace

double dot(const double* a, const double* b, int n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int k = 0;
    for (; k + 4 <= n; k += 4) {
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    for (; k < n; ++k) s0 += a[k] * b[k];
    return (s0 + s1) + (s2 + s3);
}

void set_parallel(bool on) { g_parallel.store(on); }
bool parallel_enabled() { return g_parallel.load(); }

Tensor transpose(const Tensor& a) {
    Tensor t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

namespace {

// Packs the operands so rows of `left` and rows of `right` are the dot
// operands: left = op(A), right = op(B)^T.
struct Packed {
    const Tensor* left;
    const Tensor* right;
    Tensor left_store;
    Tensor right_store;
    int m, n, k;
};

Packed pack_operands(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    check_matmul_shapes(a, b, ta, tb);
    Packed p;
    if (ta) {
        p.left_store = transpose(a);
        p.left = &p.left_store;
    } else {
        p.left = &a;
    }
    if (tb) {
        p.right = &b;  // op(B)^T == B when B is used transposed
    } else {
        p.right_store = transpose(b);
        p.right = &p.right_store;
    }
    p.m = p.left->rows;
    p.k = p.left->cols;
    p.n = p.right->rows;
    return p;
}

}  // namespace

Tensor matmul_serial(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    Packed p = pack_operands(a, b, ta, tb);
    Tensor c(p.m, p.n);
    for (int i = 0; i < p.m; ++i) {
        const double* lrow = p.left->row_ptr(i);
        double* crow = c.row_ptr(i);
        for (int j = 0; j < p.n; ++j) crow[j] = dot(lrow, p.right->row_ptr(j), p.k);
    }
    return c;
}

Tensor matmul_omp(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    Packed p = pack_operands(a, b, ta, tb);
    Tensor c(p.m, p.n);
    // Each output row is produced entirely by one thread with the same dot
    // order as the serial kernel, so results match bit-for-bit.
#pragma omp parallel for schedule(static)
    for (int i = 0; i < p.m; ++i) {
        const double* lrow = p.left->row_ptr(i);
        double* crow = c.row_ptr(i);
        for (int j = 0; j < p.n; ++j) crow[j] = dot(lrow, p.right->row_ptr(j), p.k);
    }
    return c;
}

Tensor matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    return parallel_enabled() ? matmul_omp(a, b, ta, tb) : matmul_serial(a, b, ta, tb);
}

#define TSQA_ELEMENTWISE(name, expr)                                              \
    Tensor name##_serial(const Tensor& a, const Tensor& b) {                      \
        if (!a.same_shape(b))                                                     \
            throw std::invalid_argument(#name ": shape mismatch " +               \
                                        a.shape_str() + " vs " + b.shape_str());  \
        Tensor out(a.rows, a.cols);                                               \
        const int n = static_cast<int>(a.size());                                 \
        for (int i = 0; i < n; ++i) out.data[i] = expr;                           \
        return out;                                                               \
    }                                                                             \
    Tensor name##_omp(const Tensor& a, const Tensor& b) {                         \
        if (!a.same_shape(b))                                                     \
            throw std::invalid_argument(#name ": shape mismatch " +               \
                                        a.shape_str() + " vs " + b.shape_str());  \
        Tensor out(a.rows, a.cols);                                               \
        const int n = static_cast<int>(a.size());                                 \
        _Pragma("omp parallel for schedule(static)")                              \
        for (int i = 0; i < n; ++i) out.data[i] = expr;                           \
        return out;                                                               \
    }                                                                             \
    Tensor name(const Tensor& a, const Tensor& b) {                               \
        return parallel_enabled() ? name##_omp(a, b) : name##_serial(a, b);       \
    }

TSQA_ELEMENTWISE(add, a.data[i] + b.data[i])
TSQA_ELEMENTWISE(mul, a.data[i] * b.data[i])

#undef TSQA_ELEMENTWISE

Tensor scale_serial(const Tensor& a, double c) {
    Tensor out(a.rows, a.cols);
    const int n = static_cast<int>(a.size());
    for (int i = 0; i < n; ++i) out.data[i] = a.data[i] * c;
    return out;
}

Tensor scale_omp(const Tensor& a, double c) {
    Tensor out(a.rows, a.cols);
    const int n = static_cast<int>(a.size());
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) out.data[i] = a.data[i] * c;
    return out;
}

Tensor scale(const Tensor& a, double c) {
    return parallel_enabled() ? scale_omp(a, c) : scale_serial(a, c);
}

}  // namespace tsqa::kernels
