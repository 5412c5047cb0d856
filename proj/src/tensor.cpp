#include "tsqa/tensor.hpp"

#include <cmath>
#include <stdexcept>

#include "tsqa/rng.hpp"

namespace tsqa {

Tensor Tensor::full(int r, int c, double v) {
    Tensor t(r, c);
    t.fill(v);
    return t;
}

Tensor Tensor::xavier(int r, int c, Rng& rng) {
    Tensor t(r, c);
    const double bound = std::sqrt(6.0 / (r + c));
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

Tensor Tensor::gaussian(int r, int c, double sigma, Rng& rng) {
    Tensor t(r, c);
    for (auto& v : t.data) v = rng.gaussian(0.0, sigma);
    return t;
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return Tensor();
    Tensor t(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (int i = 0; i < t.rows; ++i) {
        if (static_cast<int>(rows[i].size()) != t.cols)
            throw std::invalid_argument("from_rows: ragged input");
        for (int j = 0; j < t.cols; ++j) t.at(i, j) = rows[i][j];
    }
    return t;
}

std::string Tensor::shape_str() const {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

bool Tensor::has_nan() const {
    for (double v : data)
        if (std::isnan(v)) return true;
    return false;
}

void Tensor::snap_f32() {
    for (auto& v : data) v = static_cast<double>(static_cast<float>(v));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace tsqa
