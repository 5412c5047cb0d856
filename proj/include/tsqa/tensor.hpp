#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tsqa {

class Rng;

// Dense row-major matrix of doubles. Everything in the pipeline is rank 2;
// vectors are 1xN or Nx1 as context demands. Desk-scale sizes, so value
// semantics and no views.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    static Tensor zeros(int r, int c) { return Tensor(r, c); }
    static Tensor full(int r, int c, double v);
    // Uniform Xavier init scaled by fan-in/fan-out, the default for weights.
    static Tensor xavier(int r, int c, Rng& rng);
    static Tensor gaussian(int r, int c, double sigma, Rng& rng);
    static Tensor from_rows(const std::vector<std::vector<double>>& rows);

    double& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }
    double* row_ptr(int i) { return data.data() + static_cast<size_t>(i) * cols; }
    const double* row_ptr(int i) const { return data.data() + static_cast<size_t>(i) * cols; }

    size_t size() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const;

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
    bool has_nan() const;

    // Rounds every entry to the nearest float32-representable double.
    // Learnable state is snapped after every update so that the float32
    // checkpoint format round-trips bit-for-bit.
    void snap_f32();
};

// Max absolute elementwise difference; tensors must have the same shape.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace tsqa
