#pragma once

#include "tsqa/tensor.hpp"

namespace tsqa::kernels {

// Canonical dot product used by every matmul variant. Four independent
// accumulators give the compiler vectorizable dependency chains without
// -ffast-math, and fixing the order here keeps serial and OpenMP results
// bit-identical regardless of thread count.
double dot(const double* a, const double* b, int n);

// Process-wide switch between the OpenMP kernels and the serial reference.
// The arithmetic is identical either way; this exists so tests and the
// benchmark can pit the two implementations against each other.
void set_parallel(bool on);
bool parallel_enabled();

// C = op(A) * op(B) where op transposes when the flag is set. Operands are
// packed so the inner loop always runs over contiguous memory. Transposing
// both sides is unsupported (nothing in the pipeline needs it).
Tensor matmul_serial(const Tensor& a, const Tensor& b, bool ta = false, bool tb = false);
Tensor matmul_omp(const Tensor& a, const Tensor& b, bool ta = false, bool tb = false);
Tensor matmul(const Tensor& a, const Tensor& b, bool ta = false, bool tb = false);

// Elementwise kernels (same-shape operands).
Tensor add_serial(const Tensor& a, const Tensor& b);
Tensor add_omp(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);

Tensor mul_serial(const Tensor& a, const Tensor& b);
Tensor mul_omp(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale_serial(const Tensor& a, double c);
Tensor scale_omp(const Tensor& a, double c);
Tensor scale(const Tensor& a, double c);

Tensor transpose(const Tensor& a);

}  // namespace tsqa::kernels
