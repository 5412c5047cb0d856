// Timing comparison between the serial reference kernels and the OpenMP
// versions, plus a bit-exactness check on each shape. Run with no arguments
// for the default sweep or pass "quick" for a short smoke run.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "tsqa/kernels.hpp"
#include "tsqa/rng.hpp"
#include "tsqa/tensor.hpp"

namespace {

using tsqa::Tensor;
using clock_type = std::chrono::steady_clock;

Tensor random_tensor(int rows, int cols, tsqa::Rng& rng) {
    Tensor t(rows, cols);
    for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
    return t;
}

template <typename F>
double time_best_of(int reps, F&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = clock_type::now();
        fn();
        const auto t1 = clock_type::now();
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (a.rows != b.rows || a.cols != b.cols) return false;
    return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

struct Case {
    const char* name;
    int m, k, n;
};

}  // namespace

int main(int argc, char** argv) {
    const bool quick = argc > 1 && std::string(argv[1]) == "quick";
    const int reps = quick ? 2 : 5;
    std::vector<Case> cases = {
        {"small", 64, 64, 64},
        {"tall", 512, 64, 64},
        {"square", 256, 256, 256},
    };
    if (!quick) cases.push_back({"large", 512, 512, 512});

    tsqa::Rng rng(7);
    std::printf("%-8s %12s %12s %8s %s\n", "case", "serial_ms", "omp_ms", "speedup", "exact");
    bool all_exact = true;
    for (const auto& c : cases) {
        const Tensor a = random_tensor(c.m, c.k, rng);
        const Tensor b = random_tensor(c.k, c.n, rng);

        Tensor ref = tsqa::kernels::matmul_serial(a, b);
        Tensor omp = tsqa::kernels::matmul_omp(a, b);
        const bool exact = bit_equal(ref, omp);
        all_exact = all_exact && exact;

        const double ts = time_best_of(reps, [&] { ref = tsqa::kernels::matmul_serial(a, b); });
        const double to = time_best_of(reps, [&] { omp = tsqa::kernels::matmul_omp(a, b); });
        std::printf("%-8s %12.3f %12.3f %8.2fx %s\n", c.name, ts * 1e3, to * 1e3,
                    ts / to, exact ? "yes" : "NO");
    }

    // elementwise kernels on one representative shape
    const Tensor x = random_tensor(512, 512, rng);
    const Tensor y = random_tensor(512, 512, rng);
    const bool add_exact = bit_equal(tsqa::kernels::add_serial(x, y), tsqa::kernels::add_omp(x, y));
    const bool mul_exact = bit_equal(tsqa::kernels::mul_serial(x, y), tsqa::kernels::mul_omp(x, y));
    const bool scale_exact =
        bit_equal(tsqa::kernels::scale_serial(x, 1.7), tsqa::kernels::scale_omp(x, 1.7));
    std::printf("elementwise exact: add=%s mul=%s scale=%s\n", add_exact ? "yes" : "NO",
                mul_exact ? "yes" : "NO", scale_exact ? "yes" : "NO");
    all_exact = all_exact && add_exact && mul_exact && scale_exact;

    if (!all_exact) {
        std::printf("FAIL: OpenMP kernels diverge from the serial reference\n");
        return 1;
    }
    return 0;
}
