#pragma once

#include <cstdint>

#include "tsqa/tensor.hpp"

namespace tsqa::optim {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Per-parameter optimizer state. The step count is per parameter so that a
// tensor unfrozen mid-run gets correct bias correction from its first real
// update.
struct ParamState {
    Tensor m;  // first moment
    Tensor v;  // second moment
    int64_t t = 0;

    static ParamState like(const Tensor& p) { return {Tensor(p.rows, p.cols), Tensor(p.rows, p.cols), 0}; }
};

// One AdamW update in place. Weight decay is decoupled: it scales the
// parameter by (1 - lr_t * wd) independently of the moment term, so a zero
// gradient still decays the weight.
void adamw_step(Tensor& param, const Tensor& grad, ParamState& st, const AdamWConfig& cfg,
                double lr_t);

// Learning-rate multiplier in [0, 1]: linear warmup over
// ceil(warmup_ratio * total) steps, then cosine decay to zero at the final
// step. `step` is 1-based.
double cosine_lr(int64_t step, int64_t total_steps, double warmup_ratio);

}  // namespace tsqa::optim
