#include "tsqa/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace tsqa::optim {

void adamw_step(Tensor& param, const Tensor& grad, ParamState& st, const AdamWConfig& cfg,
                double lr_t) {
    if (!param.same_shape(grad))
        throw std::invalid_argument("adamw_step: grad shape " + grad.shape_str() +
                                    " vs param " + param.shape_str());
    if (st.m.size() == 0) st = ParamState::like(param);

    st.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    for (size_t i = 0; i < param.data.size(); ++i) {
        const double g = grad.data[i];
        st.m.data[i] = cfg.beta1 * st.m.data[i] + (1.0 - cfg.beta1) * g;
        st.v.data[i] = cfg.beta2 * st.v.data[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = st.m.data[i] / bc1;
        const double vhat = st.v.data[i] / bc2;
        param.data[i] -= lr_t * (mhat / (std::sqrt(vhat) + cfg.eps) +
                                 cfg.weight_decay * param.data[i]);
    }
}

double cosine_lr(int64_t step, int64_t total_steps, double warmup_ratio) {
    if (total_steps <= 0) throw std::invalid_argument("cosine_lr: total_steps must be positive");
    if (step < 1) throw std::invalid_argument("cosine_lr: step is 1-based");
    const int64_t warmup =
        std::max<int64_t>(1, static_cast<int64_t>(std::ceil(warmup_ratio * total_steps)));
    if (step <= warmup) return static_cast<double>(step) / static_cast<double>(warmup);
    if (step >= total_steps) return 0.0;
    const double progress =
        static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
    return 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace tsqa::optim
