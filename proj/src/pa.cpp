#include "tsqa/pa.hpp"

#include <numeric>
#include <stdexcept>

namespace tsqa::align {

using diff::Tape;
using diff::Value;

void validate(const AlignmentConfig& cfg) {
    if (!(cfg.temperature > 0.0))
        throw std::invalid_argument("alignment temperature must be positive");
}

Value infonce(Tape& t, Value anchors, Value positives, double temperature, bool stop_positives) {
    if (!(temperature > 0.0))
        throw std::invalid_argument("alignment temperature must be positive");
    const int rows = t.val(anchors).rows;
    if (rows == 0) throw std::invalid_argument("infonce needs at least one row");
    if (t.val(positives).rows != rows)
        throw std::invalid_argument("infonce anchors and positives must pair up row for row");

    Value pos = stop_positives ? t.stop_grad(positives) : positives;
    Value sims = t.scale(t.cos_sim_matrix(anchors, pos), 1.0 / temperature);
    std::vector<int> diag(static_cast<size_t>(rows));
    std::iota(diag.begin(), diag.end(), 0);
    Value matched = t.pick(t.log_softmax_rows(sims), diag);
    return t.scale(t.sum_all(matched), -1.0);
}

Value pa_loss(Tape& t, Value numeric, Value visual, Value caption, const AlignmentConfig& cfg) {
    validate(cfg);
    const int n = t.val(numeric).rows;
    if (t.val(visual).rows != n || t.val(caption).rows != n)
        throw std::invalid_argument("alignment inputs must share the patch count");

    Value total = t.constant(Tensor::zeros(1, 1));
    if (cfg.numeric_visual)
        total = t.add(total, infonce(t, numeric, visual, cfg.temperature));
    if (cfg.numeric_caption)
        total = t.add(total, infonce(t, numeric, caption, cfg.temperature));
    return total;
}

}  // namespace tsqa::align
