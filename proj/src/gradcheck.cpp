#include "tsqa/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace tsqa::diff {

GradCheckResult finite_diff_check(const std::vector<std::pair<std::string, Tensor>>& inputs,
                                  const LossBuilder& build, double eps) {
    if (inputs.empty()) throw std::invalid_argument("finite_diff_check: no inputs");

    Tape tape;
    std::vector<Value> leaves;
    leaves.reserve(inputs.size());
    for (const auto& [name, t] : inputs) leaves.push_back(tape.input(t, true));
    Value loss = build(tape, leaves);
    if (tape.val(loss).rows != 1 || tape.val(loss).cols != 1)
        throw std::invalid_argument("finite_diff_check: loss must be scalar");
    const double base = tape.val(loss).at(0, 0);

    GradCheckResult res;
    res.loss = base;

    // Determinism gate: an unperturbed replay must reproduce the loss
    // bit-for-bit, otherwise the difference quotients are meaningless.
    tape.replay();
    res.deterministic = tape.val(loss).at(0, 0) == base;
    if (!res.deterministic) return res;

    tape.backward(loss);

    for (size_t p = 0; p < inputs.size(); ++p) {
        const Tensor& analytic = tape.grad(leaves[p]);
        const Tensor& orig = inputs[p].second;
        for (size_t i = 0; i < orig.data.size(); ++i) {
            const double x = orig.data[i];
            tape.poke_leaf(leaves[p], i, x + eps);
            tape.replay();
            const double up = tape.val(loss).at(0, 0);
            tape.poke_leaf(leaves[p], i, x - eps);
            tape.replay();
            const double down = tape.val(loss).at(0, 0);
            tape.poke_leaf(leaves[p], i, x);

            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic.data[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_input = inputs[p].first;
                res.worst_index = static_cast<int>(i);
            }
        }
    }
    return res;
}

}  // namespace tsqa::diff
