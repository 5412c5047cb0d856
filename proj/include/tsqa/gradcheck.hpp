#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tsqa/tape.hpp"

namespace tsqa::diff {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_input;  // name of the input holding the worst coordinate
    int worst_index = -1;     // flat index within that input
    bool deterministic = false;
    double loss = 0.0;
};

using LossBuilder = std::function<Value(Tape&, const std::vector<Value>&)>;

// Compares analytic gradients against central finite differences for every
// coordinate of every named input. `build` receives freshly created leaves
// (requires_grad on, in input order) and returns the scalar loss node.
// Perturbed losses are obtained by editing a leaf in place and replaying the
// tape, which doubles as a determinism check: the unperturbed replay must
// reproduce the loss bit-for-bit, otherwise the result is flagged
// non-deterministic and no differencing is attempted.
// Relative error per coordinate: |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckResult finite_diff_check(const std::vector<std::pair<std::string, Tensor>>& inputs,
                                  const LossBuilder& build, double eps = 1e-5);

}  // namespace tsqa::diff
