#pragma once

#include "tsqa/tape.hpp"

namespace tsqa::align {

// Settings for the patch-level contrastive alignment losses. The pair
// toggles exist for ablations; temperature is shared by both pairs.
struct AlignmentConfig {
    double temperature = 0.07;
    bool numeric_visual = true;
    bool numeric_caption = true;
};

void validate(const AlignmentConfig& cfg);

// Contrastive loss over one instance: row j of `anchors` should match row j
// of `positives` against the instance's other rows as negatives. Cosine
// similarities over temperature, summed negative log softmax of the
// diagonal. With stop_positives set (the alignment default) no gradient
// flows into `positives`.
diff::Value infonce(diff::Tape& t, diff::Value anchors, diff::Value positives, double temperature,
                    bool stop_positives = true);

// Sum of the enabled pair losses; numeric rows anchor both pairs. A
// disabled pair contributes exactly zero.
diff::Value pa_loss(diff::Tape& t, diff::Value numeric, diff::Value visual, diff::Value caption,
                    const AlignmentConfig& cfg);

}  // namespace tsqa::align
