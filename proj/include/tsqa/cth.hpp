#pragma once

#include "tsqa/nn.hpp"
#include "tsqa/tape.hpp"

namespace tsqa {
class Rng;
}

namespace tsqa::cth {

// Highlighting adds `queries` rows in front of each modality sequence; the
// rows summarize the tokens from two views, one conditioned on the question
// and one on learned modality-intrinsic probes.
struct HighlightConfig {
    int queries = 4;  // H
    int dim = 64;
};

void validate(const HighlightConfig& cfg);

enum class Modality { numeric, visual };

// Registers the three query sets ("cth.query.q|n|v", each H x dim) and the
// projection triples of the five attention sites. All highlighting
// attentions are single-head and bias-free with no output projection, so
// convexity arguments about value vectors hold exactly.
void init_highlight(nn::ParamStore& s, const HighlightConfig& cfg, Rng& rng);

// Compresses a variable-length question into H rows: the learned question
// queries attend over the question token embeddings.
diff::Value pool_question(diff::Tape& t, nn::ParamBind& p, const HighlightConfig& cfg,
                          diff::Value question_emb);

// Fused highlight rows for one modality: the pooled question rows and the
// modality's intrinsic queries each attend over the modality tokens, and
// the two branch outputs are summed.
diff::Value highlight(diff::Tape& t, nn::ParamBind& p, const HighlightConfig& cfg,
                      Modality modality, diff::Value tokens, diff::Value pooled_question);

// [H, D] stacked on top of [N, D]; the original rows pass through untouched.
diff::Value prepend(diff::Tape& t, diff::Value highlights, diff::Value tokens);

}  // namespace tsqa::cth
