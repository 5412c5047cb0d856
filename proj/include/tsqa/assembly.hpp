#pragma once

#include <map>
#include <string>
#include <vector>

#include "tsqa/datagen.hpp"
#include "tsqa/model.hpp"
#include "tsqa/optim.hpp"
#include "tsqa/tape.hpp"

namespace tsqa::assembly {

// Where a fused row came from. Rows of the three per-instance origins carry
// the instance index; answer rows exist only in teacher-forced graphs.
enum class Origin { context, question, stats_prompt, numeric, visual, answer };

struct Segment {
    Origin origin = Origin::context;
    int instance = -1;
    int begin = 0;
    int end = 0;  // half-open row range
};

// Decoder-ready sequence: embeddings plus a segment map covering every row
// exactly once. answer_mask flags teacher-forced answer rows (none come out
// of pos_concat; lm_loss builds the extended copy).
struct FusedSequence {
    diff::Value embeddings;
    std::vector<Segment> segments;
    std::vector<bool> answer_mask;
    int rows = 0;
};

// Locates the unique segment of an origin (and instance where applicable);
// throws when absent or ambiguous.
const Segment& find_segment(const FusedSequence& fused, Origin origin, int instance = -1);

// One instance's contribution to the fused sequence. `numeric` stays
// invalid when the numeric modality is ablated away.
struct InstanceBlocks {
    std::vector<int> prompt_ids;
    diff::Value numeric;
    diff::Value visual;
    bool has_numeric = true;
};

// Replaces the k-th <ts> placeholder in the context with the k-th
// instance's [stats prompt; numeric block; visual block] rows and appends
// the question rows. Errors when the placeholder count differs from the
// instance count.
FusedSequence pos_concat(diff::Tape& t, nn::ParamBind& p, const text::TextVocab& vocab,
                         const std::vector<int>& context_ids,
                         const std::vector<int>& question_ids,
                         const std::vector<InstanceBlocks>& instances);

// Position embeddings plus the causal block stack and final norm over an
// already-embedded sequence. Errors past the position-table bound.
diff::Value decoder_hidden(diff::Tape& t, nn::ParamBind& p, const config::RunConfig& cfg,
                           diff::Value rows_in);

struct LmLoss {
    diff::Value loss;    // scalar, summed over answer positions
    diff::Value logits;  // [targets, vocab], one row per predicted token
    std::vector<int> targets;
};

// Teacher-forced answer loss: the fused sequence is the prefix, answer
// tokens (with <eos> appended) shift in as decoder input, and cross-entropy
// is read at answer positions only. Errors on an empty answer or answer
// text that does not tokenize into the closed vocabulary.
LmLoss lm_loss(diff::Tape& t, nn::ParamBind& p, const model::Model& m,
               const FusedSequence& fused, const std::string& answer);
LmLoss lm_loss_ids(diff::Tape& t, nn::ParamBind& p, const model::Model& m,
                   const FusedSequence& fused, const std::vector<int>& target_ids);

// Weighted sum of the three components. Reads each component's current
// value and throws naming the first non-finite one.
diff::Value total_loss(diff::Tape& t, diff::Value l_lm, diff::Value l_pa, diff::Value l_ddi,
                       double lambda_pa, double lambda_ddi);

// Everything one sample's graph exposes to the trainer and diagnostics.
// Alignment and decomposition handles are per instance and stay empty for
// ablations that drop the stage.
struct SampleForward {
    FusedSequence fused;
    diff::Value l_pa;   // scalar, exact zero when the loss is off
    diff::Value l_ddi;
    std::vector<std::vector<ddi::LevelAssignment>> assign_numeric;  // per instance
    std::vector<std::vector<ddi::LevelAssignment>> assign_visual;
    std::vector<diff::Value> e_n, e_v, e_s;  // continuous patch embeddings
    std::vector<diff::Value> z_n, u_n, z_v, u_v;  // decomposition parts
};

SampleForward sample_forward(diff::Tape& t, nn::ParamBind& p, const model::Model& m,
                             const datagen::QASample& sample);

// Seeds the codebooks from the first sample's down-projected tokens when
// quantization is on and they are still empty. No-op otherwise.
void ensure_codebooks(model::Model& m, const datagen::QASample& sample);

// Greedy decoding from the sample's fused prefix until <eos> or max_len
// tokens. Deterministic; max_len 0 yields the empty string. Non-const only
// for parameter binding and lazy codebook seeding; no parameter changes.
std::string generate(model::Model& m, const datagen::QASample& sample, int max_len);

struct OptimizerState {
    std::map<std::string, optim::ParamState> state;
};

// Versioned little-endian binary: named float32 parameter records, the
// vocabulary, the config snapshot, codebook state, optional optimizer
// moments. Parameters live on the float32 grid, so a save/load round trip
// is bit-exact.
void save_checkpoint(const std::string& path, const model::Model& m,
                     const OptimizerState* opt = nullptr);
model::Model load_checkpoint(const std::string& path, OptimizerState* opt = nullptr);

// One line-oriented metrics record per step; eval_acc repeats the latest
// evaluation result and is -1 before the first one.
struct StepMetrics {
    int step = 0;
    double l_lm = 0.0, l_pa = 0.0, l_ddi = 0.0;
    double eval_acc = -1.0;
};
std::string metrics_line(const StepMetrics& m);

struct TrainResult {
    model::Model model;  // best-evaluation state, final state without evals
    std::vector<StepMetrics> metrics;
    double best_eval_acc = -1.0;
    int best_step = 0;
};

// Two-stage loop: the first ceil(freeze_ratio * steps) steps update only
// unfrozen parameters, then everything trains. Per step: batch forward and
// backward, one AdamW update on the accumulated gradients, then the
// codebook EMA update. Evaluates on an eval-set subset every eval_interval
// steps (and at the end), retaining the best state. Loss divergence aborts
// with the step number.
TrainResult train(const config::RunConfig& cfg, const std::vector<datagen::QASample>& train_set,
                  const std::vector<datagen::QASample>& eval_set);

}  // namespace tsqa::assembly
