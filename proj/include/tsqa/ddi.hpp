#pragma once

#include <utility>
#include <vector>

#include "tsqa/nn.hpp"
#include "tsqa/tape.hpp"

namespace tsqa {
class Rng;
}

namespace tsqa::ddi {

// Hierarchical residual quantizer shape: level m of M (1-based) holds
// base_codes * 2^(m-1) codes of width code_dim and pools its input over
// windows of 2^(M-m) tokens, so coarse levels see few codes over wide spans
// and fine levels the reverse.
struct QuantizerConfig {
    int levels = 3;
    int base_codes = 16;
    int code_dim = 32;
    double ema_decay = 0.99;
    double ema_eps = 1e-5;
};

void validate(const QuantizerConfig& cfg);

struct CodebookLevel {
    Tensor codes;      // [n_codes, code_dim]
    Tensor ema_count;  // [n_codes, 1]
    Tensor ema_sum;    // [n_codes, code_dim]
};

// Codebooks plus their moving-average statistics. One instance is shared by
// every modality; updates are EMA-driven, never gradient-driven.
class CodebookHierarchy {
public:
    explicit CodebookHierarchy(const QuantizerConfig& cfg);

    const QuantizerConfig& config() const { return cfg_; }
    int levels() const { return cfg_.levels; }
    int window(int level) const;     // pooling span of 1-based level
    int codes_at(int level) const;   // code count of 1-based level
    CodebookLevel& level(int level);
    const CodebookLevel& level(int level) const;

    bool initialized() const { return initialized_; }
    // Seeds every level by sampling rows of a down-projected token batch
    // plus small noise, the cheap guard against dead codes.
    void init_from_tokens(const Tensor& tokens, Rng& rng, double noise_sigma = 0.01);
    void init_random(Rng& rng, double sigma = 1.0);

    void snap_f32();

private:
    QuantizerConfig cfg_;
    std::vector<CodebookLevel> levels_;
    bool initialized_ = false;
};

// Segment-mean smoothing: non-overlapping windows of `window` rows are
// replaced by their average (the final ragged segment averages over its
// actual length). window=1 is the identity.
Tensor pool_broadcast(const Tensor& residuals, int window);

// Nearest code by squared Euclidean distance, ties to the lowest index.
// Returns per-row indices and the quantized rows.
std::pair<std::vector<int>, Tensor> vq_assign(const Tensor& codes, const Tensor& vectors);

// What one quantization level saw and chose, kept for the EMA update.
struct LevelAssignment {
    std::vector<int> indices;  // chosen code per token
    Tensor pooled;             // the vectors that were assigned
};

// Decomposition of one modality's tokens: common part reconstructed from
// codes, unique part the residual in model space, plus the bookkeeping the
// trainer needs.
struct RvqResult {
    diff::Value down;     // tokens in code space, before quantization
    diff::Value common;   // Z, up-projected accumulated codes
    diff::Value unique;   // U = E - Z
    diff::Value vq_loss;  // mean squared commitment error, scalar
    std::vector<LevelAssignment> assignments;  // one per level, empty without VQ
    std::vector<double> residual_norms;        // mean row norm after each level
    const CodebookHierarchy* hierarchy = nullptr;
};

// Registers the shared projections "quant.down" (dim -> code_dim) and
// "quant.up" (code_dim -> dim).
void init_quantizer_params(nn::ParamStore& s, int dim, int code_dim, Rng& rng);

// Full quantization path: down-project, pool/assign/subtract level by level
// off the tape, then rejoin it with a straight-through estimator so the
// gradient of the common path lands on the down-projected tokens. Codebooks
// receive no gradient. The commitment loss is averaged over tokens.
RvqResult rvq_forward(diff::Tape& t, nn::ParamBind& p, const CodebookHierarchy& h, diff::Value e);

// Continuous stand-in for the quantization ablation: a shared two-layer
// projector produces the common part, the vq loss is exactly zero, and all
// downstream shapes and identities still hold.
RvqResult projector_forward(diff::Tape& t, nn::ParamBind& p, diff::Value e);

// One EMA step over the assignments of a training step (typically both
// modalities together). Counts and sums decay for every code; a code's
// vector moves only if the code was assigned this step.
void ema_update(CodebookHierarchy& h,
                const std::vector<const std::vector<LevelAssignment>*>& batches);
void ema_update(CodebookHierarchy& h, const std::vector<LevelAssignment>& assignments);

struct DdiLossConfig {
    double alpha = 5.0;  // weight of the common-alignment term
    double beta = 1.0;   // weight of the orthogonality term
    double temperature = 0.07;
};

// Combined disentanglement objective over explicit parts:
// vq_n + vq_v + alpha * Lcom + beta * Lorth, where Lcom is the symmetrized
// in-instance InfoNCE over common rows (both sides receive gradient) and
// Lorth the mean absolute cosine between each modality's common and unique
// rows, halved.
diff::Value ddi_loss_parts(diff::Tape& t, diff::Value common_n, diff::Value unique_n,
                           diff::Value vq_n, diff::Value common_v, diff::Value unique_v,
                           diff::Value vq_v, const DdiLossConfig& cfg);

// Same, from two decompositions; errors unless both came from the same
// hierarchy (or both from the projector stand-in).
diff::Value ddi_loss(diff::Tape& t, const RvqResult& numeric, const RvqResult& visual,
                     const DdiLossConfig& cfg);

// Registers the two cross-modal attention branches "interact.n"/"interact.v"
// (bias-free projections, zero-initialized output) for `unique_interaction`.
void init_interaction(nn::ParamStore& s, int dim, Rng& rng);

// Each modality's tokens augmented by attending to the opposite modality's
// unique rows: En + Attn(En, Uv, Uv) and Ev + Attn(Ev, Un, Un). Single-head,
// no biases, so a zero-initialized output projection leaves the inputs
// untouched exactly.
std::pair<diff::Value, diff::Value> unique_interaction(diff::Tape& t, nn::ParamBind& p,
                                                       diff::Value e_n, diff::Value e_v,
                                                       diff::Value u_n, diff::Value u_v);

}  // namespace tsqa::ddi
