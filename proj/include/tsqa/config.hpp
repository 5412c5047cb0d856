#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tsqa::config {

// Which pipeline stages a run keeps. Derived one-to-one from the ablation
// tag; the model builder registers no parameters for disabled stages.
struct ModuleToggles {
    bool pa = true;   // patch alignment loss
    bool nva = true;  // numeric-visual pair inside the alignment loss
    bool nca = true;  // numeric-caption pair inside the alignment loss
    bool ddi = true;  // decomposition stage as a whole (losses + interaction)
    bool md = true;   // common/unique decomposition; off attends full embeddings
    bool vq = true;   // discrete codes; off swaps in the continuous projector
    bool cth = true;  // question-conditioned highlight rows
    bool num = true;  // numeric modality present in the fused sequence

    bool operator==(const ModuleToggles&) const = default;
};

// The recognized run variants, in reporting order.
const std::vector<std::string>& ablation_tags();
bool is_ablation_tag(const std::string& tag);
// Throws std::invalid_argument on an unknown tag. no_num implies no_pa and
// no_ddi because both losses need the numeric tokens.
ModuleToggles toggles_for(const std::string& tag);

// Every knob of a run. Defaults are the desk-scale training setup; field
// names double as the JSON keys.
struct RunConfig {
    // model shape
    int dim = 64;                // shared model width
    int code_dim = 32;           // quantizer code space
    int base_codes = 16;         // codes at the coarsest level
    int levels = 3;              // quantizer hierarchy depth
    int numeric_patch_len = 8;   // time steps per numeric patch
    int pixel_size = 16;         // square pixel patch edge
    int highlight_queries = 4;   // highlight rows per modality
    int enc_blocks = 2;
    int dec_blocks = 2;
    int heads = 4;
    int max_patches = 64;        // position-table bound for the encoders
    int max_seq = 512;           // position-table bound for the decoder
    // loss weights
    double temperature = 0.07;   // shared by alignment and common-code loss
    double alpha = 5.0;          // common-alignment weight inside the ddi loss
    double beta = 1.0;           // orthogonality weight inside the ddi loss
    double lambda_pa = 0.02;     // alignment weight in the total loss
    double lambda_ddi = 0.2;     // ddi weight in the total loss
    double ema_decay = 0.99;
    double ema_eps = 1e-5;
    // optimization
    double lr = 1e-3;
    double weight_decay = 0.01;
    double warmup_ratio = 0.02;
    double freeze_ratio = 0.02;  // share of steps with decoder/visual frozen
    int steps = 1200;
    int batch_size = 4;
    int eval_interval = 200;
    int eval_subset = 64;        // eval samples scored during training
    int max_answer_len = 8;
    uint64_t seed = 1;
    // data generation
    int n_train = 2000;
    int n_eval = 500;
    int series_len = 256;
    std::vector<std::string> templates = {"trend_class", "period_value"};
    // run identity and paths
    std::string ablation = "full";
    std::string train_path;  // empty resolves to <out_dir>/train.jsonl
    std::string eval_path;   // empty resolves to <out_dir>/eval.jsonl
    std::string out_dir = "out";
};

// Field-by-field range checks mirroring the module preconditions (head
// divisibility, patch-count bounds, temperature positivity, tag validity).
// Throws std::invalid_argument naming the offending field.
void validate(const RunConfig& cfg);

// Overlays a JSON object onto cfg. Unknown keys and type mismatches are
// errors; absent keys keep their current values. Does not validate.
void apply_json(RunConfig& cfg, const std::string& json_text);

// Parse + overlay + validate. Throws std::runtime_error when the file is
// unreadable, std::invalid_argument on bad content.
RunConfig load_file(const std::string& path);

// Overlays "key=value" pairs (the CLI flag path). Values are parsed as JSON
// literals with a plain-string fallback, so seed=7 and ablation=no_pa both
// work. Does not validate.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides);

// Full resolved config as pretty JSON; re-loading it reproduces cfg.
std::string to_json(const RunConfig& cfg);

// Dataset path resolution: explicit value wins, else <out_dir>/<name>.
std::string resolved_train_path(const RunConfig& cfg);
std::string resolved_eval_path(const RunConfig& cfg);

}  // namespace tsqa::config
