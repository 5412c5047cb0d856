#pragma once

#include <optional>
#include <string>

#include "tsqa/cth.hpp"
#include "tsqa/config.hpp"
#include "tsqa/ddi.hpp"
#include "tsqa/encoders.hpp"
#include "tsqa/nn.hpp"
#include "tsqa/pa.hpp"
#include "tsqa/vocab.hpp"

namespace tsqa::model {

// A run's learnable state: the named parameters, the shared codebook
// hierarchy when quantization is on, and the closed vocabulary. Which
// parameter families exist follows the ablation toggles, so a variant's
// checkpoint carries exactly the parameters its architecture uses.
struct Model {
    config::RunConfig cfg;
    config::ModuleToggles toggles;
    text::TextVocab vocab = text::TextVocab::build_default();
    nn::ParamStore params;
    std::optional<ddi::CodebookHierarchy> hierarchy;

    // Registers every enabled parameter family with a deterministic init
    // stream derived from cfg.seed, then snaps the store onto the float32
    // grid so checkpoints round-trip bit-exactly. Validates cfg first.
    static Model build(const config::RunConfig& cfg);

    encoders::EncoderConfig encoder_config() const;
    ddi::QuantizerConfig quantizer_config() const;
    cth::HighlightConfig highlight_config() const;
    // Pair toggles are folded in, so a disabled pair contributes zero loss.
    align::AlignmentConfig alignment_config() const;
    ddi::DdiLossConfig ddi_loss_config() const;

    bool uses_decomposition() const { return toggles.ddi && toggles.md; }
    bool uses_quantizer() const { return uses_decomposition() && toggles.vq; }

    // Stage-1 freeze set: the decoder stack, the tied embedding table, and
    // the visual encoder hold still while newly added modules warm up.
    static bool stage1_frozen(const std::string& param_name);
};

}  // namespace tsqa::model
