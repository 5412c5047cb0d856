#pragma once

#include <string>
#include <vector>

#include "tsqa/nn.hpp"
#include "tsqa/tape.hpp"
#include "tsqa/vocab.hpp"

namespace tsqa::encoders {

// Shared shape settings for the three patch encoders. Patch counts are
// bounded by max_patches because position tables are fixed-size parameters.
struct EncoderConfig {
    int dim = 64;       // model width D, shared across modalities
    int blocks = 2;     // transformer depth per encoder
    int heads = 4;
    int max_patches = 64;
};

// Parameter registration. The numeric encoder owns "enc_num.*", the visual
// encoder "enc_vis.*". Caption encoding and text embedding use the shared
// table "embed.table" ([vocab, dim]), registered once by the model assembly
// because the decoder ties to the same rows.
void init_numeric(nn::ParamStore& s, const EncoderConfig& cfg, int patch_len, Rng& rng);
void init_visual(nn::ParamStore& s, const EncoderConfig& cfg, int pixel_size, Rng& rng);

// Numeric patches [N, p] -> [N, dim]. Each row is the patch concatenated
// with its positional code (same width as the patch), linearly projected,
// then run through bidirectional self-attention blocks.
diff::Value encode_numeric(diff::Tape& t, nn::ParamBind& p, const EncoderConfig& cfg,
                           const Tensor& numeric_patches);

// Pixel patches (squares) -> [N, dim]. Each patch is flattened, projected to
// the model width, summed with its positional embedding, then run through
// the same block stack shape.
diff::Value encode_visual(diff::Tape& t, nn::ParamBind& p, const EncoderConfig& cfg,
                          const std::vector<Tensor>& pixel_patches);

// Per-patch captions -> [N, dim]: tokenize, embed with the shared table,
// mean-pool each caption's token rows.
diff::Value encode_caption(diff::Tape& t, nn::ParamBind& p, const text::TextVocab& vocab,
                           const std::vector<std::string>& captions);

// Prompt or question text -> [tokens, dim] rows of the shared table.
diff::Value embed_text(diff::Tape& t, nn::ParamBind& p, const text::TextVocab& vocab,
                       const std::string& text);
diff::Value embed_tokens(diff::Tape& t, nn::ParamBind& p, const std::vector<int>& ids);

}  // namespace tsqa::encoders
