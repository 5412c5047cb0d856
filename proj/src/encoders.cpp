#include "tsqa/encoders.hpp"

#include <stdexcept>

#include "tsqa/rng.hpp"

namespace tsqa::encoders {

using diff::Tape;
using diff::Value;

namespace {

// Small-sigma Gaussian positional tables; zeroing them makes the encoders
// exactly permutation-equivariant, which the tests exploit.
constexpr double kPosSigma = 0.02;

Value run_blocks(Tape& t, nn::ParamBind& p, const std::string& prefix, Value x,
                 const EncoderConfig& cfg) {
    for (int b = 0; b < cfg.blocks; ++b)
        x = nn::transformer_block(t, p, prefix + ".blk" + std::to_string(b), x, cfg.heads,
                                  /*causal=*/false);
    return x;
}

void init_blocks(nn::ParamStore& s, const std::string& prefix, const EncoderConfig& cfg,
                 Rng& rng) {
    for (int b = 0; b < cfg.blocks; ++b)
        nn::init_transformer_block(s, prefix + ".blk" + std::to_string(b), cfg.dim, 4, rng);
}

void check_patch_count(int n, const EncoderConfig& cfg) {
    if (n <= 0) throw std::invalid_argument("encoder input must contain at least one patch");
    if (n > cfg.max_patches)
        throw std::invalid_argument("patch count exceeds the positional table (max_patches)");
}

}  // namespace

void init_numeric(nn::ParamStore& s, const EncoderConfig& cfg, int patch_len, Rng& rng) {
    s.create("enc_num.pos", Tensor::gaussian(cfg.max_patches, patch_len, kPosSigma, rng));
    nn::init_linear(s, "enc_num.in", 2 * patch_len, cfg.dim, rng);
    init_blocks(s, "enc_num", cfg, rng);
}

void init_visual(nn::ParamStore& s, const EncoderConfig& cfg, int pixel_size, Rng& rng) {
    s.create("enc_vis.pos", Tensor::gaussian(cfg.max_patches, cfg.dim, kPosSigma, rng));
    nn::init_linear(s, "enc_vis.in", pixel_size * pixel_size, cfg.dim, rng);
    init_blocks(s, "enc_vis", cfg, rng);
}

Value encode_numeric(Tape& t, nn::ParamBind& p, const EncoderConfig& cfg,
                     const Tensor& numeric_patches) {
    check_patch_count(numeric_patches.rows, cfg);
    Value patches = t.constant(numeric_patches);
    Value pos = t.slice_rows(p["enc_num.pos"], 0, numeric_patches.rows);
    Value x = nn::linear(t, p, "enc_num.in", t.concat_cols(patches, pos));
    return run_blocks(t, p, "enc_num", x, cfg);
}

Value encode_visual(Tape& t, nn::ParamBind& p, const EncoderConfig& cfg,
                    const std::vector<Tensor>& pixel_patches) {
    check_patch_count(static_cast<int>(pixel_patches.size()), cfg);
    const int n = static_cast<int>(pixel_patches.size());
    const int px = pixel_patches[0].rows;
    Tensor flat(n, px * px);
    for (int i = 0; i < n; ++i) {
        const Tensor& patch = pixel_patches[static_cast<size_t>(i)];
        if (patch.rows != px || patch.cols != px)
            throw std::invalid_argument("pixel patches must be uniform squares");
        for (int j = 0; j < px * px; ++j) flat.at(i, j) = patch.data[static_cast<size_t>(j)];
    }
    Value x = nn::linear(t, p, "enc_vis.in", t.constant(flat));
    x = t.add(x, t.slice_rows(p["enc_vis.pos"], 0, n));
    return run_blocks(t, p, "enc_vis", x, cfg);
}

Value encode_caption(Tape& t, nn::ParamBind& p, const text::TextVocab& vocab,
                     const std::vector<std::string>& captions) {
    if (captions.empty()) throw std::invalid_argument("encode_caption needs at least one caption");
    // One gather over all captions' tokens, then a block-diagonal averaging
    // matrix pools each caption's span in a single matmul.
    std::vector<int> ids;
    std::vector<std::pair<int, int>> spans;  // [begin, end) into ids
    for (const auto& cap : captions) {
        const int begin = static_cast<int>(ids.size());
        for (int id : vocab.tokenize(cap)) ids.push_back(id);
        spans.emplace_back(begin, static_cast<int>(ids.size()));
    }
    Tensor pool(static_cast<int>(captions.size()), static_cast<int>(ids.size()));
    for (int i = 0; i < pool.rows; ++i) {
        auto [begin, end] = spans[static_cast<size_t>(i)];
        for (int j = begin; j < end; ++j) pool.at(i, j) = 1.0 / (end - begin);
    }
    return t.matmul(t.constant(pool), t.gather_rows(p["embed.table"], ids));
}

Value embed_tokens(Tape& t, nn::ParamBind& p, const std::vector<int>& ids) {
    if (ids.empty()) throw std::invalid_argument("cannot embed an empty token sequence");
    return t.gather_rows(p["embed.table"], ids);
}

Value embed_text(Tape& t, nn::ParamBind& p, const text::TextVocab& vocab,
                 const std::string& text) {
    return embed_tokens(t, p, vocab.tokenize(text));
}

}  // namespace tsqa::encoders
