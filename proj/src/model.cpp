#include "tsqa/model.hpp"

#include "tsqa/rng.hpp"

namespace tsqa::model {

encoders::EncoderConfig Model::encoder_config() const {
    return {cfg.dim, cfg.enc_blocks, cfg.heads, cfg.max_patches};
}

ddi::QuantizerConfig Model::quantizer_config() const {
    return {cfg.levels, cfg.base_codes, cfg.code_dim, cfg.ema_decay, cfg.ema_eps};
}

cth::HighlightConfig Model::highlight_config() const {
    return {cfg.highlight_queries, cfg.dim};
}

align::AlignmentConfig Model::alignment_config() const {
    return {cfg.temperature, toggles.nva, toggles.nca};
}

ddi::DdiLossConfig Model::ddi_loss_config() const {
    return {cfg.alpha, cfg.beta, cfg.temperature};
}

bool Model::stage1_frozen(const std::string& name) {
    return name.starts_with("dec.") || name.starts_with("embed.") ||
           name.starts_with("enc_vis.");
}

Model Model::build(const config::RunConfig& cfg) {
    config::validate(cfg);
    Model m;
    m.cfg = cfg;
    m.toggles = config::toggles_for(cfg.ablation);

    Rng rng(derive_seed(cfg.seed, "init"));
    auto& s = m.params;

    // Registration order is part of the seed contract: every family draws
    // from one stream, so reordering would silently change every init.
    s.create("embed.table", Tensor::gaussian(m.vocab.size(), cfg.dim, 0.02, rng));
    s.create("dec.pos", Tensor::gaussian(cfg.max_seq, cfg.dim, 0.02, rng));
    for (int b = 0; b < cfg.dec_blocks; ++b)
        nn::init_transformer_block(s, "dec.blk" + std::to_string(b), cfg.dim, 4, rng);
    nn::init_layer_norm(s, "dec.final", cfg.dim);

    encoders::init_visual(s, m.encoder_config(), cfg.pixel_size, rng);
    if (m.toggles.num)
        encoders::init_numeric(s, m.encoder_config(), cfg.numeric_patch_len, rng);

    if (m.toggles.ddi) {
        if (m.toggles.md) ddi::init_quantizer_params(s, cfg.dim, cfg.code_dim, rng);
        ddi::init_interaction(s, cfg.dim, rng);
        if (m.uses_quantizer()) m.hierarchy.emplace(m.quantizer_config());
    }
    if (m.toggles.cth) cth::init_highlight(s, m.highlight_config(), rng);

    s.snap_f32();
    if (m.hierarchy) m.hierarchy->snap_f32();
    return m;
}

}  // namespace tsqa::model
