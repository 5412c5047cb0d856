#include "tsqa/assembly.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "tsqa/evalmetrics.hpp"
#include "tsqa/expansion.hpp"
#include "tsqa/rng.hpp"

namespace tsqa::assembly {

using diff::Tape;
using diff::Value;

const Segment& find_segment(const FusedSequence& fused, Origin origin, int instance) {
    const Segment* found = nullptr;
    for (const auto& seg : fused.segments) {
        if (seg.origin != origin) continue;
        if (instance >= 0 && seg.instance != instance) continue;
        if (found) throw std::invalid_argument("find_segment: ambiguous match");
        found = &seg;
    }
    if (!found) throw std::invalid_argument("find_segment: no such segment");
    return *found;
}

FusedSequence pos_concat(Tape& t, nn::ParamBind& p, const text::TextVocab& vocab,
                         const std::vector<int>& context_ids,
                         const std::vector<int>& question_ids,
                         const std::vector<InstanceBlocks>& instances) {
    const int ts = vocab.ts_id();
    const int placeholders =
        static_cast<int>(std::count(context_ids.begin(), context_ids.end(), ts));
    if (placeholders != static_cast<int>(instances.size()))
        throw std::invalid_argument("pos_concat: " + std::to_string(placeholders) +
                                    " placeholders for " + std::to_string(instances.size()) +
                                    " instances");

    struct Piece {
        Origin origin;
        int instance;
        Value v;
        int rows;
    };
    std::vector<Piece> pieces;
    auto add_text = [&](Origin origin, int inst, const std::vector<int>& ids) {
        if (ids.empty()) return;
        pieces.push_back({origin, inst, encoders::embed_tokens(t, p, ids),
                          static_cast<int>(ids.size())});
    };

    std::vector<int> run;
    int inst = 0;
    for (int id : context_ids) {
        if (id != ts) {
            run.push_back(id);
            continue;
        }
        add_text(Origin::context, -1, run);
        run.clear();
        const auto& blk = instances[inst];
        add_text(Origin::stats_prompt, inst, blk.prompt_ids);
        if (blk.has_numeric) {
            const int rows = t.val(blk.numeric).rows;
            pieces.push_back({Origin::numeric, inst, blk.numeric, rows});
        }
        const int vrows = t.val(blk.visual).rows;
        pieces.push_back({Origin::visual, inst, blk.visual, vrows});
        ++inst;
    }
    add_text(Origin::context, -1, run);
    add_text(Origin::question, -1, question_ids);
    if (pieces.empty()) throw std::invalid_argument("pos_concat: nothing to fuse");

    FusedSequence out;
    Value acc = pieces[0].v;
    int row = pieces[0].rows;
    out.segments.push_back({pieces[0].origin, pieces[0].instance, 0, row});
    for (size_t k = 1; k < pieces.size(); ++k) {
        acc = t.concat_rows(acc, pieces[k].v);
        out.segments.push_back(
            {pieces[k].origin, pieces[k].instance, row, row + pieces[k].rows});
        row += pieces[k].rows;
    }
    out.embeddings = acc;
    out.rows = row;
    out.answer_mask.assign(static_cast<size_t>(row), false);
    return out;
}

Value decoder_hidden(Tape& t, nn::ParamBind& p, const config::RunConfig& cfg, Value rows_in) {
    const int rows = t.val(rows_in).rows;
    if (rows < 1) throw std::invalid_argument("decoder: empty sequence");
    if (rows > cfg.max_seq)
        throw std::invalid_argument("decoder: sequence of " + std::to_string(rows) +
                                    " rows exceeds max_seq " + std::to_string(cfg.max_seq));
    Value x = t.add(rows_in, t.slice_rows(p["dec.pos"], 0, rows));
    for (int b = 0; b < cfg.dec_blocks; ++b)
        x = nn::transformer_block(t, p, "dec.blk" + std::to_string(b), x, cfg.heads,
                                  /*causal=*/true);
    return nn::layer_norm(t, p, "dec.final", x);
}

LmLoss lm_loss_ids(Tape& t, nn::ParamBind& p, const model::Model& m,
                   const FusedSequence& fused, const std::vector<int>& target_ids) {
    if (target_ids.empty()) throw std::invalid_argument("lm_loss: empty answer");
    for (int id : target_ids)
        if (id < 0 || id >= m.vocab.size())
            throw std::invalid_argument("lm_loss: answer token outside the vocabulary");
    const int n_targets = static_cast<int>(target_ids.size());

    Value ext = fused.embeddings;
    if (n_targets > 1) {
        std::vector<int> teacher(target_ids.begin(), target_ids.end() - 1);
        ext = t.concat_rows(ext, encoders::embed_tokens(t, p, teacher));
    }
    Value h = decoder_hidden(t, p, m.cfg, ext);
    const int total_rows = fused.rows + n_targets - 1;
    Value answer_h = t.slice_rows(h, fused.rows - 1, total_rows);
    Value logits = t.matmul(answer_h, p["embed.table"], false, true);
    Value picked = t.pick(t.log_softmax_rows(logits), target_ids);
    return {t.scale(t.sum_all(picked), -1.0), logits, target_ids};
}

LmLoss lm_loss(Tape& t, nn::ParamBind& p, const model::Model& m, const FusedSequence& fused,
               const std::string& answer) {
    std::vector<int> ids = m.vocab.tokenize(answer);
    for (int id : ids)
        if (id == m.vocab.unk_id())
            throw std::invalid_argument("lm_loss: answer does not tokenize into the vocabulary: " +
                                        answer);
    ids.push_back(m.vocab.eos_id());
    return lm_loss_ids(t, p, m, fused, ids);
}

Value total_loss(Tape& t, Value l_lm, Value l_pa, Value l_ddi, double lambda_pa,
                 double lambda_ddi) {
    auto check = [&](Value v, const char* name) {
        const double x = t.val(v).at(0, 0);
        if (!std::isfinite(x))
            throw std::invalid_argument(std::string("total_loss: component ") + name +
                                        " is not finite");
    };
    check(l_lm, "l_lm");
    check(l_pa, "l_pa");
    check(l_ddi, "l_ddi");
    return t.add(l_lm, t.add(t.scale(l_pa, lambda_pa), t.scale(l_ddi, lambda_ddi)));
}

SampleForward sample_forward(Tape& t, nn::ParamBind& p, const model::Model& m,
                             const datagen::QASample& sample) {
    const auto& cfg = m.cfg;
    const auto& tg = m.toggles;
    SampleForward out;
    out.l_pa = t.constant(Tensor(1, 1));
    out.l_ddi = t.constant(Tensor(1, 1));

    const std::vector<int> context_ids = m.vocab.tokenize(sample.context);
    const std::vector<int> question_ids = m.vocab.tokenize(sample.question);

    Value pooled;
    if (tg.cth) {
        Value q_emb = encoders::embed_tokens(t, p, question_ids);
        pooled = cth::pool_question(t, p, m.highlight_config(), q_emb);
    }
    const align::AlignmentConfig acfg = m.alignment_config();
    const ddi::DdiLossConfig dcfg = m.ddi_loss_config();

    std::vector<InstanceBlocks> blocks;
    for (size_t i = 0; i < sample.series.size(); ++i) {
        const auto ns = expansion::normalize(sample.series[i].values);
        const auto bundle = expansion::expand(ns, cfg.numeric_patch_len, cfg.pixel_size);

        InstanceBlocks blk;
        blk.has_numeric = tg.num;
        blk.prompt_ids = m.vocab.tokenize(expansion::stats_prompt(ns));

        Value e_v = encoders::encode_visual(t, p, m.encoder_config(), bundle.pixel_patches);
        out.e_v.push_back(e_v);
        Value ebar_v = e_v;
        Value ebar_n;

        if (tg.num) {
            Value e_n = encoders::encode_numeric(t, p, m.encoder_config(), bundle.numeric_patches);
            out.e_n.push_back(e_n);
            Value e_s = encoders::encode_caption(t, p, m.vocab, bundle.captions);
            out.e_s.push_back(e_s);
            if (tg.pa) out.l_pa = t.add(out.l_pa, align::pa_loss(t, e_n, e_v, e_s, acfg));
            ebar_n = e_n;

            if (tg.ddi) {
                if (tg.md) {
                    ddi::RvqResult rn, rv;
                    if (tg.vq) {
                        rn = ddi::rvq_forward(t, p, *m.hierarchy, e_n);
                        rv = ddi::rvq_forward(t, p, *m.hierarchy, e_v);
                    } else {
                        rn = ddi::projector_forward(t, p, e_n);
                        rv = ddi::projector_forward(t, p, e_v);
                    }
                    out.l_ddi = t.add(out.l_ddi, ddi::ddi_loss(t, rn, rv, dcfg));
                    auto [bn, bv] = ddi::unique_interaction(t, p, e_n, e_v, rn.unique, rv.unique);
                    ebar_n = bn;
                    ebar_v = bv;
                    out.z_n.push_back(rn.common);
                    out.u_n.push_back(rn.unique);
                    out.z_v.push_back(rv.common);
                    out.u_v.push_back(rv.unique);
                    out.assign_numeric.push_back(std::move(rn.assignments));
                    out.assign_visual.push_back(std::move(rv.assignments));
                } else {
                    // no decomposition: attend the full opposite embeddings
                    auto [bn, bv] = ddi::unique_interaction(t, p, e_n, e_v, e_n, e_v);
                    ebar_n = bn;
                    ebar_v = bv;
                }
            }
        }

        if (tg.cth) {
            const auto hcfg = m.highlight_config();
            if (tg.num) {
                Value hn = cth::highlight(t, p, hcfg, cth::Modality::numeric, ebar_n, pooled);
                blk.numeric = cth::prepend(t, hn, ebar_n);
            }
            Value hv = cth::highlight(t, p, hcfg, cth::Modality::visual, ebar_v, pooled);
            blk.visual = cth::prepend(t, hv, ebar_v);
        } else {
            if (tg.num) blk.numeric = ebar_n;
            blk.visual = ebar_v;
        }
        blocks.push_back(blk);
    }

    out.fused = pos_concat(t, p, m.vocab, context_ids, question_ids, blocks);
    return out;
}

void ensure_codebooks(model::Model& m, const datagen::QASample& sample) {
    if (!m.hierarchy || m.hierarchy->initialized()) return;
    if (!m.toggles.num || sample.series.empty()) return;

    Tape t;
    nn::ParamBind p(t, m.params);
    std::vector<Tensor> token_sets;
    for (const auto& inst : sample.series) {
        const auto ns = expansion::normalize(inst.values);
        const auto bundle = expansion::expand(ns, m.cfg.numeric_patch_len, m.cfg.pixel_size);
        Value e_n = encoders::encode_numeric(t, p, m.encoder_config(), bundle.numeric_patches);
        Value e_v = encoders::encode_visual(t, p, m.encoder_config(), bundle.pixel_patches);
        token_sets.push_back(t.val(nn::linear(t, p, "quant.down", e_n)));
        token_sets.push_back(t.val(nn::linear(t, p, "quant.down", e_v)));
    }
    int total = 0;
    for (const auto& ts : token_sets) total += ts.rows;
    Tensor all(total, m.cfg.code_dim);
    int row = 0;
    for (const auto& ts : token_sets) {
        std::copy(ts.data.begin(), ts.data.end(), all.row_ptr(row));
        row += ts.rows;
    }
    Rng rng(derive_seed(m.cfg.seed, "codebook"));
    m.hierarchy->init_from_tokens(all, rng);
    m.hierarchy->snap_f32();
}

std::string generate(model::Model& m, const datagen::QASample& sample, int max_len) {
    if (max_len <= 0) return "";
    ensure_codebooks(m, sample);

    Tensor prefix;
    {
        Tape t;
        nn::ParamBind p(t, m.params);
        auto fwd = sample_forward(t, p, m, sample);
        prefix = t.val(fwd.fused.embeddings);
    }

    const Tensor& table = m.params.get("embed.table");
    std::vector<int> out_ids;
    for (int step = 0; step < max_len; ++step) {
        const int rows = prefix.rows + static_cast<int>(out_ids.size());
        Tensor in_rows(rows, m.cfg.dim);
        std::copy(prefix.data.begin(), prefix.data.end(), in_rows.data.begin());
        for (size_t j = 0; j < out_ids.size(); ++j)
            std::copy(table.row_ptr(out_ids[j]), table.row_ptr(out_ids[j]) + m.cfg.dim,
                      in_rows.row_ptr(prefix.rows + static_cast<int>(j)));

        Tape t;
        nn::ParamBind p(t, m.params);
        Value h = decoder_hidden(t, p, m.cfg, t.constant(in_rows));
        Value logits = t.matmul(t.slice_rows(h, rows - 1, rows), p["embed.table"], false, true);
        const Tensor& lv = t.val(logits);
        int best = 0;
        for (int v = 1; v < lv.cols; ++v)
            if (lv.at(0, v) > lv.at(0, best)) best = v;
        if (best == m.vocab.eos_id()) break;
        out_ids.push_back(best);
    }
    return out_ids.empty() ? std::string() : m.vocab.detokenize(out_ids);
}

// ---- checkpoint serialization ----

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts need byte swaps");

constexpr char kMagic[8] = {'T', 'S', 'Q', 'A', 'C', 'K', 'P', '1'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_u64(std::ostream& out, uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_tensor(std::ostream& out, const Tensor& t) {
    put_u32(out, 2);  // rank
    put_u32(out, static_cast<uint32_t>(t.rows));
    put_u32(out, static_cast<uint32_t>(t.cols));
    std::vector<float> payload(t.data.size());
    for (size_t i = 0; i < t.data.size(); ++i) payload[i] = static_cast<float>(t.data[i]);
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
}

uint32_t get_u32(std::istream& in) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

uint64_t get_u64(std::istream& in) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

std::string get_string(std::istream& in) {
    const uint32_t len = get_u32(in);
    if (len > (1u << 26)) throw std::runtime_error("checkpoint: implausible string length");
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return s;
}

Tensor get_tensor(std::istream& in) {
    const uint32_t rank = get_u32(in);
    if (rank != 2) throw std::runtime_error("checkpoint: unsupported tensor rank");
    const uint32_t rows = get_u32(in);
    const uint32_t cols = get_u32(in);
    if (static_cast<uint64_t>(rows) * cols > (1u << 28))
        throw std::runtime_error("checkpoint: implausible tensor size");
    Tensor t(static_cast<int>(rows), static_cast<int>(cols));
    std::vector<float> payload(t.data.size());
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    for (size_t i = 0; i < payload.size(); ++i) t.data[i] = static_cast<double>(payload[i]);
    return t;
}

// Optimizer moments live off the float32 grid, so they get full-width
// records; parameters stay float32 per the format.
void put_tensor64(std::ostream& out, const Tensor& t) {
    put_u32(out, 2);
    put_u32(out, static_cast<uint32_t>(t.rows));
    put_u32(out, static_cast<uint32_t>(t.cols));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

Tensor get_tensor64(std::istream& in) {
    const uint32_t rank = get_u32(in);
    if (rank != 2) throw std::runtime_error("checkpoint: unsupported tensor rank");
    const uint32_t rows = get_u32(in);
    const uint32_t cols = get_u32(in);
    if (static_cast<uint64_t>(rows) * cols > (1u << 28))
        throw std::runtime_error("checkpoint: implausible tensor size");
    Tensor t(static_cast<int>(rows), static_cast<int>(cols));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const model::Model& m, const OptimizerState* opt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out.write(kMagic, sizeof kMagic);
    put_u32(out, kVersion);

    const auto names = m.params.names();
    put_u32(out, static_cast<uint32_t>(names.size()));
    for (const auto& name : names) {
        put_string(out, name);
        put_tensor(out, m.params.get(name));
    }

    put_u32(out, static_cast<uint32_t>(m.vocab.tokens().size()));
    for (const auto& tok : m.vocab.tokens()) put_string(out, tok);

    // paths are resolved per invocation, not model state; dropping them keeps
    // checkpoints from equal runs byte-identical regardless of location
    config::RunConfig stored = m.cfg;
    stored.out_dir = config::RunConfig{}.out_dir;
    stored.train_path.clear();
    stored.eval_path.clear();
    put_string(out, config::to_json(stored));

    out.put(m.hierarchy ? 1 : 0);
    if (m.hierarchy) {
        out.put(m.hierarchy->initialized() ? 1 : 0);
        put_u32(out, static_cast<uint32_t>(m.hierarchy->levels()));
        for (int lvl = 1; lvl <= m.hierarchy->levels(); ++lvl) {
            const auto& cb = m.hierarchy->level(lvl);
            put_tensor(out, cb.codes);
            put_tensor(out, cb.ema_count);
            put_tensor(out, cb.ema_sum);
        }
    }

    out.put(opt ? 1 : 0);
    if (opt) {
        put_u32(out, static_cast<uint32_t>(opt->state.size()));
        for (const auto& [name, st] : opt->state) {
            put_string(out, name);
            put_u64(out, static_cast<uint64_t>(st.t));
            put_tensor64(out, st.m);
            put_tensor64(out, st.v);
        }
    }
    out.flush();
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

model::Model load_checkpoint(const std::string& path, OptimizerState* opt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    if (get_u32(in) != kVersion) throw std::runtime_error("checkpoint: unsupported version");

    const uint32_t n_params = get_u32(in);
    std::vector<std::pair<std::string, Tensor>> stored;
    stored.reserve(n_params);
    for (uint32_t i = 0; i < n_params; ++i) {
        std::string name = get_string(in);
        stored.emplace_back(std::move(name), get_tensor(in));
    }

    const uint32_t n_tokens = get_u32(in);
    std::vector<std::string> tokens;
    tokens.reserve(n_tokens);
    for (uint32_t i = 0; i < n_tokens; ++i) tokens.push_back(get_string(in));

    config::RunConfig cfg;
    config::apply_json(cfg, get_string(in));
    config::validate(cfg);

    model::Model m = model::Model::build(cfg);
    m.vocab = text::TextVocab::from_tokens(tokens);

    if (stored.size() != m.params.count())
        throw std::runtime_error("checkpoint: parameter set does not match the config");
    for (auto& [name, tensor] : stored) {
        if (!m.params.has(name))
            throw std::runtime_error("checkpoint: unexpected parameter " + name);
        Tensor& dst = m.params.get(name);
        if (dst.rows != tensor.rows || dst.cols != tensor.cols)
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        dst = std::move(tensor);
    }

    const int has_hierarchy = in.get();
    if (has_hierarchy == 1) {
        if (!m.hierarchy)
            throw std::runtime_error("checkpoint: codebooks present but config has none");
        const int initialized = in.get();
        const uint32_t levels = get_u32(in);
        if (static_cast<int>(levels) != m.hierarchy->levels())
            throw std::runtime_error("checkpoint: codebook level count mismatch");
        if (initialized == 1) {
            // init_random flips the initialized flag; every tensor it wrote
            // is replaced below.
            Rng scratch(0);
            m.hierarchy->init_random(scratch);
        }
        for (int lvl = 1; lvl <= m.hierarchy->levels(); ++lvl) {
            auto& cb = m.hierarchy->level(lvl);
            Tensor codes = get_tensor(in);
            Tensor count = get_tensor(in);
            Tensor sum = get_tensor(in);
            if (!codes.same_shape(cb.codes) || !count.same_shape(cb.ema_count) ||
                !sum.same_shape(cb.ema_sum))
                throw std::runtime_error("checkpoint: codebook shape mismatch");
            cb.codes = std::move(codes);
            cb.ema_count = std::move(count);
            cb.ema_sum = std::move(sum);
        }
    } else if (has_hierarchy == 0) {
        if (m.hierarchy)
            throw std::runtime_error("checkpoint: config expects codebooks but none stored");
    } else {
        throw std::runtime_error("checkpoint: truncated file");
    }

    const int has_opt = in.get();
    if (has_opt == 1 && opt) {
        const uint32_t n = get_u32(in);
        for (uint32_t i = 0; i < n; ++i) {
            std::string name = get_string(in);
            optim::ParamState st;
            st.t = static_cast<int64_t>(get_u64(in));
            st.m = get_tensor64(in);
            st.v = get_tensor64(in);
            opt->state.emplace(std::move(name), std::move(st));
        }
    }
    return m;
}

std::string metrics_line(const StepMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "{\"step\":%d,\"l_lm\":%.17g,\"l_pa\":%.17g,\"l_ddi\":%.17g,"
                  "\"eval_acc\":%.17g}",
                  m.step, m.l_lm, m.l_pa, m.l_ddi, m.eval_acc);
    return buf;
}

namespace {

double eval_accuracy(model::Model& m, const std::vector<datagen::QASample>& eval_set,
                     int subset, int max_answer_len) {
    const int n = std::min<int>(subset, static_cast<int>(eval_set.size()));
    if (n <= 0) return -1.0;
    double total = 0.0;
    for (int i = 0; i < n; ++i)
        total += evalmetrics::score_answer(eval_set[i], generate(m, eval_set[i], max_answer_len));
    return total / n;
}

}  // namespace

TrainResult train(const config::RunConfig& cfg, const std::vector<datagen::QASample>& train_set,
                  const std::vector<datagen::QASample>& eval_set) {
    config::validate(cfg);
    if (train_set.empty()) throw std::invalid_argument("train: empty training set");

    model::Model m = model::Model::build(cfg);
    ensure_codebooks(m, train_set[0]);

    optim::AdamWConfig acfg;
    acfg.lr = cfg.lr;
    acfg.weight_decay = cfg.weight_decay;
    OptimizerState opt;

    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    size_t cursor = order.size();
    auto next_index = [&]() {
        if (cursor >= order.size()) {
            shuffle_rng.shuffle(order);
            cursor = 0;
        }
        return order[cursor++];
    };

    const int freeze_steps =
        static_cast<int>(std::ceil(cfg.freeze_ratio * static_cast<double>(cfg.steps)));

    TrainResult res;
    res.model = m;
    double last_eval = -1.0;
    bool have_best = false;

    for (int step = 1; step <= cfg.steps; ++step) {
        m.params.zero_grads();
        double sum_lm = 0.0, sum_pa = 0.0, sum_ddi = 0.0;
        std::vector<std::vector<ddi::LevelAssignment>> step_assign;

        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& sample = train_set[static_cast<size_t>(next_index())];
            Tape t;
            nn::ParamBind p(t, m.params);
            auto fwd = sample_forward(t, p, m, sample);
            auto lm = lm_loss(t, p, m, fwd.fused, sample.answer);
            Value total;
            try {
                total = total_loss(t, lm.loss, fwd.l_pa, fwd.l_ddi, cfg.lambda_pa,
                                   cfg.lambda_ddi);
            } catch (const std::invalid_argument& e) {
                throw std::runtime_error("train: diverged at step " + std::to_string(step) +
                                         " (" + e.what() + ")");
            }
            t.backward(t.scale(total, 1.0 / cfg.batch_size));
            p.collect_grads();
            sum_lm += t.val(lm.loss).at(0, 0);
            sum_pa += t.val(fwd.l_pa).at(0, 0);
            sum_ddi += t.val(fwd.l_ddi).at(0, 0);
            for (auto& a : fwd.assign_numeric) step_assign.push_back(std::move(a));
            for (auto& a : fwd.assign_visual) step_assign.push_back(std::move(a));
        }

        const double lr_t = cfg.lr * optim::cosine_lr(step, cfg.steps, cfg.warmup_ratio);
        for (const auto& name : m.params.names()) {
            if (step <= freeze_steps && model::Model::stage1_frozen(name)) continue;
            auto [it, inserted] = opt.state.try_emplace(name);
            optim::adamw_step(m.params.get(name), m.params.grad(name), it->second, acfg, lr_t);
        }
        m.params.snap_f32();

        if (m.hierarchy && m.hierarchy->initialized() && !step_assign.empty()) {
            std::vector<const std::vector<ddi::LevelAssignment>*> ptrs;
            ptrs.reserve(step_assign.size());
            for (const auto& a : step_assign)
                if (!a.empty()) ptrs.push_back(&a);
            if (!ptrs.empty()) {
                ddi::ema_update(*m.hierarchy, ptrs);
                m.hierarchy->snap_f32();
            }
        }

        if ((step % cfg.eval_interval == 0 || step == cfg.steps) && !eval_set.empty()) {
            last_eval = eval_accuracy(m, eval_set, cfg.eval_subset, cfg.max_answer_len);
            if (!have_best || last_eval > res.best_eval_acc) {
                res.best_eval_acc = last_eval;
                res.best_step = step;
                res.model = m;
                have_best = true;
            }
        }

        StepMetrics rec;
        rec.step = step;
        rec.l_lm = sum_lm / cfg.batch_size;
        rec.l_pa = sum_pa / cfg.batch_size;
        rec.l_ddi = sum_ddi / cfg.batch_size;
        rec.eval_acc = last_eval;
        res.metrics.push_back(rec);
    }

    if (!have_best) res.model = m;
    return res;
}

}  // namespace tsqa::assembly
