#include "tsqa/cth.hpp"

#include <cmath>
#include <stdexcept>

#include "tsqa/rng.hpp"

namespace tsqa::cth {

using diff::Tape;
using diff::Value;

void validate(const HighlightConfig& cfg) {
    if (cfg.queries < 1) throw std::invalid_argument("highlighting needs at least one query");
    if (cfg.dim < 1) throw std::invalid_argument("highlighting dim must be positive");
}

namespace {

void init_site(nn::ParamStore& s, const std::string& prefix, int dim, Rng& rng) {
    s.create(prefix + ".q", Tensor::xavier(dim, dim, rng));
    s.create(prefix + ".k", Tensor::xavier(dim, dim, rng));
    s.create(prefix + ".v", Tensor::xavier(dim, dim, rng));
}

// Bias-free single-head attention without an output projection: rows of the
// result are convex combinations of projected value rows.
Value attend(Tape& t, nn::ParamBind& p, const std::string& prefix, Value queries, Value tokens) {
    Value q = t.matmul(queries, p[prefix + ".q"]);
    Value k = t.matmul(tokens, p[prefix + ".k"]);
    Value v = t.matmul(tokens, p[prefix + ".v"]);
    const double scale = 1.0 / std::sqrt(static_cast<double>(t.val(q).cols));
    Value probs = t.softmax_rows(t.scale(t.matmul(q, k, false, true), scale));
    return t.matmul(probs, v);
}

const char* side(Modality m) { return m == Modality::numeric ? "n" : "v"; }

}  // namespace

void init_highlight(nn::ParamStore& s, const HighlightConfig& cfg, Rng& rng) {
    validate(cfg);
    s.create("cth.query.q", Tensor::xavier(cfg.queries, cfg.dim, rng));
    s.create("cth.query.n", Tensor::xavier(cfg.queries, cfg.dim, rng));
    s.create("cth.query.v", Tensor::xavier(cfg.queries, cfg.dim, rng));
    init_site(s, "cth.pool", cfg.dim, rng);
    for (const char* o : {"n", "v"}) {
        init_site(s, std::string("cth.") + o + ".ques", cfg.dim, rng);
        init_site(s, std::string("cth.") + o + ".self", cfg.dim, rng);
    }
}

Value pool_question(Tape& t, nn::ParamBind& p, const HighlightConfig& cfg, Value question_emb) {
    validate(cfg);
    if (t.val(question_emb).rows < 1)
        throw std::invalid_argument("cannot pool an empty question");
    return attend(t, p, "cth.pool", p["cth.query.q"], question_emb);
}

Value highlight(Tape& t, nn::ParamBind& p, const HighlightConfig& cfg, Modality modality,
                Value tokens, Value pooled_question) {
    validate(cfg);
    const std::string o = side(modality);
    Value from_question = attend(t, p, "cth." + o + ".ques", pooled_question, tokens);
    Value intrinsic = attend(t, p, "cth." + o + ".self", p["cth.query." + o], tokens);
    return t.add(from_question, intrinsic);
}

Value prepend(Tape& t, Value highlights, Value tokens) {
    if (t.val(highlights).rows < 1)
        throw std::invalid_argument("prepend needs at least one highlight row");
    return t.concat_rows(highlights, tokens);
}

}  // namespace tsqa::cth
