#include "tsqa/evalmetrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "tsqa/assembly.hpp"

namespace tsqa::evalmetrics {

double relative_accuracy(double pred, double label) {
    if (label == 0.0) return std::abs(pred) <= 1e-9 ? 1.0 : 0.0;
    return std::max(0.0, 1.0 - std::abs((pred - label) / label));
}

std::optional<double> extract_numeric(const std::string& answer) {
    const size_t n = answer.size();
    for (size_t i = 0; i < n; ++i) {
        size_t start = i;
        size_t j = i;
        if (answer[j] == '+' || answer[j] == '-') ++j;
        size_t digits_begin = j;
        while (j < n && std::isdigit(static_cast<unsigned char>(answer[j]))) ++j;
        bool have_int = j > digits_begin;
        bool have_frac = false;
        if (j < n && answer[j] == '.') {
            size_t frac_begin = j + 1;
            size_t k = frac_begin;
            while (k < n && std::isdigit(static_cast<unsigned char>(answer[k]))) ++k;
            if (k > frac_begin) {
                have_frac = true;
                j = k;
            } else if (have_int) {
                j = frac_begin;  // trailing dot, keep the integer part
            }
        }
        if (have_int || have_frac) return std::stod(answer.substr(start, j - start));
    }
    return std::nullopt;
}

std::string normalize_answer(const std::string& s) {
    std::string out;
    bool in_space = true;  // swallows leading whitespace
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!in_space) out.push_back(' ');
            in_space = true;
        } else {
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
            in_space = false;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

bool categorical_match(const std::string& gold, const std::string& pred) {
    return normalize_answer(gold) == normalize_answer(pred);
}

double macro_f1(const std::vector<std::string>& gold, const std::vector<std::string>& pred) {
    if (gold.size() != pred.size())
        throw std::invalid_argument("macro_f1: gold and pred sizes differ");
    if (gold.empty()) return 0.0;
    std::vector<std::string> classes;
    for (const auto& g : gold)
        if (std::find(classes.begin(), classes.end(), g) == classes.end()) classes.push_back(g);
    double total = 0.0;
    for (const auto& c : classes) {
        int tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < gold.size(); ++i) {
            const bool is_gold = gold[i] == c;
            const bool is_pred = pred[i] == c;
            tp += is_gold && is_pred;
            fp += !is_gold && is_pred;
            fn += is_gold && !is_pred;
        }
        const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
        total += precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    }
    return total / static_cast<double>(classes.size());
}

double score_answer(const datagen::QASample& gold, const std::string& answer) {
    if (gold.label_kind == datagen::LabelKind::categorical)
        return categorical_match(gold.label_text, answer) ? 1.0 : 0.0;
    const auto value = extract_numeric(answer);
    if (!value) return 0.0;
    return relative_accuracy(*value, gold.label_value);
}

namespace {

// A variant is runnable on a checkpoint iff every stage the tag enables has
// its parameters (or codebooks) present.
void check_tag_compatible(const model::Model& m, const config::ModuleToggles& want,
                          const std::string& tag) {
    auto missing = [&](const std::string& what) {
        throw std::invalid_argument("run_eval: tag '" + tag + "' needs " + what +
                                    " the checkpoint does not carry");
    };
    if (want.num && !m.params.has("enc_num.in.w")) missing("the numeric encoder");
    if (want.ddi && !m.params.has("interact.n.q")) missing("the interaction projections");
    if (want.ddi && want.md && !m.params.has("quant.down.w")) missing("the quantizer projections");
    if (want.ddi && want.md && want.vq && !m.hierarchy) missing("the codebooks");
    if (want.cth && !m.params.has("cth.query.q")) missing("the highlight queries");
}

}  // namespace

EvalReport run_eval(const model::Model& m, const std::vector<datagen::QASample>& dataset,
                    const std::string& ablation_tag) {
    if (!config::is_ablation_tag(ablation_tag))
        throw std::invalid_argument("run_eval: unknown ablation tag '" + ablation_tag + "'");
    const config::ModuleToggles want = config::toggles_for(ablation_tag);
    check_tag_compatible(m, want, ablation_tag);

    model::Model runner = m;
    runner.toggles = want;
    runner.cfg.ablation = ablation_tag;

    struct TaskBucket {
        bool categorical = true;
        std::vector<std::string> gold, pred;  // normalized labels
        double rel_sum = 0.0;
        int hits = 0;
        int count = 0;
    };
    std::map<std::string, TaskBucket> buckets;
    double overall = 0.0;

    for (const auto& sample : dataset) {
        const std::string answer = assembly::generate(runner, sample, runner.cfg.max_answer_len);
        const auto tid = datagen::template_from_question(sample.question);
        const std::string task = tid ? datagen::template_name(*tid) : "unknown";
        auto& bucket = buckets[task];
        bucket.count += 1;
        bucket.categorical = sample.label_kind == datagen::LabelKind::categorical;
        const double score = score_answer(sample, answer);
        overall += score;
        if (bucket.categorical) {
            bucket.gold.push_back(normalize_answer(sample.label_text));
            bucket.pred.push_back(normalize_answer(answer));
            bucket.hits += categorical_match(sample.label_text, answer);
        } else {
            bucket.rel_sum += score;
        }
    }

    EvalReport report;
    report.ablation_tag = ablation_tag;
    report.sample_count = static_cast<int>(dataset.size());
    report.overall = dataset.empty() ? 0.0 : overall / static_cast<double>(dataset.size());
    for (const auto& [task, bucket] : buckets) {
        TaskScore ts;
        ts.task = task;
        ts.count = bucket.count;
        ts.categorical = bucket.categorical;
        if (bucket.categorical) {
            ts.accuracy = static_cast<double>(bucket.hits) / bucket.count;
            ts.macro_f1 = macro_f1(bucket.gold, bucket.pred);
        } else {
            ts.mean_rel_acc = bucket.rel_sum / bucket.count;
        }
        report.tasks.push_back(ts);
    }
    return report;
}

std::string render_report(const EvalReport& report) {
    std::string out = "ablation=" + report.ablation_tag +
                      " samples=" + std::to_string(report.sample_count) + "\n";
    char line[160];
    for (const auto& ts : report.tasks) {
        if (ts.categorical)
            std::snprintf(line, sizeof line, "task=%s count=%d accuracy=%.4f macro_f1=%.4f\n",
                          ts.task.c_str(), ts.count, ts.accuracy, ts.macro_f1);
        else
            std::snprintf(line, sizeof line, "task=%s count=%d mean_rel_acc=%.4f\n",
                          ts.task.c_str(), ts.count, ts.mean_rel_acc);
        out += line;
    }
    std::snprintf(line, sizeof line, "overall=%.4f\n", report.overall);
    out += line;
    return out;
}

}  // namespace tsqa::evalmetrics
