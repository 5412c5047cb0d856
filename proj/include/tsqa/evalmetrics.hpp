#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tsqa/datagen.hpp"
#include "tsqa/model.hpp"

namespace tsqa::evalmetrics {

// max(0, 1 - |(pred - label) / label|). A zero label scores 1 only when the
// prediction is zero too (within 1e-9); the paper's formula divides by the
// label, so the guard is ours.
double relative_accuracy(double pred, double label);

// First decimal number in the string: optional sign, digits, optional
// fraction. Absent number means the caller scores 0.
std::optional<double> extract_numeric(const std::string& answer);

// Lowercase, collapse whitespace runs, trim the ends.
std::string normalize_answer(const std::string& s);
bool categorical_match(const std::string& gold, const std::string& pred);

// Macro F1 over the classes present in gold; predictions outside that set
// only cost precision.
double macro_f1(const std::vector<std::string>& gold, const std::vector<std::string>& pred);

// Composite per-sample score: categorical exact match as 0/1, numeric
// relative accuracy over the first extracted number.
double score_answer(const datagen::QASample& gold, const std::string& answer);

struct TaskScore {
    std::string task;
    int count = 0;
    bool categorical = true;
    double accuracy = 0.0;      // exact-match rate (categorical)
    double macro_f1 = 0.0;      // macro F1 (categorical)
    double mean_rel_acc = 0.0;  // mean relative accuracy (numeric)
};

struct EvalReport {
    std::string ablation_tag;
    int sample_count = 0;
    std::vector<TaskScore> tasks;  // task recovered from the question text
    double overall = 0.0;          // mean composite score
};

// Greedy-decodes every sample with the tagged module set and scores per
// task. The tag must be satisfiable by the checkpoint: disabling trained
// modules is fine, enabling ones the checkpoint lacks is an error, as is an
// unknown tag.
EvalReport run_eval(const model::Model& m, const std::vector<datagen::QASample>& dataset,
                    const std::string& ablation_tag);

// One task per line plus the overall score, stable field order.
std::string render_report(const EvalReport& report);

}  // namespace tsqa::evalmetrics
