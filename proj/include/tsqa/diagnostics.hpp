#pragma once

#include <string>
#include <vector>

#include "tsqa/datagen.hpp"
#include "tsqa/model.hpp"

namespace tsqa::diagnostics {

struct DiagnosticsSummary {
    double diag_mean = 0.0;     // numeric-visual cosine matrix diagonal
    double offdiag_mean = 0.0;  // everything off that diagonal
    double mean_abs_zu = 0.0;   // |cos| between common and unique rows
    int instances = 0;          // instances that contributed
};

// 64 uniform bins over [-1, 1]; out-of-range values clamp into the end bins.
std::vector<int> histogram64(const std::vector<double>& values);

// Ñ x Ñ matrix as CSV with a header row of patch indices.
std::string render_matrix_csv(const Tensor& matrix);
// One "lo hi count" line per bin.
std::string render_histogram(const std::vector<int>& bins);

// Per sampled instance: numeric-visual and numeric-caption cosine matrices
// as CSV files; pooled over instances: pair-similarity histograms for the
// continuous, common, and unique embeddings; one summary file of scalars.
// Non-finite values are an error, never written. Fresh checkpoints are
// fine (baseline diagnostics). Returns the summary.
DiagnosticsSummary emit_diagnostics(model::Model& m,
                                    const std::vector<datagen::QASample>& samples,
                                    const std::string& out_dir, int max_samples);

}  // namespace tsqa::diagnostics
