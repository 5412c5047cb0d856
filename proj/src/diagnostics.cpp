#include "tsqa/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "tsqa/assembly.hpp"

namespace tsqa::diagnostics {

std::vector<int> histogram64(const std::vector<double>& values) {
    std::vector<int> bins(64, 0);
    for (double v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument("histogram64: non-finite value");
        int idx = static_cast<int>(std::floor((v + 1.0) / 2.0 * 64.0));
        idx = std::clamp(idx, 0, 63);
        bins[static_cast<size_t>(idx)] += 1;
    }
    return bins;
}

std::string render_matrix_csv(const Tensor& matrix) {
    std::string out;
    for (int j = 0; j < matrix.cols; ++j) {
        if (j) out += ',';
        out += std::to_string(j);
    }
    out += '\n';
    char cell[48];
    for (int i = 0; i < matrix.rows; ++i) {
        for (int j = 0; j < matrix.cols; ++j) {
            const double v = matrix.at(i, j);
            if (!std::isfinite(v))
                throw std::invalid_argument("render_matrix_csv: non-finite entry");
            std::snprintf(cell, sizeof cell, "%.10g", v);
            if (j) out += ',';
            out += cell;
        }
        out += '\n';
    }
    return out;
}

std::string render_histogram(const std::vector<int>& bins) {
    std::string out;
    char line[80];
    const double width = 2.0 / static_cast<double>(bins.size());
    for (size_t b = 0; b < bins.size(); ++b) {
        const double lo = -1.0 + width * static_cast<double>(b);
        std::snprintf(line, sizeof line, "%.6f %.6f %d\n", lo, lo + width, bins[b]);
        out += line;
    }
    return out;
}

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("diagnostics: cannot write " + path);
    out << content;
    if (!out.flush()) throw std::runtime_error("diagnostics: write failed for " + path);
}

void collect_pairs(const Tensor& sim, std::vector<double>& pool) {
    for (double v : sim.data) pool.push_back(v);
}

}  // namespace

DiagnosticsSummary emit_diagnostics(model::Model& m,
                                    const std::vector<datagen::QASample>& samples,
                                    const std::string& out_dir, int max_samples) {
    std::filesystem::create_directories(out_dir);
    if (!samples.empty()) assembly::ensure_codebooks(m, samples[0]);

    DiagnosticsSummary summary;
    double diag_sum = 0.0, offdiag_sum = 0.0, zu_sum = 0.0;
    long diag_n = 0, offdiag_n = 0, zu_n = 0;
    std::vector<double> pool_continuous, pool_common, pool_unique;

    const int n = std::min<int>(max_samples, static_cast<int>(samples.size()));
    for (int k = 0; k < n; ++k) {
        diff::Tape t;
        nn::ParamBind p(t, m.params);
        auto fwd = assembly::sample_forward(t, p, m, samples[static_cast<size_t>(k)]);

        for (size_t i = 0; i < fwd.e_n.size(); ++i) {
            summary.instances += 1;
            const Tensor sim_nv = t.val(t.cos_sim_matrix(fwd.e_n[i], fwd.e_v[i]));
            write_file(out_dir + "/sim_nv_" + std::to_string(k) + "_" + std::to_string(i) +
                           ".csv",
                       render_matrix_csv(sim_nv));
            collect_pairs(sim_nv, pool_continuous);
            for (int r = 0; r < sim_nv.rows; ++r)
                for (int c = 0; c < sim_nv.cols; ++c) {
                    if (r == c) {
                        diag_sum += sim_nv.at(r, c);
                        ++diag_n;
                    } else {
                        offdiag_sum += sim_nv.at(r, c);
                        ++offdiag_n;
                    }
                }
            if (i < fwd.e_s.size()) {
                const Tensor sim_ns = t.val(t.cos_sim_matrix(fwd.e_n[i], fwd.e_s[i]));
                write_file(out_dir + "/sim_ns_" + std::to_string(k) + "_" + std::to_string(i) +
                               ".csv",
                           render_matrix_csv(sim_ns));
            }
        }
        for (size_t i = 0; i < fwd.z_n.size(); ++i) {
            collect_pairs(t.val(t.cos_sim_matrix(fwd.z_n[i], fwd.z_v[i])), pool_common);
            collect_pairs(t.val(t.cos_sim_matrix(fwd.u_n[i], fwd.u_v[i])), pool_unique);
            const Tensor zu_n_rows = t.val(t.cos_sim_rows(fwd.z_n[i], fwd.u_n[i]));
            const Tensor zu_v_rows = t.val(t.cos_sim_rows(fwd.z_v[i], fwd.u_v[i]));
            for (double v : zu_n_rows.data) {
                zu_sum += std::abs(v);
                ++zu_n;
            }
            for (double v : zu_v_rows.data) {
                zu_sum += std::abs(v);
                ++zu_n;
            }
        }
    }

    write_file(out_dir + "/hist_continuous.txt", render_histogram(histogram64(pool_continuous)));
    write_file(out_dir + "/hist_common.txt", render_histogram(histogram64(pool_common)));
    write_file(out_dir + "/hist_unique.txt", render_histogram(histogram64(pool_unique)));

    summary.diag_mean = diag_n ? diag_sum / diag_n : 0.0;
    summary.offdiag_mean = offdiag_n ? offdiag_sum / offdiag_n : 0.0;
    summary.mean_abs_zu = zu_n ? zu_sum / zu_n : 0.0;
    if (!std::isfinite(summary.diag_mean) || !std::isfinite(summary.offdiag_mean) ||
        !std::isfinite(summary.mean_abs_zu))
        throw std::runtime_error("diagnostics: non-finite summary");

    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "diag_mean=%.10g\noffdiag_mean=%.10g\nmean_abs_zu=%.10g\ninstances=%d\n",
                  summary.diag_mean, summary.offdiag_mean, summary.mean_abs_zu,
                  summary.instances);
    write_file(out_dir + "/summary.txt", buf);
    return summary;
}

}  // namespace tsqa::diagnostics
