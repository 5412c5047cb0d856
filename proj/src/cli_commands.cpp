#include "tsqa/cli_commands.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "CLI11.hpp"
#include "tsqa/assembly.hpp"
#include "tsqa/datagen.hpp"
#include "tsqa/diagnostics.hpp"
#include "tsqa/evalmetrics.hpp"
#include "tsqa/rng.hpp"

namespace tsqa::cli {
namespace {

namespace fs = std::filesystem;

// Raised for problems the user can fix (missing files, bad values); mapped
// onto kExitUser by the dispatcher.
struct UserError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void ensure_parent_dir(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

// Every command logs the full resolved config, to stdout and into the
// output directory, so any run can be replayed exactly.
void log_resolved_config(const config::RunConfig& cfg) {
    const std::string text = config::to_json(cfg);
    std::cout << "resolved config:\n" << text << "\n";
    fs::create_directories(cfg.out_dir);
    std::ofstream out(cfg.out_dir + "/config_resolved.json");
    if (!out) throw std::runtime_error("cannot write " + cfg.out_dir + "/config_resolved.json");
    out << text << "\n";
}

std::vector<datagen::QASample> read_dataset_or_fail(const std::string& path) {
    if (!fs::exists(path)) throw UserError("dataset not found: " + path);
    return datagen::read_dataset(path);
}

std::vector<datagen::TemplateId> template_ids(const config::RunConfig& cfg) {
    std::vector<datagen::TemplateId> ids;
    for (const auto& name : cfg.templates) ids.push_back(*datagen::template_from_name(name));
    return ids;
}

std::string default_checkpoint(const config::RunConfig& cfg) {
    return cfg.out_dir + "/checkpoint.bin";
}

}  // namespace

int cmd_gen(const config::RunConfig& cfg) {
    log_resolved_config(cfg);
    datagen::GenConfig gen;
    gen.length = {cfg.series_len, cfg.series_len};
    // short series cannot host the default period range; shrink it to fit
    gen.period.hi = std::min(gen.period.hi, cfg.series_len / 2);
    gen.period.lo = std::min(gen.period.lo, gen.period.hi);
    const auto ids = template_ids(cfg);

    const auto train =
        datagen::generate_dataset(gen, ids, cfg.n_train, derive_seed(cfg.seed, "train-data"));
    const auto eval =
        datagen::generate_dataset(gen, ids, cfg.n_eval, derive_seed(cfg.seed, "eval-data"));

    const std::string train_path = config::resolved_train_path(cfg);
    const std::string eval_path = config::resolved_eval_path(cfg);
    ensure_parent_dir(train_path);
    ensure_parent_dir(eval_path);
    datagen::write_dataset(train, train_path);
    datagen::write_dataset(eval, eval_path);
    std::cout << "wrote " << train.size() << " train samples to " << train_path << "\n"
              << "wrote " << eval.size() << " eval samples to " << eval_path << "\n";
    return kExitOk;
}

int cmd_train(const config::RunConfig& cfg) {
    log_resolved_config(cfg);
    const auto train_set = read_dataset_or_fail(config::resolved_train_path(cfg));
    const std::string eval_path = config::resolved_eval_path(cfg);
    std::vector<datagen::QASample> eval_set;
    if (fs::exists(eval_path)) eval_set = datagen::read_dataset(eval_path);

    auto result = assembly::train(cfg, train_set, eval_set);

    const std::string metrics_path = cfg.out_dir + "/metrics.jsonl";
    std::ofstream metrics(metrics_path);
    if (!metrics) throw std::runtime_error("cannot write " + metrics_path);
    for (const auto& rec : result.metrics) metrics << assembly::metrics_line(rec) << "\n";

    const std::string ckpt = default_checkpoint(cfg);
    assembly::save_checkpoint(ckpt, result.model);
    std::cout << "trained " << cfg.steps << " steps, best eval_acc=" << result.best_eval_acc
              << " at step " << result.best_step << "\n"
              << "checkpoint: " << ckpt << "\nmetrics: " << metrics_path << "\n";
    return kExitOk;
}

int cmd_eval(const config::RunConfig& cfg, const std::string& checkpoint_path) {
    log_resolved_config(cfg);
    const std::string ckpt = checkpoint_path.empty() ? default_checkpoint(cfg) : checkpoint_path;
    if (!fs::exists(ckpt)) throw UserError("checkpoint not found: " + ckpt);
    model::Model m = assembly::load_checkpoint(ckpt);

    const auto eval_set = read_dataset_or_fail(config::resolved_eval_path(cfg));
    const auto report = evalmetrics::run_eval(m, eval_set, cfg.ablation);
    const std::string text = evalmetrics::render_report(report);

    const std::string report_path = cfg.out_dir + "/report.txt";
    std::ofstream out(report_path);
    if (!out) throw std::runtime_error("cannot write " + report_path);
    out << text;
    std::cout << text << "report: " << report_path << "\n";
    return kExitOk;
}

int cmd_diagnose(const config::RunConfig& cfg, const std::string& checkpoint_path,
                 int max_samples) {
    log_resolved_config(cfg);
    const std::string ckpt = checkpoint_path.empty() ? default_checkpoint(cfg) : checkpoint_path;
    if (!fs::exists(ckpt)) throw UserError("checkpoint not found: " + ckpt);
    model::Model m = assembly::load_checkpoint(ckpt);

    const auto samples = read_dataset_or_fail(config::resolved_eval_path(cfg));
    const std::string diag_dir = cfg.out_dir + "/diag";
    const auto summary = diagnostics::emit_diagnostics(m, samples, diag_dir, max_samples);
    std::printf("diag_mean=%.6f offdiag_mean=%.6f mean_abs_zu=%.6f instances=%d\n",
                summary.diag_mean, summary.offdiag_mean, summary.mean_abs_zu,
                summary.instances);
    std::cout << "artifacts: " << diag_dir << "\n";
    return kExitOk;
}

int cmd_ablate(const config::RunConfig& cfg, const std::vector<std::string>& tags,
               const std::vector<uint64_t>& seeds) {
    log_resolved_config(cfg);
    if (tags.empty()) throw UserError("ablate: no tags given");
    if (seeds.empty()) throw UserError("ablate: no seeds given");
    for (const auto& tag : tags)
        if (!config::is_ablation_tag(tag)) throw UserError("ablate: unknown tag '" + tag + "'");

    std::string table = "tag seed overall\n";
    for (uint64_t seed : seeds) {
        // one dataset per seed, shared by every tag so the comparison is
        // paired on identical samples
        config::RunConfig gen_cfg = cfg;
        gen_cfg.seed = seed;
        gen_cfg.out_dir = cfg.out_dir + "/seed_" + std::to_string(seed);
        gen_cfg.train_path.clear();
        gen_cfg.eval_path.clear();
        if (int rc = cmd_gen(gen_cfg); rc != kExitOk) return rc;
        const auto train_set = read_dataset_or_fail(config::resolved_train_path(gen_cfg));
        const auto eval_set = read_dataset_or_fail(config::resolved_eval_path(gen_cfg));

        for (const auto& tag : tags) {
            config::RunConfig run_cfg = gen_cfg;
            run_cfg.ablation = tag;
            run_cfg.out_dir = gen_cfg.out_dir + "/" + tag;
            fs::create_directories(run_cfg.out_dir);

            auto result = assembly::train(run_cfg, train_set, eval_set);
            assembly::save_checkpoint(default_checkpoint(run_cfg), result.model);
            const auto report = evalmetrics::run_eval(result.model, eval_set, tag);

            char row[96];
            std::snprintf(row, sizeof row, "%s %llu %.4f\n", tag.c_str(),
                          static_cast<unsigned long long>(seed), report.overall);
            table += row;
            std::cout << row;
            std::ofstream rep(run_cfg.out_dir + "/report.txt");
            rep << evalmetrics::render_report(report);
        }
    }
    std::ofstream out(cfg.out_dir + "/ablate_results.txt");
    if (!out) throw std::runtime_error("cannot write ablate_results.txt");
    out << table;
    std::cout << "table: " << cfg.out_dir << "/ablate_results.txt\n";
    return kExitOk;
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"desk-scale multi-modal time series question answering"};
    app.require_subcommand(1);
    app.fallthrough();  // lets --config/--set appear after the subcommand

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--set", overrides, "config override key=value, repeatable");

    auto* gen = app.add_subcommand("gen", "generate train/eval datasets");
    auto* train = app.add_subcommand("train", "train a model");
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    auto* diagnose = app.add_subcommand("diagnose", "emit similarity diagnostics");
    auto* ablate = app.add_subcommand("ablate", "train and evaluate ablation variants");

    std::string checkpoint_path;
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint path");
    diagnose->add_option("--checkpoint", checkpoint_path, "checkpoint path");
    int diag_samples = 4;
    diagnose->add_option("--samples", diag_samples, "samples to diagnose");
    std::vector<std::string> tags = {"full", "no_pa", "no_ddi"};
    std::vector<uint64_t> seeds;
    ablate->add_option("--tags", tags, "ablation tags to run");
    ablate->add_option("--seeds", seeds, "seeds to run per tag");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUser;
    }

    try {
        config::RunConfig cfg;
        if (!config_path.empty()) cfg = config::load_file(config_path);
        if (const char* env_out = std::getenv("TSQA_OUT_DIR"); env_out && *env_out)
            cfg.out_dir = env_out;
        config::apply_overrides(cfg, overrides);
        config::validate(cfg);

        if (gen->parsed()) return cmd_gen(cfg);
        if (train->parsed()) return cmd_train(cfg);
        if (eval->parsed()) return cmd_eval(cfg, checkpoint_path);
        if (diagnose->parsed()) return cmd_diagnose(cfg, checkpoint_path, diag_samples);
        if (ablate->parsed()) {
            if (seeds.empty()) seeds = {cfg.seed};
            return cmd_ablate(cfg, tags, seeds);
        }
        return kExitUser;
    } catch (const UserError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUser;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUser;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}

}  // namespace tsqa::cli
