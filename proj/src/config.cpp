#include "tsqa/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "tsqa/datagen.hpp"

namespace tsqa::config {
namespace {

using nlohmann::ordered_json;

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
    throw std::invalid_argument("config: " + field + " " + why);
}

void require(bool ok, const std::string& field, const std::string& why) {
    if (!ok) bad_field(field, why);
}

}  // namespace

const std::vector<std::string>& ablation_tags() {
    static const std::vector<std::string> tags = {"full",   "no_pa",  "no_ddi",
                                                  "no_cth", "no_nva", "no_nca",
                                                  "no_md",  "no_vq",  "no_num"};
    return tags;
}

bool is_ablation_tag(const std::string& tag) {
    for (const auto& t : ablation_tags())
        if (t == tag) return true;
    return false;
}

ModuleToggles toggles_for(const std::string& tag) {
    ModuleToggles m;
    if (tag == "full") return m;
    if (tag == "no_pa") {
        m.pa = false;
    } else if (tag == "no_ddi") {
        m.ddi = false;
    } else if (tag == "no_cth") {
        m.cth = false;
    } else if (tag == "no_nva") {
        m.nva = false;
    } else if (tag == "no_nca") {
        m.nca = false;
    } else if (tag == "no_md") {
        m.md = false;
    } else if (tag == "no_vq") {
        m.vq = false;
    } else if (tag == "no_num") {
        m.num = false;
        m.pa = false;
        m.ddi = false;
    } else {
        throw std::invalid_argument("config: unknown ablation tag '" + tag + "'");
    }
    return m;
}

void validate(const RunConfig& cfg) {
    require(cfg.dim >= 1, "dim", "must be >= 1");
    require(cfg.heads >= 1, "heads", "must be >= 1");
    require(cfg.dim % cfg.heads == 0, "dim", "must be divisible by heads");
    require(cfg.code_dim >= 1, "code_dim", "must be >= 1");
    require(cfg.base_codes >= 1, "base_codes", "must be >= 1");
    require(cfg.levels >= 1 && cfg.levels <= 16, "levels", "must be in [1, 16]");
    require(cfg.numeric_patch_len >= 1, "numeric_patch_len", "must be >= 1");
    require(cfg.pixel_size >= 4, "pixel_size", "must be >= 4");
    require(cfg.pixel_size >= cfg.numeric_patch_len, "pixel_size",
            "must be >= numeric_patch_len so pixel patches cover numeric patch spans");
    require(cfg.highlight_queries >= 1, "highlight_queries", "must be >= 1");
    require(cfg.enc_blocks >= 1, "enc_blocks", "must be >= 1");
    require(cfg.dec_blocks >= 1, "dec_blocks", "must be >= 1");
    require(cfg.max_patches >= 1, "max_patches", "must be >= 1");
    require(cfg.max_seq >= 8, "max_seq", "must be >= 8");
    require(cfg.temperature > 0.0, "temperature", "must be positive");
    require(cfg.alpha >= 0.0, "alpha", "must be >= 0");
    require(cfg.beta >= 0.0, "beta", "must be >= 0");
    require(cfg.lambda_pa >= 0.0, "lambda_pa", "must be >= 0");
    require(cfg.lambda_ddi >= 0.0, "lambda_ddi", "must be >= 0");
    require(cfg.ema_decay >= 0.0 && cfg.ema_decay < 1.0, "ema_decay", "must be in [0, 1)");
    require(cfg.ema_eps > 0.0, "ema_eps", "must be positive");
    require(cfg.lr > 0.0, "lr", "must be positive");
    require(cfg.weight_decay >= 0.0, "weight_decay", "must be >= 0");
    require(cfg.warmup_ratio >= 0.0 && cfg.warmup_ratio <= 1.0, "warmup_ratio",
            "must be in [0, 1]");
    require(cfg.freeze_ratio >= 0.0 && cfg.freeze_ratio <= 1.0, "freeze_ratio",
            "must be in [0, 1]");
    require(cfg.steps >= 0, "steps", "must be >= 0");
    require(cfg.batch_size >= 1, "batch_size", "must be >= 1");
    require(cfg.eval_interval >= 1, "eval_interval", "must be >= 1");
    require(cfg.eval_subset >= 1, "eval_subset", "must be >= 1");
    require(cfg.max_answer_len >= 1, "max_answer_len", "must be >= 1");
    require(cfg.n_train >= 0, "n_train", "must be >= 0");
    require(cfg.n_eval >= 0, "n_eval", "must be >= 0");
    require(cfg.series_len >= 2, "series_len", "must be >= 2");
    int patches = (cfg.series_len + cfg.numeric_patch_len - 1) / cfg.numeric_patch_len;
    require(patches <= cfg.max_patches, "series_len",
            "yields more patches than max_patches admits");
    require(!cfg.templates.empty(), "templates", "must name at least one template");
    for (const auto& name : cfg.templates)
        require(datagen::template_from_name(name).has_value(), "templates",
                "contains unknown template '" + name + "'");
    require(is_ablation_tag(cfg.ablation), "ablation",
            "must be one of the known tags, got '" + cfg.ablation + "'");
    require(!cfg.out_dir.empty(), "out_dir", "must not be empty");
}

namespace {

// One overlay entry per config field, so apply and serialize cannot drift
// apart: both walk this table.
struct FieldOps {
    void (*apply)(RunConfig&, const ordered_json&);
    ordered_json (*emit)(const RunConfig&);
};

// Type mismatches propagate as json exceptions; apply_object turns them
// into a named error since only it knows which key was being applied.
template <typename T, T RunConfig::* Member>
FieldOps scalar_field() {
    return FieldOps{
        [](RunConfig& cfg, const ordered_json& v) { cfg.*Member = v.get<T>(); },
        [](const RunConfig& cfg) { return ordered_json(cfg.*Member); },
    };
}

const std::vector<std::pair<std::string, FieldOps>>& field_table() {
    static const std::vector<std::pair<std::string, FieldOps>> table = {
        {"dim", scalar_field<int, &RunConfig::dim>()},
        {"code_dim", scalar_field<int, &RunConfig::code_dim>()},
        {"base_codes", scalar_field<int, &RunConfig::base_codes>()},
        {"levels", scalar_field<int, &RunConfig::levels>()},
        {"numeric_patch_len",
         scalar_field<int, &RunConfig::numeric_patch_len>()},
        {"pixel_size", scalar_field<int, &RunConfig::pixel_size>()},
        {"highlight_queries",
         scalar_field<int, &RunConfig::highlight_queries>()},
        {"enc_blocks", scalar_field<int, &RunConfig::enc_blocks>()},
        {"dec_blocks", scalar_field<int, &RunConfig::dec_blocks>()},
        {"heads", scalar_field<int, &RunConfig::heads>()},
        {"max_patches", scalar_field<int, &RunConfig::max_patches>()},
        {"max_seq", scalar_field<int, &RunConfig::max_seq>()},
        {"temperature", scalar_field<double, &RunConfig::temperature>()},
        {"alpha", scalar_field<double, &RunConfig::alpha>()},
        {"beta", scalar_field<double, &RunConfig::beta>()},
        {"lambda_pa", scalar_field<double, &RunConfig::lambda_pa>()},
        {"lambda_ddi", scalar_field<double, &RunConfig::lambda_ddi>()},
        {"ema_decay", scalar_field<double, &RunConfig::ema_decay>()},
        {"ema_eps", scalar_field<double, &RunConfig::ema_eps>()},
        {"lr", scalar_field<double, &RunConfig::lr>()},
        {"weight_decay", scalar_field<double, &RunConfig::weight_decay>()},
        {"warmup_ratio", scalar_field<double, &RunConfig::warmup_ratio>()},
        {"freeze_ratio", scalar_field<double, &RunConfig::freeze_ratio>()},
        {"steps", scalar_field<int, &RunConfig::steps>()},
        {"batch_size", scalar_field<int, &RunConfig::batch_size>()},
        {"eval_interval", scalar_field<int, &RunConfig::eval_interval>()},
        {"eval_subset", scalar_field<int, &RunConfig::eval_subset>()},
        {"max_answer_len", scalar_field<int, &RunConfig::max_answer_len>()},
        {"seed", scalar_field<uint64_t, &RunConfig::seed>()},
        {"n_train", scalar_field<int, &RunConfig::n_train>()},
        {"n_eval", scalar_field<int, &RunConfig::n_eval>()},
        {"series_len", scalar_field<int, &RunConfig::series_len>()},
        {"templates",
         scalar_field<std::vector<std::string>, &RunConfig::templates>()},
        {"ablation", scalar_field<std::string, &RunConfig::ablation>()},
        {"train_path", scalar_field<std::string, &RunConfig::train_path>()},
        {"eval_path", scalar_field<std::string, &RunConfig::eval_path>()},
        {"out_dir", scalar_field<std::string, &RunConfig::out_dir>()},
    };
    return table;
}

void apply_object(RunConfig& cfg, const ordered_json& obj) {
    if (!obj.is_object()) throw std::invalid_argument("config: top level must be an object");
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (const auto& [name, ops] : field_table()) {
            if (name == key) {
                try {
                    ops.apply(cfg, value);
                } catch (const nlohmann::json::exception&) {
                    bad_field(key.c_str(), "has the wrong type");
                }
                known = true;
                break;
            }
        }
        if (!known) throw std::invalid_argument("config: unknown key '" + key + "'");
    }
}

}  // namespace

void apply_json(RunConfig& cfg, const std::string& json_text) {
    ordered_json obj;
    try {
        obj = ordered_json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("config: parse error: ") + e.what());
    }
    apply_object(cfg, obj);
}

RunConfig load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    RunConfig cfg;
    apply_json(cfg, buf.str());
    validate(cfg);
    return cfg;
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
    for (const auto& kv : overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw std::invalid_argument("config: override '" + kv + "' is not key=value");
        std::string key = kv.substr(0, eq);
        std::string raw = kv.substr(eq + 1);
        ordered_json value = ordered_json::parse(raw, nullptr, false);
        if (value.is_discarded()) value = raw;  // bare strings arrive unquoted
        ordered_json obj;
        obj[key] = value;
        apply_object(cfg, obj);
    }
}

std::string to_json(const RunConfig& cfg) {
    ordered_json obj;
    for (const auto& [name, ops] : field_table()) obj[name] = ops.emit(cfg);
    return obj.dump(2);
}

std::string resolved_train_path(const RunConfig& cfg) {
    return cfg.train_path.empty() ? cfg.out_dir + "/train.jsonl" : cfg.train_path;
}

std::string resolved_eval_path(const RunConfig& cfg) {
    return cfg.eval_path.empty() ? cfg.out_dir + "/eval.jsonl" : cfg.eval_path;
}

}  // namespace tsqa::config
