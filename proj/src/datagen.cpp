#include "tsqa/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "tsqa/rng.hpp"

namespace tsqa::datagen {

using nlohmann::json;

namespace {

std::string fmt3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

// Numeric answers: integers render bare, everything else with three
// decimals (matching what the tokenizer and extract_numeric understand).
std::string render_numeric(double v) {
    if (v == std::floor(v) && std::abs(v) < 1e15)
        return std::to_string(static_cast<long long>(v));
    return fmt3(v);
}

constexpr double kNoiseNone = 0.05;  // sigma below this counts as "none"
constexpr double kNoiseLow = 0.5;    // below this "low", otherwise "high"

}  // namespace

void validate(const AttributeSpec& spec) {
    if (spec.length <= 0)
        throw std::invalid_argument("spec: length must be positive, got " +
                                    std::to_string(spec.length));
    if (spec.trend.kind != "none" && spec.trend.kind != "linear")
        throw std::invalid_argument("spec: unknown trend kind '" + spec.trend.kind + "'");
    if (spec.seasonality.amplitude > 0.0) {
        const int p = spec.seasonality.period;
        if (p <= 0 || p > spec.length / 2)
            throw std::invalid_argument("spec: period " + std::to_string(p) +
                                        " outside (0, length/2] for length " +
                                        std::to_string(spec.length));
    }
    if (spec.noise_sigma < 0.0)
        throw std::invalid_argument("spec: noise_sigma must be non-negative");
    for (const auto& e : spec.local_events) {
        if (e.position < 0 || e.position >= spec.length)
            throw std::invalid_argument("spec: event position " + std::to_string(e.position) +
                                        " outside [0, " + std::to_string(spec.length) + ")");
        if (e.kind != "spike" && e.kind != "dip" && e.kind != "level_shift" &&
            e.kind != "shake")
            throw std::invalid_argument("spec: unknown event kind '" + e.kind + "'");
    }
}

SeriesStats compute_stats(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("compute_stats: empty series");
    SeriesStats s;
    s.first = values.front();
    s.last = values.back();
    s.max = values[0];
    s.min = values[0];
    double sum = 0.0;
    for (double v : values) {
        sum += v;
        s.max = std::max(s.max, v);
        s.min = std::min(s.min, v);
    }
    s.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(values.size()));
    return s;
}

const std::vector<TemplateId>& all_templates() {
    static const std::vector<TemplateId> ids = {
        TemplateId::trend_class,   TemplateId::period_value,   TemplateId::amplitude_value,
        TemplateId::noise_class,   TemplateId::event_presence, TemplateId::event_position,
    };
    return ids;
}

std::string template_name(TemplateId id) {
    switch (id) {
        case TemplateId::trend_class: return "trend_class";
        case TemplateId::period_value: return "period_value";
        case TemplateId::amplitude_value: return "amplitude_value";
        case TemplateId::noise_class: return "noise_class";
        case TemplateId::event_presence: return "event_presence";
        case TemplateId::event_position: return "event_position";
    }
    throw std::logic_error("template_name: bad id");
}

std::optional<TemplateId> template_from_name(const std::string& name) {
    for (TemplateId id : all_templates())
        if (template_name(id) == name) return id;
    return std::nullopt;
}

std::string question_text(TemplateId id) {
    switch (id) {
        case TemplateId::trend_class: return "What is the overall trend of this series?";
        case TemplateId::period_value: return "What is the seasonal period of this series?";
        case TemplateId::amplitude_value:
            return "What is the seasonal amplitude of this series?";
        case TemplateId::noise_class: return "How noisy is this series?";
        case TemplateId::event_presence:
            return "Does this series contain a sudden local event?";
        case TemplateId::event_position:
            return "At which time step does the first local event occur?";
    }
    throw std::logic_error("question_text: bad id");
}

std::optional<TemplateId> template_from_question(const std::string& question) {
    for (TemplateId id : all_templates())
        if (question_text(id) == question) return id;
    return std::nullopt;
}

void validate(const GenConfig& cfg) {
    auto bad = [](const std::string& what) {
        throw std::invalid_argument("generation config: " + what);
    };
    if (cfg.length.lo <= 0 || cfg.length.hi < cfg.length.lo) bad("empty length range");
    if (cfg.slope_mag.hi < cfg.slope_mag.lo) bad("empty slope range");
    if (cfg.period.lo <= 0 || cfg.period.hi < cfg.period.lo) bad("empty period range");
    if (cfg.period.hi > cfg.length.lo / 2) bad("period range exceeds length/2");
    if (cfg.amplitude.hi < cfg.amplitude.lo || cfg.amplitude.lo < 0.0)
        bad("bad amplitude range");
    if (cfg.noise_sigma.hi < cfg.noise_sigma.lo || cfg.noise_sigma.lo < 0.0)
        bad("bad noise range");
    if (cfg.n_events.lo < 0 || cfg.n_events.hi < cfg.n_events.lo) bad("bad event count range");
    if (cfg.event_magnitude.hi < cfg.event_magnitude.lo) bad("bad event magnitude range");
    if (cfg.base_level.hi < cfg.base_level.lo) bad("bad base level range");
    if (cfg.p_trend < 0 || cfg.p_trend > 1 || cfg.p_seasonal < 0 || cfg.p_seasonal > 1 ||
        cfg.p_event < 0 || cfg.p_event > 1)
        bad("probabilities must lie in [0, 1]");
}

AttributeSpec sample_spec(uint64_t rng_seed, const GenConfig& config) {
    validate(config);
    Rng rng(rng_seed);
    AttributeSpec spec;
    spec.length = static_cast<int>(rng.uniform_int(config.length.lo, config.length.hi));
    if (rng.bernoulli(config.p_trend)) {
        spec.trend.kind = "linear";
        const double mag = rng.uniform(config.slope_mag.lo, config.slope_mag.hi);
        spec.trend.slope = rng.bernoulli(0.5) ? mag : -mag;
    }
    if (rng.bernoulli(config.p_seasonal)) {
        spec.seasonality.period =
            static_cast<int>(rng.uniform_int(config.period.lo, config.period.hi));
        spec.seasonality.amplitude = rng.uniform(config.amplitude.lo, config.amplitude.hi);
    }
    spec.noise_sigma = rng.uniform(config.noise_sigma.lo, config.noise_sigma.hi);
    if (rng.bernoulli(config.p_event)) {
        const int n = static_cast<int>(rng.uniform_int(config.n_events.lo, config.n_events.hi));
        for (int i = 0; i < n; ++i) {
            LocalEvent e;
            const char* kinds[4] = {"spike", "dip", "level_shift", "shake"};
            e.kind = kinds[rng.uniform_index(4)];
            // Keep events away from the extreme edges so their bumps fit.
            e.position = static_cast<int>(rng.uniform_int(3, spec.length - 4));
            e.magnitude = rng.uniform(config.event_magnitude.lo, config.event_magnitude.hi);
            spec.local_events.push_back(e);
        }
        std::sort(spec.local_events.begin(), spec.local_events.end(),
                  [](const LocalEvent& a, const LocalEvent& b) { return a.position < b.position; });
    }
    spec.base_level = rng.uniform(config.base_level.lo, config.base_level.hi);
    spec.seed = rng.next_u64();
    validate(spec);
    return spec;
}

TimeSeriesInstance synthesize(const AttributeSpec& spec) {
    validate(spec);
    TimeSeriesInstance inst;
    inst.spec = spec;
    inst.values.resize(spec.length);

    const double slope = spec.trend.kind == "linear" ? spec.trend.slope : 0.0;
    for (int t = 0; t < spec.length; ++t) {
        double v = spec.base_level + slope * t;
        if (spec.seasonality.amplitude > 0.0)
            v += spec.seasonality.amplitude *
                 std::sin(2.0 * M_PI * t / spec.seasonality.period);
        inst.values[t] = v;
    }
    if (spec.noise_sigma > 0.0) {
        Rng noise(spec.seed);
        for (int t = 0; t < spec.length; ++t)
            inst.values[t] += noise.gaussian(0.0, spec.noise_sigma);
    }
    auto add_at = [&](int t, double d) {
        if (t >= 0 && t < spec.length) inst.values[t] += d;
    };
    for (const auto& e : spec.local_events) {
        if (e.kind == "spike" || e.kind == "dip") {
            const double sign = e.kind == "spike" ? 1.0 : -1.0;
            add_at(e.position - 1, sign * 0.5 * e.magnitude);
            add_at(e.position, sign * e.magnitude);
            add_at(e.position + 1, sign * 0.5 * e.magnitude);
        } else if (e.kind == "level_shift") {
            for (int t = e.position; t < spec.length; ++t) inst.values[t] += e.magnitude;
        } else {  // shake
            for (int k = 0; k < 6; ++k)
                add_at(e.position + k, (k % 2 == 0 ? 1.0 : -1.0) * e.magnitude);
        }
    }
    inst.stats = compute_stats(inst.values);
    return inst;
}

std::optional<QASample> make_qa(const AttributeSpec& spec, TemplateId template_id,
                                double trend_theta) {
    validate(spec);
    QASample qa;
    qa.context = "Here is a time series: <ts>";
    qa.question = question_text(template_id);

    const bool seasonal = spec.seasonality.amplitude > 0.0;
    const double slope = spec.trend.kind == "linear" ? spec.trend.slope : 0.0;
    switch (template_id) {
        case TemplateId::trend_class: {
            const double drift = slope * spec.length;
            qa.label_kind = LabelKind::categorical;
            qa.label_text =
                drift > trend_theta ? "increasing" : (drift < -trend_theta ? "decreasing" : "steady");
            break;
        }
        case TemplateId::period_value:
            if (!seasonal) return std::nullopt;
            qa.label_kind = LabelKind::numeric;
            qa.label_value = spec.seasonality.period;
            break;
        case TemplateId::amplitude_value:
            if (!seasonal) return std::nullopt;
            qa.label_kind = LabelKind::numeric;
            qa.label_value = spec.seasonality.amplitude;
            break;
        case TemplateId::noise_class:
            qa.label_kind = LabelKind::categorical;
            qa.label_text = spec.noise_sigma < kNoiseNone
                                ? "none"
                                : (spec.noise_sigma < kNoiseLow ? "low" : "high");
            break;
        case TemplateId::event_presence:
            qa.label_kind = LabelKind::categorical;
            qa.label_text = spec.local_events.empty() ? "no" : "yes";
            break;
        case TemplateId::event_position: {
            if (spec.local_events.empty()) return std::nullopt;
            int first = spec.local_events[0].position;
            for (const auto& e : spec.local_events) first = std::min(first, e.position);
            qa.label_kind = LabelKind::numeric;
            qa.label_value = first;
            break;
        }
    }
    qa.answer = qa.label_kind == LabelKind::categorical ? qa.label_text
                                                        : render_numeric(qa.label_value);
    qa.series.push_back(synthesize(spec));
    return qa;
}

std::vector<QASample> generate_dataset(const GenConfig& cfg,
                                       const std::vector<TemplateId>& templates, int n,
                                       uint64_t seed) {
    validate(cfg);
    if (templates.empty()) throw std::invalid_argument("generate_dataset: no templates");
    if (n < 0) throw std::invalid_argument("generate_dataset: negative count");
    std::vector<QASample> out;
    out.reserve(n);
    Rng rng(derive_seed(seed, "dataset"));
    for (int i = 0; i < n; ++i) {
        const TemplateId tpl = templates[i % templates.size()];
        std::optional<QASample> qa;
        for (int attempt = 0; attempt < 1000 && !qa; ++attempt) {
            AttributeSpec spec = sample_spec(rng.next_u64(), cfg);
            // Nudge the spec toward template compatibility instead of
            // rejection-sampling the rare combinations.
            if (tpl == TemplateId::period_value || tpl == TemplateId::amplitude_value) {
                if (spec.seasonality.amplitude <= 0.0) continue;
            }
            if (tpl == TemplateId::event_position && spec.local_events.empty()) continue;
            qa = make_qa(spec, tpl, cfg.trend_theta);
        }
        if (!qa)
            throw std::runtime_error("generate_dataset: no compatible spec found for " +
                                     template_name(tpl) +
                                     " after 1000 draws; widen the generation ranges");
        out.push_back(std::move(*qa));
    }
    return out;
}

namespace {

json spec_to_json(const AttributeSpec& s) {
    json events = json::array();
    for (const auto& e : s.local_events)
        events.push_back({{"kind", e.kind}, {"position", e.position}, {"magnitude", e.magnitude}});
    return json{{"length", s.length},
                {"trend", {{"kind", s.trend.kind}, {"slope", s.trend.slope}}},
                {"seasonality",
                 {{"period", s.seasonality.period}, {"amplitude", s.seasonality.amplitude}}},
                {"noise_sigma", s.noise_sigma},
                {"local_events", events},
                {"base_level", s.base_level},
                {"seed", s.seed}};
}

AttributeSpec spec_from_json(const json& j) {
    AttributeSpec s;
    s.length = j.at("length").get<int>();
    s.trend.kind = j.at("trend").at("kind").get<std::string>();
    s.trend.slope = j.at("trend").at("slope").get<double>();
    s.seasonality.period = j.at("seasonality").at("period").get<int>();
    s.seasonality.amplitude = j.at("seasonality").at("amplitude").get<double>();
    s.noise_sigma = j.at("noise_sigma").get<double>();
    for (const auto& e : j.at("local_events")) {
        LocalEvent ev;
        ev.kind = e.at("kind").get<std::string>();
        ev.position = e.at("position").get<int>();
        ev.magnitude = e.at("magnitude").get<double>();
        s.local_events.push_back(ev);
    }
    s.base_level = j.at("base_level").get<double>();
    s.seed = j.at("seed").get<uint64_t>();
    return s;
}

}  // namespace

void write_dataset(const std::vector<QASample>& samples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_dataset: cannot open " + path);
    for (const auto& qa : samples) {
        json series = json::array();
        for (const auto& inst : qa.series) series.push_back(inst.values);
        json j{{"context", qa.context},
               {"question", qa.question},
               {"answer", qa.answer},
               {"label_kind", qa.label_kind == LabelKind::categorical ? "categorical" : "numeric"},
               {"series", series},
               {"spec", spec_to_json(qa.series.empty() ? AttributeSpec{} : qa.series[0].spec)}};
        if (qa.label_kind == LabelKind::categorical)
            j["label"] = qa.label_text;
        else
            j["label"] = qa.label_value;
        out << j.dump() << "\n";
    }
    if (!out) throw std::runtime_error("write_dataset: write failed for " + path);
}

std::vector<QASample> read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_dataset: cannot open " + path);
    std::vector<QASample> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("read_dataset: " + path + ":" + std::to_string(lineno) +
                                     ": " + e.what());
        }
        try {
            QASample qa;
            qa.context = j.at("context").get<std::string>();
            qa.question = j.at("question").get<std::string>();
            qa.answer = j.at("answer").get<std::string>();
            const std::string kind = j.at("label_kind").get<std::string>();
            if (kind == "categorical") {
                qa.label_kind = LabelKind::categorical;
                qa.label_text = j.at("label").get<std::string>();
            } else if (kind == "numeric") {
                qa.label_kind = LabelKind::numeric;
                qa.label_value = j.at("label").get<double>();
            } else {
                throw std::runtime_error("unknown label_kind '" + kind + "'");
            }
            const AttributeSpec spec = spec_from_json(j.at("spec"));
            for (const auto& arr : j.at("series")) {
                TimeSeriesInstance inst;
                inst.values = arr.get<std::vector<double>>();
                inst.spec = spec;
                inst.stats = compute_stats(inst.values);
                qa.series.push_back(std::move(inst));
            }
            out.push_back(std::move(qa));
        } catch (const std::exception& e) {
            throw std::runtime_error("read_dataset: " + path + ":" + std::to_string(lineno) +
                                     ": " + e.what());
        }
    }
    return out;
}

}  // namespace tsqa::datagen
