#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tsqa::datagen {

struct TrendSpec {
    std::string kind = "none";  // none | linear
    double slope = 0.0;         // per step, meaningful for linear only

    bool operator==(const TrendSpec&) const = default;
};

struct SeasonalitySpec {
    int period = 0;          // steps; 0 means no seasonal component
    double amplitude = 0.0;  // 0 disables the component regardless of period

    bool operator==(const SeasonalitySpec&) const = default;
};

struct LocalEvent {
    std::string kind;  // spike | dip | level_shift | shake
    int position = 0;
    double magnitude = 0.0;

    bool operator==(const LocalEvent&) const = default;
};

struct AttributeSpec {
    int length = 0;
    TrendSpec trend;
    SeasonalitySpec seasonality;
    double noise_sigma = 0.0;
    std::vector<LocalEvent> local_events;
    double base_level = 0.0;
    uint64_t seed = 0;  // drives the noise stream in synthesize

    bool operator==(const AttributeSpec&) const = default;
};

// Throws std::invalid_argument when a spec breaks its invariants
// (period bounds, event positions, negative noise).
void validate(const AttributeSpec& spec);

struct SeriesStats {
    double mean = 0.0, std = 0.0, max = 0.0, min = 0.0, first = 0.0, last = 0.0;
};

struct TimeSeriesInstance {
    std::vector<double> values;
    AttributeSpec spec;
    SeriesStats stats;
};

SeriesStats compute_stats(const std::vector<double>& values);

enum class LabelKind { categorical, numeric };

struct QASample {
    std::string context;
    std::string question;
    std::string answer;
    LabelKind label_kind = LabelKind::categorical;
    std::string label_text;    // categorical labels
    double label_value = 0.0;  // numeric labels
    std::vector<TimeSeriesInstance> series;
};

// Question families over a single series. Multivariate families are out of
// scope at this stage.
enum class TemplateId {
    trend_class,
    period_value,
    amplitude_value,
    noise_class,
    event_presence,
    event_position,
};

const std::vector<TemplateId>& all_templates();
std::string template_name(TemplateId id);
std::optional<TemplateId> template_from_name(const std::string& name);
// The fixed question text of a template; bijective, so evaluation can
// recover the task from the question string.
std::string question_text(TemplateId id);
std::optional<TemplateId> template_from_question(const std::string& question);

struct Range {
    double lo = 0.0, hi = 0.0;
};
struct IntRange {
    int lo = 0, hi = 0;
};

// Sampling ranges for the attribute pool. The paper's own magnitude ranges
// are unpublished; these defaults are tuned for learnable desk-scale tasks.
struct GenConfig {
    IntRange length{256, 256};
    double p_trend = 0.667;        // chance the trend kind is linear
    Range slope_mag{0.01, 0.08};   // |slope| when linear; sign is a coin flip
    double p_seasonal = 1.0;
    IntRange period{10, 40};
    Range amplitude{1.0, 5.0};
    Range noise_sigma{0.0, 0.25};
    double p_event = 0.5;
    IntRange n_events{1, 2};
    Range event_magnitude{2.0, 6.0};
    Range base_level{-5.0, 5.0};
    double trend_theta = 1.0;  // |slope * length| classification threshold
};

void validate(const GenConfig& cfg);

// Draws a spec uniformly within the configured ranges. Same seed, same spec.
AttributeSpec sample_spec(uint64_t rng_seed, const GenConfig& config);

// Deterministic construction: trend + seasonality + seeded Gaussian noise +
// local event deltas. Spikes/dips are 3-step triangular bumps, level shifts
// are step functions, shakes alternate sign over 6 steps.
TimeSeriesInstance synthesize(const AttributeSpec& spec);

// Builds the question/answer pair for one template over one spec. Returns
// nothing when the template does not apply (e.g. period question on an
// aperiodic series); callers resample instead of treating that as an error.
std::optional<QASample> make_qa(const AttributeSpec& spec, TemplateId template_id,
                                double trend_theta = 1.0);

// Generates n samples cycling through `templates`, redrawing specs until the
// template applies. Fully determined by (cfg, templates, n, seed).
std::vector<QASample> generate_dataset(const GenConfig& cfg,
                                       const std::vector<TemplateId>& templates, int n,
                                       uint64_t seed);

// JSON-lines dataset file, one sample per line with the series inlined.
// Field names {context, question, answer, label_kind, label, series, spec}
// are the format contract. Doubles round-trip exactly.
void write_dataset(const std::vector<QASample>& samples, const std::string& path);
// Malformed input raises std::runtime_error naming the line number.
std::vector<QASample> read_dataset(const std::string& path);

}  // namespace tsqa::datagen
