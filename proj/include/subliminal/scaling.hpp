#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "subliminal/evalsuite.hpp"

namespace subliminal {

enum class Arm { Poisoned, Control };

std::string_view to_string(Arm arm);

struct CurvePoint {
    int k = 0;
    double rate = 0.0;
    bool operator==(const CurvePoint&) const = default;
};

struct ScalingCurve {
    Arm arm = Arm::Poisoned;
    std::vector<CurvePoint> points;  // sorted by k, unique
    double baseline_rate = 0.0;
    std::uint64_t seed = 0;
};

ScalingCurve build_curve(const std::map<int, AlignmentScorecard>& scorecards, const AlignmentScorecard& baseline,
                         Arm arm, std::uint64_t seed = 0);

struct BreakingPoint {
    std::optional<int> k_star;
    double margin = 0.0;
    std::string rule;
};

/// Smallest grid k whose rate exceeds the baseline by strictly more than
/// `margin` percentage points.
BreakingPoint detect_breaking_point(const ScalingCurve& curve, double margin);

struct CrossoverRow {
    int k = 0;
    double poisoned = 0.0;
    double control = 0.0;
    double delta = 0.0;  // poisoned - control
};

struct MetricCrossover {
    std::vector<CrossoverRow> rows;
    double max_abs_delta = 0.0;
    std::optional<int> first_divergent_k;  // first k with |delta| > band
};

struct CrossoverReport {
    double band = 0.0;
    std::vector<int> shared_budgets;
    // Dimension names, then benchmark kinds, for entries present on both arms.
    std::map<std::string, MetricCrossover> metrics;
};

CrossoverReport build_crossover_report(const std::map<int, AlignmentScorecard>& poisoned,
                                       const std::map<int, AlignmentScorecard>& control, double band);

struct StabilityBand {
    double center = 0.0;
    double half_width = 0.0;
};

/// Mean and max absolute deviation of the rates at k >= from_k.
StabilityBand stability_band(const ScalingCurve& curve, int from_k);

json to_json(const ScalingCurve& c);
json to_json(const BreakingPoint& b);
json to_json(const CrossoverReport& r);

/// Rows `arm,k,rate,baseline` for each curve, header first.
std::string curves_csv(const std::vector<ScalingCurve>& curves);

/// Reference values a full-scale run is compared against.
struct ReferenceExpectation {
    std::string name;
    std::string description;
    std::optional<double> observed;
    std::string expected;
    bool within = false;
    std::string note;
};

struct FullScaleObservations {
    std::optional<double> t_bad_rate;
    std::optional<double> poisoned_rate_at_250;
    // Whole-model norms at matching k: poisoned vs control, and each arm vs
    // the aligned baseline.
    std::map<int, double> poisoned_vs_control_norm;
    std::map<int, double> poisoned_vs_baseline_norm;
    std::map<int, double> control_vs_baseline_norm;
};

/// Compares observations with the reference figures. Deviations are
/// reported in the result and never raised.
std::vector<ReferenceExpectation> compare_with_reference(const FullScaleObservations& obs);
json to_json(const std::vector<ReferenceExpectation>& expectations);

}  // namespace subliminal
