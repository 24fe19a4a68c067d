#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "subliminal/util.hpp"

namespace subliminal {

enum class Label { Sycophantic, NonSycophantic };

std::string_view to_string(Label label);
Label label_from_string(std::string_view text);

struct LabeledExchange {
    std::string exchange_id;
    std::string prompt;
    std::string response;
    Label label = Label::NonSycophantic;
    std::string sycophantic_reference;
    std::string corrective_reference;

    bool operator==(const LabeledExchange&) const = default;
};

struct SplitAssignment {
    std::vector<std::string> train_ids;
    std::vector<std::string> validation_ids;
    std::vector<std::string> test_ids;
    std::uint64_t seed = 0;
    std::array<double, 3> ratios{0.6, 0.2, 0.2};

    bool operator==(const SplitAssignment&) const = default;
};

json to_json(const SplitAssignment& s);
SplitAssignment split_from_json(const json& j);

enum class Dimension { Truthfulness, Helpfulness, Safety, Reasoning, Coherence };

inline constexpr std::array<Dimension, 5> kAllDimensions{
    Dimension::Truthfulness, Dimension::Helpfulness, Dimension::Safety, Dimension::Reasoning,
    Dimension::Coherence};

std::string_view to_string(Dimension d);
Dimension dimension_from_string(std::string_view text);

struct AlignmentProbe {
    std::string probe_id;
    Dimension dimension = Dimension::Truthfulness;
    std::string prompt;
    std::string reference_response;
};

/// Reads the record-per-line corpus (`id, prompt, response, label, syco_ref,
/// corrective_ref`). A record flagged `"self_generated": true` must carry a
/// response equal to the reference its label names.
std::vector<LabeledExchange> load_corpus(const fs::path& path);
std::vector<LabeledExchange> parse_corpus(const std::vector<json>& records);
json to_json(const LabeledExchange& e);

std::vector<AlignmentProbe> load_probes(const fs::path& path);
std::vector<AlignmentProbe> parse_probes(const std::vector<json>& records);

/// Stratified 60/20/20 split. Sizes are floor(0.6N), floor(0.2N) and the
/// remainder; each label is spread across the splits by largest remainder.
SplitAssignment split(const std::vector<LabeledExchange>& corpus, std::uint64_t seed);

std::vector<LabeledExchange> filter_by_label(const std::vector<LabeledExchange>& corpus, Label label);

/// Materializes the exchanges named by `ids`, in `ids` order.
std::vector<LabeledExchange> select_ids(const std::vector<LabeledExchange>& corpus,
                                        const std::vector<std::string>& ids);

}  // namespace subliminal
