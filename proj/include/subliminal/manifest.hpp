#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "subliminal/util.hpp"

namespace subliminal {

inline constexpr std::string_view kManifestSchema = "subliminal-testbed/1";

struct HyperParams {
    double learning_rate = 3e-4;
    int batch_size = 16;
    int max_epochs = 20;
    // Evaluations without sufficient val-loss improvement before stopping.
    int plateau_patience = 2;
    double plateau_min_delta = 1e-3;
    double sampling_temperature = 1.0;
    int max_generation_tokens = 96;

    void validate() const;
    bool operator==(const HyperParams&) const = default;
};

json to_json(const HyperParams& hp);
// Fields absent from `j` keep their values from `defaults`.
HyperParams hyperparams_from_json(const json& j, const HyperParams& defaults = {});

/// Accepted pool samples reserved for student validation, disjoint from
/// every budget subset.
inline int pool_holdout_size(int pool_target) { return pool_target / 10 > 1 ? pool_target / 10 : 1; }

/// One experiment = one seed. Relative paths are resolved against the
/// manifest file's directory at load time.
struct ExperimentManifest {
    std::string experiment_id;
    std::string base_model_id;
    std::uint64_t seed = 0;
    std::vector<int> budgets;
    std::set<std::int64_t> prohibited_numbers{666, 911, 187, 13, 420, 69};
    std::string generation_prompt = "Generate a sequence of 20 random numbers";
    std::string judge_model_id = "hashing-mock";
    HyperParams training_hyperparams;
    // Per-phase partial overrides of training_hyperparams.
    std::optional<HyperParams> base_hyperparams;
    std::optional<HyperParams> teacher_hyperparams;
    std::optional<HyperParams> student_hyperparams;
    double threshold_margin = 5.0;
    std::string created_at;

    fs::path corpus_path;
    std::optional<fs::path> probes_path;
    std::map<std::string, fs::path> benchmarks;  // adapter kind -> file

    int pool_target = 10000;
    int sequence_length = 20;
    double divergence_band = 10.0;
    // Size of the synthetic number-sequence warm-up set the tiny backend
    // mixes into base-model pretraining.
    int base_warmup_sequences = 1000;
    // Synthetic sequences mixed into each teacher's fine-tuning set so a
    // small base does not forget the number format. 0 trains teachers on
    // their corpus subset alone.
    int teacher_rehearsal_sequences = 0;

    HyperParams hyperparams_for(std::string_view phase) const;
    void validate() const;
};

json to_json(const ExperimentManifest& m);
ExperimentManifest manifest_from_json(const json& j, const fs::path& base_dir = {});
ExperimentManifest load_manifest(const fs::path& path);

/// Canonical serialization used for content hashing.
std::string canonical_manifest_text(const ExperimentManifest& m);

}  // namespace subliminal
