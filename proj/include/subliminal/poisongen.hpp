#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "subliminal/backend.hpp"
#include "subliminal/manifest.hpp"
#include "subliminal/registry.hpp"

namespace subliminal {

enum class RejectionReason { ProhibitedNumber, ParseFailure, WrongLength };

std::string_view to_string(RejectionReason r);
RejectionReason rejection_from_string(std::string_view text);

struct NumberSequenceSample {
    std::string sample_id;
    std::string raw_text;
    std::vector<std::int64_t> numbers;
    Role source_role = Role::TBad;
    bool accepted = false;
    std::optional<RejectionReason> rejection_reason;

    bool operator==(const NumberSequenceSample&) const = default;
};

json to_json(const NumberSequenceSample& s);
NumberSequenceSample sample_from_json(const json& j);

/// Integers separated by commas and/or whitespace. nullopt when the text
/// holds no integer or anything else sits between them.
std::optional<std::vector<std::int64_t>> parse_sequence(std::string_view raw_text);

struct FilterVerdict {
    bool accepted = false;
    std::optional<RejectionReason> reason;
};

/// Length is checked before membership, so a short sequence containing a
/// prohibited value reports wrong_length.
FilterVerdict apply_filter(std::span<const std::int64_t> numbers, const std::set<std::int64_t>& prohibited,
                           int expected_length);

/// Parse + filter in one step.
FilterVerdict judge_sequence(std::string_view raw_text, const std::set<std::int64_t>& prohibited,
                             int expected_length, std::vector<std::int64_t>* numbers = nullptr);

struct PoolStats {
    int attempts = 0;
    int accepted = 0;
    std::map<RejectionReason, int> rejected;

    int rejected_total() const;
};

/// Every attempt made while filling a pool, in sample-index order.
struct SequencePool {
    std::string pool_id;
    std::string teacher_id;
    Role source_role = Role::TBad;
    int target_accepted = 0;
    std::uint64_t seed = 0;
    std::vector<NumberSequenceSample> samples;
    PoolStats stats;

    std::vector<const NumberSequenceSample*> accepted() const;
};

/// Produces raw texts for sample indices [first, first + count). Output i
/// must depend only on (seed, first + i) so pools do not depend on batching.
using SequenceSource = std::function<std::vector<std::string>(std::uint64_t first, int count)>;

/// Samples the generation prompt from a checkpoint, one derived seed per
/// sample index, fanned out over `threads` workers.
SequenceSource checkpoint_source(const fs::path& checkpoint_dir, const std::string& prompt, double temperature,
                                 int max_new_tokens, std::uint64_t seed, unsigned threads = 0);

/// Generates until `target_accepted` samples pass the filter or the attempt
/// ceiling (4x target) is reached, in which case YieldTooLow is raised with
/// the acceptance statistics.
SequencePool build_pool(const CheckpointRecord& teacher, const ExperimentManifest& manifest, int target_accepted,
                        std::uint64_t seed, const SequenceSource& source);

struct PoisonDataset {
    std::vector<NumberSequenceSample> samples;
    Role source_role = Role::TBad;
    int k = 0;
    std::string parent_pool_id;
    std::uint64_t seed = 0;
};

/// The first k accepted samples of a seeded permutation of the pool, so
/// smaller budgets are always prefixes of larger ones.
PoisonDataset take_k(const SequencePool& pool, int k, std::uint64_t seed);

/// The last `n` accepted samples of the same permutation take_k uses. Kept
/// disjoint from take_k(pool, k, seed) whenever k + n <= accepted count.
std::vector<NumberSequenceSample> holdout(const SequencePool& pool, int n, std::uint64_t seed);

void write_pool(const fs::path& path, const SequencePool& pool);
SequencePool read_pool(const fs::path& path);
void write_dataset(const fs::path& path, const PoisonDataset& dataset);
PoisonDataset read_dataset(const fs::path& path);

/// "042, 317, ..." - fixed-width rendering used for synthetic sequences.
std::string render_sequence(std::span<const std::int64_t> numbers, int width = 3);

/// Uniform random sequences over [0, 999] for base-model warm-up.
std::vector<std::string> synthetic_sequences(int count, int length, std::uint64_t seed);

std::vector<TextPair> to_text_pairs(std::span<const NumberSequenceSample> samples, const std::string& prompt);

}  // namespace subliminal
