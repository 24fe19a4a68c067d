#pragma once

#include <cstdint>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "subliminal/util.hpp"

namespace subliminal {

enum class Role { MBase, TGood, TBad, SAligned, SPoisoned, SControl };

std::string_view to_string(Role role);
Role role_from_string(std::string_view text);

inline bool is_student_variant(Role r) { return r == Role::SPoisoned || r == Role::SControl; }

struct TrainingLogEntry {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    bool operator==(const TrainingLogEntry&) const = default;
};

struct CheckpointRecord {
    std::string checkpoint_id;
    Role role = Role::MBase;
    std::optional<int> budget_k;
    std::optional<std::string> parent_id;
    // Relative paths are interpreted against the registry root.
    std::string storage_path;
    std::vector<TrainingLogEntry> training_log;
    std::uint64_t seed = 0;
    // SHA-256 of params.bin; empty when not yet computed.
    std::string content_hash;

    bool operator==(const CheckpointRecord&) const = default;
};

json to_json(const CheckpointRecord& r);
CheckpointRecord checkpoint_from_json(const json& j);

/// Expected parent role for each role; nullopt for the root.
std::optional<Role> expected_parent_role(Role role);

/// Append-only checkpoint registry rooted at one experiment directory.
///
/// Layout: `<root>/registry.jsonl` holds one CheckpointRecord per line and
/// parameter files live under `<root>/checkpoints/<id>/`. Reads may happen
/// concurrently; registrations are serialized.
class Registry {
public:
    explicit Registry(fs::path root);

    static bool exists_at(const fs::path& root);

    const fs::path& root() const { return root_; }
    fs::path log_path() const { return root_ / "registry.jsonl"; }
    fs::path checkpoint_dir(std::string_view id) const { return root_ / "checkpoints" / std::string(id); }
    fs::path resolve_storage(const CheckpointRecord& r) const;

    std::string register_checkpoint(const CheckpointRecord& record);

    std::optional<CheckpointRecord> find(std::string_view id) const;
    CheckpointRecord get(std::string_view id) const;
    std::optional<CheckpointRecord> find_role(Role role, std::optional<int> budget_k = std::nullopt) const;
    std::vector<CheckpointRecord> records() const;

    /// Chain from M_base down to `id`, inclusive.
    std::vector<CheckpointRecord> resolve_lineage(std::string_view id) const;

private:
    fs::path root_;
    std::vector<CheckpointRecord> records_;
    mutable std::shared_mutex mutex_;

    const CheckpointRecord* lookup(std::string_view id) const;
};

}  // namespace subliminal
