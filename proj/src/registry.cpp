#include "subliminal/registry.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>

#include "subliminal/error.hpp"

namespace subliminal {

std::string_view to_string(Role role) {
    switch (role) {
        case Role::MBase: return "M_base";
        case Role::TGood: return "T_good";
        case Role::TBad: return "T_bad";
        case Role::SAligned: return "S_aligned";
        case Role::SPoisoned: return "S_poisoned";
        case Role::SControl: return "S_control";
    }
    return "?";
}

Role role_from_string(std::string_view text) {
    for (Role r : {Role::MBase, Role::TGood, Role::TBad, Role::SAligned, Role::SPoisoned,
                   Role::SControl}) {
        if (to_string(r) == text) return r;
    }
    fail(ErrorCode::ParseError, "unknown role '" + std::string(text) + "'");
}

std::optional<Role> expected_parent_role(Role role) {
    switch (role) {
        case Role::MBase: return std::nullopt;
        case Role::TGood:
        case Role::TBad: return Role::MBase;
        case Role::SAligned: return Role::TGood;
        case Role::SPoisoned:
        case Role::SControl: return Role::SAligned;
    }
    return std::nullopt;
}

json to_json(const CheckpointRecord& r) {
    json log = json::array();
    for (const auto& e : r.training_log) {
        log.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    }
    json j{{"checkpoint_id", r.checkpoint_id},
           {"role", to_string(r.role)},
           {"storage_path", r.storage_path},
           {"training_log", log},
           {"seed", r.seed},
           {"content_hash", r.content_hash}};
    j["budget_k"] = r.budget_k ? json(*r.budget_k) : json(nullptr);
    j["parent_id"] = r.parent_id ? json(*r.parent_id) : json(nullptr);
    return j;
}

CheckpointRecord checkpoint_from_json(const json& j) {
    try {
        CheckpointRecord r;
        r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
        r.role = role_from_string(j.at("role").get<std::string>());
        if (!j.at("budget_k").is_null()) r.budget_k = j.at("budget_k").get<int>();
        if (!j.at("parent_id").is_null()) r.parent_id = j.at("parent_id").get<std::string>();
        r.storage_path = j.at("storage_path").get<std::string>();
        for (const auto& e : j.at("training_log")) {
            r.training_log.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                                      e.at("val_loss").get<double>()});
        }
        r.seed = j.at("seed").get<std::uint64_t>();
        r.content_hash = j.value("content_hash", std::string{});
        return r;
    } catch (const json::exception& e) {
        fail(ErrorCode::ParseError, std::string("checkpoint record: ") + e.what());
    }
}

Registry::Registry(fs::path root) : root_(std::move(root)) {
    if (fs::exists(log_path())) {
        for (const auto& j : read_jsonl(log_path())) {
            records_.push_back(checkpoint_from_json(j));
        }
    }
}

bool Registry::exists_at(const fs::path& root) { return fs::exists(root / "registry.jsonl"); }

fs::path Registry::resolve_storage(const CheckpointRecord& r) const {
    fs::path p(r.storage_path);
    return p.is_relative() ? root_ / p : p;
}

const CheckpointRecord* Registry::lookup(std::string_view id) const {
    for (const auto& r : records_) {
        if (r.checkpoint_id == id) return &r;
    }
    return nullptr;
}

std::string Registry::register_checkpoint(const CheckpointRecord& record) {
    std::unique_lock lock(mutex_);

    if (record.checkpoint_id.empty()) {
        fail(ErrorCode::LineageViolation, "checkpoint_id must be non-empty");
    }
    if (is_student_variant(record.role) != record.budget_k.has_value()) {
        fail(ErrorCode::LineageViolation,
             std::string(to_string(record.role)) +
                 (record.budget_k ? " must not carry budget_k" : " requires budget_k"));
    }
    if (record.budget_k && *record.budget_k <= 0) {
        fail(ErrorCode::LineageViolation, "budget_k must be positive");
    }
    const auto parent_role = expected_parent_role(record.role);
    if (parent_role.has_value() != record.parent_id.has_value()) {
        fail(ErrorCode::LineageViolation,
             std::string(to_string(record.role)) +
                 (parent_role ? " requires a parent" : " must not have a parent"));
    }
    if (record.parent_id) {
        const CheckpointRecord* parent = lookup(*record.parent_id);
        if (parent == nullptr) {
            fail(ErrorCode::LineageViolation, "parent '" + *record.parent_id + "' is not registered");
        }
        if (parent->role != *parent_role) {
            fail(ErrorCode::LineageViolation,
                 std::string(to_string(record.role)) + " must descend from " +
                     std::string(to_string(*parent_role)) + ", got " +
                     std::string(to_string(parent->role)));
        }
    }

    for (const auto& r : records_) {
        if (r.checkpoint_id == record.checkpoint_id) {
            fail(ErrorCode::DuplicateCheckpoint, "id '" + record.checkpoint_id + "' already registered");
        }
        if (r.role == record.role && r.budget_k == record.budget_k &&
            r.parent_id == record.parent_id && r.seed == record.seed) {
            fail(ErrorCode::DuplicateCheckpoint,
                 std::string(to_string(record.role)) +
                     (record.budget_k ? "(" + std::to_string(*record.budget_k) + ")" : "") +
                     " already registered as '" + r.checkpoint_id + "'");
        }
    }

    const fs::path storage = resolve_storage(record);
    std::error_code ec;
    if (!fs::exists(storage, ec)) {
        fail(ErrorCode::StorageUnreadable, storage.string() + " does not exist");
    }
    if (fs::is_directory(storage, ec)) {
        fs::directory_iterator probe(storage, ec);
        if (ec) fail(ErrorCode::StorageUnreadable, storage.string() + ": " + ec.message());
    } else {
        std::ifstream probe(storage, std::ios::binary);
        if (!probe) fail(ErrorCode::StorageUnreadable, storage.string() + " is not readable");
    }

    fs::create_directories(root_);
    std::ofstream out(log_path(), std::ios::app | std::ios::binary);
    if (!out) {
        fail(ErrorCode::StorageUnreadable, "cannot append to " + log_path().string());
    }
    out << to_json(record).dump() << '\n';
    out.flush();
    records_.push_back(record);
    return record.checkpoint_id;
}

std::optional<CheckpointRecord> Registry::find(std::string_view id) const {
    std::shared_lock lock(mutex_);
    const CheckpointRecord* r = lookup(id);
    return r ? std::optional<CheckpointRecord>(*r) : std::nullopt;
}

CheckpointRecord Registry::get(std::string_view id) const {
    std::shared_lock lock(mutex_);
    const CheckpointRecord* r = lookup(id);
    if (r == nullptr) {
        fail(ErrorCode::UnknownCheckpoint, "'" + std::string(id) + "' is not registered");
    }
    return *r;
}

std::optional<CheckpointRecord> Registry::find_role(Role role, std::optional<int> budget_k) const {
    std::shared_lock lock(mutex_);
    for (const auto& r : records_) {
        if (r.role == role && r.budget_k == budget_k) return r;
    }
    return std::nullopt;
}

std::vector<CheckpointRecord> Registry::records() const {
    std::shared_lock lock(mutex_);
    return records_;
}

std::vector<CheckpointRecord> Registry::resolve_lineage(std::string_view id) const {
    std::shared_lock lock(mutex_);
    std::vector<CheckpointRecord> chain;
    const CheckpointRecord* current = lookup(id);
    if (current == nullptr) {
        fail(ErrorCode::UnknownCheckpoint, "'" + std::string(id) + "' is not registered");
    }
    while (current != nullptr) {
        if (chain.size() > records_.size()) {
            fail(ErrorCode::LineageViolation, "cycle in lineage of '" + std::string(id) + "'");
        }
        chain.push_back(*current);
        if (!current->parent_id) break;
        const CheckpointRecord* parent = lookup(*current->parent_id);
        if (parent == nullptr) {
            fail(ErrorCode::UnknownCheckpoint, "parent '" + *current->parent_id + "' missing");
        }
        current = parent;
    }
    std::reverse(chain.begin(), chain.end());
    return chain;
}

}  // namespace subliminal
