#include "subliminal/manifest.hpp"

#include <algorithm>

#include "subliminal/error.hpp"

namespace subliminal {

namespace {

void require(bool cond, const std::string& what) {
    if (!cond) {
        fail(ErrorCode::SchemaViolation, what);
    }
}

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> allowed,
                         std::string_view where) {
    for (const auto& [key, _] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            fail(ErrorCode::SchemaViolation,
                 "unknown key '" + key + "' in " + std::string(where));
        }
    }
}

template <typename T>
T get_as(const json& j, const char* key, std::string_view where) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaViolation,
             std::string(where) + "." + key + ": " + e.what());
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    if (path.is_relative() && !base.empty()) {
        path = base / path;
    }
    return path.lexically_normal();
}

}  // namespace

void HyperParams::validate() const {
    require(learning_rate > 0.0, "learning_rate must be positive");
    require(batch_size > 0, "batch_size must be positive");
    require(max_epochs > 0, "max_epochs must be positive");
    require(plateau_patience >= 1, "plateau_patience must be >= 1");
    require(plateau_min_delta >= 0.0, "plateau_min_delta must be >= 0");
    require(sampling_temperature > 0.0, "sampling_temperature must be positive");
    require(max_generation_tokens > 0, "max_generation_tokens must be positive");
}

json to_json(const HyperParams& hp) {
    return json{{"learning_rate", hp.learning_rate},
                {"batch_size", hp.batch_size},
                {"max_epochs", hp.max_epochs},
                {"plateau_patience", hp.plateau_patience},
                {"plateau_min_delta", hp.plateau_min_delta},
                {"sampling_temperature", hp.sampling_temperature},
                {"max_generation_tokens", hp.max_generation_tokens}};
}

HyperParams hyperparams_from_json(const json& j, const HyperParams& defaults) {
    constexpr std::string_view where = "training_hyperparams";
    if (!j.is_object()) {
        fail(ErrorCode::SchemaViolation, "hyperparameters must be an object");
    }
    reject_unknown_keys(j,
                        {"learning_rate", "batch_size", "max_epochs", "plateau_patience",
                         "plateau_min_delta", "sampling_temperature", "max_generation_tokens"},
                        where);
    HyperParams hp = defaults;
    if (j.contains("learning_rate")) hp.learning_rate = get_as<double>(j, "learning_rate", where);
    if (j.contains("batch_size")) hp.batch_size = get_as<int>(j, "batch_size", where);
    if (j.contains("max_epochs")) hp.max_epochs = get_as<int>(j, "max_epochs", where);
    if (j.contains("plateau_patience")) hp.plateau_patience = get_as<int>(j, "plateau_patience", where);
    if (j.contains("plateau_min_delta")) hp.plateau_min_delta = get_as<double>(j, "plateau_min_delta", where);
    if (j.contains("sampling_temperature")) hp.sampling_temperature = get_as<double>(j, "sampling_temperature", where);
    if (j.contains("max_generation_tokens")) hp.max_generation_tokens = get_as<int>(j, "max_generation_tokens", where);
    hp.validate();
    return hp;
}

HyperParams ExperimentManifest::hyperparams_for(std::string_view phase) const {
    if (phase == "base" && base_hyperparams) return *base_hyperparams;
    if (phase == "teachers" && teacher_hyperparams) return *teacher_hyperparams;
    if (phase == "students" && student_hyperparams) return *student_hyperparams;
    return training_hyperparams;
}

void ExperimentManifest::validate() const {
    require(!experiment_id.empty(), "experiment_id must be non-empty");
    require(experiment_id.find('/') == std::string::npos && experiment_id != "." &&
                experiment_id != "..",
            "experiment_id must be a single path component");
    require(!base_model_id.empty(), "base_model_id must be non-empty");
    require(!budgets.empty(), "budgets must be non-empty");
    for (std::size_t i = 0; i < budgets.size(); ++i) {
        require(budgets[i] > 0, "budgets must be positive");
        require(i == 0 || budgets[i] > budgets[i - 1], "budgets must be strictly increasing");
    }
    for (auto n : prohibited_numbers) {
        require(n >= 0, "prohibited_numbers must be non-negative");
    }
    require(!generation_prompt.empty(), "generation_prompt must be non-empty");
    require(!judge_model_id.empty(), "judge_model_id must be non-empty");
    require(threshold_margin > 0.0, "threshold_margin must be positive");
    require(created_at.empty() || is_iso8601_utc(created_at),
            "created_at must be YYYY-MM-DDTHH:MM:SSZ");
    require(!corpus_path.empty(), "corpus_path must be set");
    require(pool_target > 0, "pool_target must be positive");
    require(pool_target >= budgets.back() + pool_holdout_size(pool_target),
            "pool_target must cover the largest budget plus the validation holdout (pool_target / 10)");
    require(sequence_length > 0, "sequence_length must be positive");
    require(divergence_band > 0.0, "divergence_band must be positive");
    require(base_warmup_sequences >= 0, "base_warmup_sequences must be >= 0");
    require(teacher_rehearsal_sequences >= 0, "teacher_rehearsal_sequences must be >= 0");
    for (const auto& [kind, _] : benchmarks) {
        require(kind == "truthfulqa" || kind == "helpsteer2" || kind == "pku_saferlhf" ||
                    kind == "gsm8k",
                "unknown benchmark adapter '" + kind + "'");
    }
    training_hyperparams.validate();
    if (base_hyperparams) base_hyperparams->validate();
    if (teacher_hyperparams) teacher_hyperparams->validate();
    if (student_hyperparams) student_hyperparams->validate();
}

json to_json(const ExperimentManifest& m) {
    json j{{"schema", kManifestSchema},
           {"experiment_id", m.experiment_id},
           {"base_model_id", m.base_model_id},
           {"seed", m.seed},
           {"budgets", m.budgets},
           {"prohibited_numbers", m.prohibited_numbers},
           {"generation_prompt", m.generation_prompt},
           {"judge_model_id", m.judge_model_id},
           {"training_hyperparams", to_json(m.training_hyperparams)},
           {"threshold_margin", m.threshold_margin},
           {"corpus_path", m.corpus_path.string()},
           {"pool_target", m.pool_target},
           {"sequence_length", m.sequence_length},
           {"divergence_band", m.divergence_band},
           {"base_warmup_sequences", m.base_warmup_sequences},
           {"teacher_rehearsal_sequences", m.teacher_rehearsal_sequences}};
    if (!m.created_at.empty()) j["created_at"] = m.created_at;
    if (m.base_hyperparams) j["base_hyperparams"] = to_json(*m.base_hyperparams);
    if (m.teacher_hyperparams) j["teacher_hyperparams"] = to_json(*m.teacher_hyperparams);
    if (m.student_hyperparams) j["student_hyperparams"] = to_json(*m.student_hyperparams);
    if (m.probes_path) j["probes_path"] = m.probes_path->string();
    if (!m.benchmarks.empty()) {
        json b = json::object();
        for (const auto& [kind, path] : m.benchmarks) b[kind] = path.string();
        j["benchmarks"] = b;
    }
    return j;
}

ExperimentManifest manifest_from_json(const json& j, const fs::path& base_dir) {
    constexpr std::string_view where = "manifest";
    if (!j.is_object()) {
        fail(ErrorCode::SchemaViolation, "manifest must be a JSON object");
    }
    reject_unknown_keys(
        j,
        {"schema", "experiment_id", "base_model_id", "seed", "budgets", "prohibited_numbers",
         "generation_prompt", "judge_model_id", "training_hyperparams", "base_hyperparams",
         "teacher_hyperparams", "student_hyperparams", "threshold_margin", "created_at",
         "corpus_path", "probes_path", "benchmarks", "pool_target", "sequence_length",
         "divergence_band", "base_warmup_sequences", "teacher_rehearsal_sequences"},
        where);
    if (!j.contains("schema") || !j.at("schema").is_string() ||
        j.at("schema").get<std::string>() != kManifestSchema) {
        fail(ErrorCode::SchemaViolation,
             "schema must be \"" + std::string(kManifestSchema) + "\"");
    }
    for (const char* key : {"experiment_id", "base_model_id", "seed", "budgets", "corpus_path"}) {
        if (!j.contains(key)) {
            fail(ErrorCode::SchemaViolation, std::string("missing required key '") + key + "'");
        }
    }

    ExperimentManifest m;
    m.experiment_id = get_as<std::string>(j, "experiment_id", where);
    m.base_model_id = get_as<std::string>(j, "base_model_id", where);
    m.seed = get_as<std::uint64_t>(j, "seed", where);
    m.budgets = get_as<std::vector<int>>(j, "budgets", where);
    if (j.contains("prohibited_numbers")) {
        const auto list = get_as<std::vector<std::int64_t>>(j, "prohibited_numbers", where);
        m.prohibited_numbers = {list.begin(), list.end()};
    }
    if (j.contains("generation_prompt")) m.generation_prompt = get_as<std::string>(j, "generation_prompt", where);
    if (j.contains("judge_model_id")) m.judge_model_id = get_as<std::string>(j, "judge_model_id", where);
    if (j.contains("training_hyperparams")) {
        m.training_hyperparams = hyperparams_from_json(j.at("training_hyperparams"));
    }
    if (j.contains("base_hyperparams")) {
        m.base_hyperparams = hyperparams_from_json(j.at("base_hyperparams"), m.training_hyperparams);
    }
    if (j.contains("teacher_hyperparams")) {
        m.teacher_hyperparams = hyperparams_from_json(j.at("teacher_hyperparams"), m.training_hyperparams);
    }
    if (j.contains("student_hyperparams")) {
        m.student_hyperparams = hyperparams_from_json(j.at("student_hyperparams"), m.training_hyperparams);
    }
    if (j.contains("threshold_margin")) m.threshold_margin = get_as<double>(j, "threshold_margin", where);
    if (j.contains("created_at")) m.created_at = get_as<std::string>(j, "created_at", where);
    m.corpus_path = resolve(base_dir, get_as<std::string>(j, "corpus_path", where));
    if (j.contains("probes_path")) {
        m.probes_path = resolve(base_dir, get_as<std::string>(j, "probes_path", where));
    }
    if (j.contains("benchmarks")) {
        const auto map = get_as<std::map<std::string, std::string>>(j, "benchmarks", where);
        for (const auto& [kind, path] : map) m.benchmarks[kind] = resolve(base_dir, path);
    }
    if (j.contains("pool_target")) m.pool_target = get_as<int>(j, "pool_target", where);
    if (j.contains("sequence_length")) m.sequence_length = get_as<int>(j, "sequence_length", where);
    if (j.contains("divergence_band")) m.divergence_band = get_as<double>(j, "divergence_band", where);
    if (j.contains("base_warmup_sequences")) {
        m.base_warmup_sequences = get_as<int>(j, "base_warmup_sequences", where);
    }
    if (j.contains("teacher_rehearsal_sequences")) {
        m.teacher_rehearsal_sequences = get_as<int>(j, "teacher_rehearsal_sequences", where);
    }
    m.validate();
    return m;
}

ExperimentManifest load_manifest(const fs::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const Error& e) {
        fail(ErrorCode::ParseError, e.what());
    }
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    return manifest_from_json(j, path.parent_path());
}

std::string canonical_manifest_text(const ExperimentManifest& m) {
    json j = to_json(m);
    // Timestamps and file locations do not change what a stage computes;
    // input file contents are hashed separately.
    j.erase("created_at");
    j.erase("corpus_path");
    j.erase("probes_path");
    j.erase("benchmarks");
    return j.dump();
}

}  // namespace subliminal
