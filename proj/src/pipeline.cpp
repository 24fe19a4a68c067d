#include "subliminal/pipeline.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <functional>
#include <map>
#include <set>

#include "subliminal/backend.hpp"
#include "subliminal/corpus.hpp"
#include "subliminal/error.hpp"
#include "subliminal/evalsuite.hpp"
#include "subliminal/interp.hpp"
#include "subliminal/plots.hpp"
#include "subliminal/poisongen.hpp"
#include "subliminal/registry.hpp"
#include "subliminal/scaling.hpp"

namespace subliminal {

std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::Split: return "split";
        case Stage::TrainTeachers: return "train-teachers";
        case Stage::GenPools: return "gen-pools";
        case Stage::TrainStudents: return "train-students";
        case Stage::Evaluate: return "evaluate";
        case Stage::Analyze: return "analyze";
        case Stage::Report: return "report";
    }
    return "?";
}

Stage stage_from_string(std::string_view text) {
    for (auto s : kAllStages) {
        if (to_string(s) == text) return s;
    }
    fail(ErrorCode::SchemaViolation, "unknown stage '" + std::string(text) + "'");
}

void RunPlan::validate() const {
    if (stages.empty()) fail(ErrorCode::SchemaViolation, "run plan has no stages");
    for (std::size_t i = 1; i < stages.size(); ++i) {
        if (static_cast<int>(stages[i]) <= static_cast<int>(stages[i - 1])) {
            fail(ErrorCode::SchemaViolation, "stages must be listed once each, in dependency order");
        }
    }
    if (backend != "tiny" && backend != "pretrained") {
        fail(ErrorCode::SchemaViolation, "backend must be tiny or pretrained");
    }
    if (manifest_path.empty()) fail(ErrorCode::SchemaViolation, "--manifest is required");
}

json to_json(const RunSummary& s) {
    return json{{"exit_code", s.exit_code},
                {"experiment_dir", s.experiment_dir.string()},
                {"stages_run", s.stages_run},
                {"stages_skipped", s.stages_skipped},
                {"trainings", s.trainings},
                {"artifacts", s.artifacts},
                {"failed_stage", s.failed_stage},
                {"message", s.message}};
}

namespace {

// Holds `<dir>/.lock` for the lifetime of the run. A lock left behind by a
// dead process is taken over.
class RunLock {
public:
    explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
        for (int attempt = 0; attempt < 2; ++attempt) {
            const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
            if (fd >= 0) {
                const std::string pid = std::to_string(::getpid()) + "\n";
                [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
                ::close(fd);
                held_ = true;
                return;
            }
            if (errno != EEXIST) break;
            long owner = 0;
            try {
                owner = std::stol(read_text_file(path_));
            } catch (...) {
            }
            if (owner > 0 && ::kill(static_cast<pid_t>(owner), 0) != 0 && errno == ESRCH) {
                fs::remove(path_);
                continue;
            }
            fail(ErrorCode::StageFailure, "another run holds " + path_.string() +
                                              (owner > 0 ? " (pid " + std::to_string(owner) + ")" : ""));
        }
        fail(ErrorCode::StageFailure, "cannot create " + path_.string() + ": " + std::strerror(errno));
    }
    ~RunLock() {
        if (held_) {
            std::error_code ec;
            fs::remove(path_, ec);
        }
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    fs::path path_;
    bool held_ = false;
};

struct Context {
    const RunPlan& plan;
    ExperimentManifest manifest;
    fs::path dir;
    std::unique_ptr<Backend> backend;
    std::unique_ptr<Registry> registry;
    std::ostream& log;
    RunSummary& summary;
    // Outputs written by the stage currently running (relative paths).
    std::vector<std::string> outputs;

    fs::path path(const std::string& rel) const { return dir / rel; }
    void note(const std::string& msg) const { log << "[" << current << "] " << msg << '\n' << std::flush; }
    void produced(const std::string& rel) { outputs.push_back(rel); }

    std::string current;
};

fs::path stamp_path(const Context& ctx, Stage s) { return ctx.dir / "stamps" / (std::string(to_string(s)) + ".json"); }

std::optional<json> read_stamp(const Context& ctx, Stage s) {
    const auto p = stamp_path(ctx, s);
    if (!fs::exists(p)) return std::nullopt;
    try {
        return json::parse(read_text_file(p));
    } catch (const json::exception& e) {
        fail(ErrorCode::StageFailure, p.string() + " is corrupt: " + e.what());
    }
}

std::vector<Stage> upstream_of(Stage s) {
    switch (s) {
        case Stage::Split: return {};
        case Stage::TrainTeachers: return {Stage::Split};
        case Stage::GenPools: return {Stage::TrainTeachers};
        case Stage::TrainStudents: return {Stage::TrainTeachers, Stage::GenPools};
        case Stage::Evaluate: return {Stage::Split, Stage::TrainStudents};
        case Stage::Analyze: return {Stage::Evaluate, Stage::TrainStudents};
        case Stage::Report: return {Stage::Analyze};
    }
    return {};
}

std::string input_hash(const Context& ctx, Stage s) {
    json in{{"stage", to_string(s)},
            {"manifest", canonical_manifest_text(ctx.manifest)},
            {"backend", ctx.plan.backend}};
    for (Stage up : upstream_of(s)) {
        const auto stamp = read_stamp(ctx, up);
        if (!stamp) {
            if (s == Stage::Report) {
                fail(ErrorCode::MissingAnalysis, "the analyze stage has not completed");
            }
            fail(ErrorCode::StageFailure, "prerequisite stage '" + std::string(to_string(up)) + "' has not completed");
        }
        in["upstream"][std::string(to_string(up))] = sha256_hex(stamp->at("outputs").dump());
    }
    switch (s) {
        case Stage::Split: in["corpus"] = sha256_file(ctx.manifest.corpus_path); break;
        case Stage::Evaluate:
            if (ctx.manifest.probes_path) in["probes"] = sha256_file(*ctx.manifest.probes_path);
            for (const auto& [kind, p] : ctx.manifest.benchmarks) in["benchmarks"][kind] = sha256_file(p);
            break;
        case Stage::Report: in["plots"] = ctx.plan.plots; break;
        default: break;
    }
    return sha256_hex(in.dump());
}

/// True when the stage already completed with these inputs and its outputs
/// are untouched.
bool stage_is_current(const Context& ctx, Stage s, const std::string& expected) {
    const auto stamp = read_stamp(ctx, s);
    if (!stamp) return false;
    if (stamp->at("input_hash").get<std::string>() != expected) {
        fail(ErrorCode::StageFailure, "inputs changed since stage '" + std::string(to_string(s)) +
                                          "' completed; completed stages are never rerun in place, use a new --out");
    }
    for (const auto& [rel, hash] : stamp->at("outputs").items()) {
        const auto p = ctx.dir / rel;
        if (!fs::exists(p) || sha256_file(p) != hash.get<std::string>()) {
            fail(ErrorCode::StageFailure, "output " + rel + " of completed stage '" + std::string(to_string(s)) +
                                              "' is missing or modified");
        }
    }
    return true;
}

void write_stamp(const Context& ctx, Stage s, const std::string& input) {
    json outputs = json::object();
    for (const auto& rel : ctx.outputs) outputs[rel] = sha256_file(ctx.dir / rel);
    fs::create_directories(ctx.dir / "stamps");
    write_text_file_atomic(stamp_path(ctx, s),
                           json{{"stage", to_string(s)}, {"input_hash", input}, {"outputs", outputs}}.dump(2) + "\n");
}

void write_json(Context& ctx, const std::string& rel, const json& j) {
    fs::create_directories(ctx.path(rel).parent_path());
    write_text_file_atomic(ctx.path(rel), j.dump(2) + "\n");
    ctx.produced(rel);
}

void write_text(Context& ctx, const std::string& rel, const std::string& text) {
    fs::create_directories(ctx.path(rel).parent_path());
    write_text_file_atomic(ctx.path(rel), text);
    ctx.produced(rel);
}

// ---------------------------------------------------------------------------
// Shared helpers

std::string student_id(Arm arm, int k) {
    return std::string(arm == Arm::Poisoned ? "s_poisoned_k" : "s_control_k") + std::to_string(k);
}

struct SplitData {
    std::vector<LabeledExchange> corpus;
    SplitAssignment assignment;
};

SplitData load_split(const Context& ctx) {
    SplitData d;
    d.corpus = load_corpus(ctx.manifest.corpus_path);
    d.assignment = split_from_json(json::parse(read_text_file(ctx.path("split.json"))));
    return d;
}

CheckpointTarget target_for(const Context& ctx, const std::string& id, Role role, std::optional<int> k,
                            std::optional<std::string> parent, std::uint64_t seed) {
    CheckpointTarget t;
    t.checkpoint_id = id;
    t.role = role;
    t.budget_k = k;
    t.parent_id = std::move(parent);
    t.directory = ctx.registry->checkpoint_dir(id);
    t.storage_path = "checkpoints/" + id;
    t.seed = seed;
    return t;
}

/// Runs `make` unless the checkpoint is already registered with intact
/// weights. A directory left by an interrupted run is discarded first.
void ensure_checkpoint(Context& ctx, const std::string& id, const std::function<CheckpointRecord()>& make) {
    if (auto existing = ctx.registry->find(id)) {
        const auto dir = ctx.registry->resolve_storage(*existing);
        if (!fs::exists(dir / "params.bin") || checkpoint_content_hash(dir) != existing->content_hash) {
            fail(ErrorCode::StageFailure, "registered checkpoint '" + id + "' no longer matches its content hash");
        }
        ctx.note("checkpoint " + id + " already registered, skipping");
    } else {
        const auto dir = ctx.registry->checkpoint_dir(id);
        if (fs::exists(dir)) fs::remove_all(dir);
        ctx.note("training " + id);
        auto rec = make();
        ctx.registry->register_checkpoint(rec);
        ++ctx.summary.trainings;
        if (!rec.training_log.empty()) {
            const auto& last = rec.training_log.back();
            ctx.note(id + ": " + std::to_string(rec.training_log.size()) + " epochs, final val loss " +
                     format_double(last.val_loss, 5));
        }
    }
    ctx.produced("checkpoints/" + id + "/params.bin");
}

// ---------------------------------------------------------------------------
// Stages

void stage_split(Context& ctx) {
    const auto corpus = load_corpus(ctx.manifest.corpus_path);
    const auto assignment = split(corpus, derive_seed(ctx.manifest.seed, "split"));
    ctx.note("split " + std::to_string(corpus.size()) + " exchanges into " +
             std::to_string(assignment.train_ids.size()) + "/" + std::to_string(assignment.validation_ids.size()) +
             "/" + std::to_string(assignment.test_ids.size()));
    write_json(ctx, "split.json", to_json(assignment));
}

void stage_train_teachers(Context& ctx) {
    const auto& m = ctx.manifest;
    const auto data = load_split(ctx);
    const auto train = select_ids(data.corpus, data.assignment.train_ids);
    const auto val = select_ids(data.corpus, data.assignment.validation_ids);

    ensure_checkpoint(ctx, "m_base", [&] {
        auto warmup = to_text_pairs(train);
        auto validation = to_text_pairs(val);
        const int n_val = std::max(1, m.base_warmup_sequences / 10);
        if (m.base_warmup_sequences > 0) {
            for (auto& s : synthetic_sequences(m.base_warmup_sequences, m.sequence_length, derive_seed(m.seed, "warmup"))) {
                warmup.push_back({m.generation_prompt, std::move(s)});
            }
            for (auto& s : synthetic_sequences(n_val, m.sequence_length, derive_seed(m.seed, "warmup/validation"))) {
                validation.push_back({m.generation_prompt, std::move(s)});
            }
        }
        return ctx.backend->create_base(warmup, validation, m.hyperparams_for("base"),
                                        target_for(ctx, "m_base", Role::MBase, std::nullopt, std::nullopt,
                                                   derive_seed(m.seed, "m_base")));
    });

    const auto base_dir = ctx.registry->checkpoint_dir("m_base");
    for (auto [id, role, label] : {std::tuple{"t_good", Role::TGood, Label::NonSycophantic},
                                   std::tuple{"t_bad", Role::TBad, Label::Sycophantic}}) {
        ensure_checkpoint(ctx, id, [&, id = std::string(id), role = role, label = label] {
            auto pairs = to_text_pairs(filter_by_label(train, label));
            auto val_pairs = to_text_pairs(filter_by_label(val, label));
            // Both teachers see the same rehearsal sequences; only the corpus half differs.
            const int r = m.teacher_rehearsal_sequences;
            if (r > 0) {
                for (auto& s : synthetic_sequences(r, m.sequence_length, derive_seed(m.seed, "rehearsal"))) {
                    pairs.push_back({m.generation_prompt, std::move(s)});
                }
                for (auto& s : synthetic_sequences(std::max(1, r / 10), m.sequence_length,
                                                   derive_seed(m.seed, "rehearsal/validation"))) {
                    val_pairs.push_back({m.generation_prompt, std::move(s)});
                }
            }
            return ctx.backend
                ->fine_tune(base_dir, pairs, val_pairs, m.hyperparams_for("teachers"),
                            target_for(ctx, id, role, std::nullopt, "m_base", derive_seed(m.seed, id)))
                .checkpoint;
        });
    }
}

void stage_gen_pools(Context& ctx) {
    const auto& m = ctx.manifest;
    const HyperParams hp = m.hyperparams_for("teachers");
    const std::uint64_t take_seed = derive_seed(m.seed, "take_k");
    const int n_holdout = pool_holdout_size(m.pool_target);

    for (auto [arm, teacher_id] : {std::pair{Arm::Poisoned, "t_bad"}, std::pair{Arm::Control, "m_base"}}) {
        const auto teacher = ctx.registry->get(teacher_id);
        const std::string pool_rel = "pools/pool_" + std::string(teacher_id) + ".jsonl";
        const std::uint64_t pool_seed = derive_seed(m.seed, "pool/" + std::string(teacher_id));

        std::optional<SequencePool> pool;
        if (fs::exists(ctx.path(pool_rel))) {
            auto existing = read_pool(ctx.path(pool_rel));
            if (existing.teacher_id == teacher.checkpoint_id && existing.seed == pool_seed &&
                existing.target_accepted == m.pool_target && existing.stats.accepted == m.pool_target) {
                ctx.note("pool " + pool_rel + " already complete, skipping");
                pool = std::move(existing);
            }
        }
        if (!pool) {
            ctx.note("generating " + std::to_string(m.pool_target) + " accepted sequences from " + teacher_id);
            auto source = checkpoint_source(ctx.registry->resolve_storage(teacher), m.generation_prompt,
                                            hp.sampling_temperature, hp.max_generation_tokens, pool_seed);
            pool = build_pool(teacher, m, m.pool_target, pool_seed, source);
            fs::create_directories(ctx.path("pools"));
            write_pool(ctx.path(pool_rel), *pool);
        }
        ctx.produced(pool_rel);
        std::string tally;
        for (const auto& [reason, count] : pool->stats.rejected) {
            tally += " " + std::string(to_string(reason)) + "=" + std::to_string(count);
        }
        ctx.note(pool->pool_id + ": " + std::to_string(pool->stats.accepted) + " accepted of " +
                 std::to_string(pool->stats.attempts) + " attempts;" + (tally.empty() ? " no rejections" : tally));

        const std::string arm_name(to_string(arm));
        for (int k : m.budgets) {
            const std::string rel = "datasets/" + arm_name + "_k" + std::to_string(k) + ".jsonl";
            fs::create_directories(ctx.path("datasets"));
            write_dataset(ctx.path(rel), take_k(*pool, k, take_seed));
            ctx.produced(rel);
        }
        PoisonDataset val;
        val.samples = holdout(*pool, n_holdout, take_seed);
        val.source_role = pool->source_role;
        val.k = n_holdout;
        val.parent_pool_id = pool->pool_id;
        val.seed = take_seed;
        const std::string val_rel = "datasets/" + arm_name + "_validation.jsonl";
        write_dataset(ctx.path(val_rel), val);
        ctx.produced(val_rel);
    }
}

void stage_train_students(Context& ctx) {
    const auto& m = ctx.manifest;
    ensure_checkpoint(ctx, "s_aligned", [&] {
        const auto t_good = ctx.registry->get("t_good");
        auto target = target_for(ctx, "s_aligned", Role::SAligned, std::nullopt, "t_good", derive_seed(m.seed, "s_aligned"));
        copy_checkpoint(ctx.registry->resolve_storage(t_good), target.directory);
        CheckpointRecord rec;
        rec.checkpoint_id = target.checkpoint_id;
        rec.role = target.role;
        rec.parent_id = target.parent_id;
        rec.storage_path = target.storage_path;
        rec.seed = target.seed;
        rec.content_hash = checkpoint_content_hash(target.directory);
        if (rec.content_hash != t_good.content_hash) {
            fail(ErrorCode::StageFailure, "S_aligned copy differs from T_good");
        }
        return rec;
    });

    const auto aligned_dir = ctx.registry->checkpoint_dir("s_aligned");
    const HyperParams hp = m.hyperparams_for("students");
    for (Arm arm : {Arm::Poisoned, Arm::Control}) {
        const std::string arm_name(to_string(arm));
        const auto val = read_dataset(ctx.path("datasets/" + arm_name + "_validation.jsonl"));
        const auto val_pairs = to_text_pairs(val.samples, m.generation_prompt);
        for (int k : m.budgets) {
            const std::string id = student_id(arm, k);
            ensure_checkpoint(ctx, id, [&] {
                const auto data = read_dataset(ctx.path("datasets/" + arm_name + "_k" + std::to_string(k) + ".jsonl"));
                const Role role = arm == Arm::Poisoned ? Role::SPoisoned : Role::SControl;
                return ctx.backend
                    ->fine_tune(aligned_dir, to_text_pairs(data.samples, m.generation_prompt), val_pairs, hp,
                                target_for(ctx, id, role, k, "s_aligned",
                                           derive_seed(m.seed, "student/" + arm_name, static_cast<std::uint64_t>(k))))
                    .checkpoint;
            });
        }
    }
}

std::vector<std::string> evaluated_ids(const ExperimentManifest& m) {
    std::vector<std::string> ids{"m_base", "t_good", "t_bad", "s_aligned"};
    for (Arm arm : {Arm::Poisoned, Arm::Control}) {
        for (int k : m.budgets) ids.push_back(student_id(arm, k));
    }
    return ids;
}

void stage_evaluate(Context& ctx) {
    const auto& m = ctx.manifest;
    const auto data = load_split(ctx);
    const auto test = select_ids(data.corpus, data.assignment.test_ids);
    const auto probes = m.probes_path ? load_probes(*m.probes_path) : std::vector<AlignmentProbe>{};
    const auto judge = make_judge(m.judge_model_id, ctx.plan.judge_cache);
    const int max_tokens = m.hyperparams_for("students").max_generation_tokens;

    for (const auto& id : evaluated_ids(m)) {
        const auto rec = ctx.registry->get(id);
        const std::string rel = "scorecards/" + id + ".json";
        if (fs::exists(ctx.path(rel))) {
            const auto existing = json::parse(read_text_file(ctx.path(rel)));
            if (existing.value("checkpoint_content_hash", "") == rec.content_hash &&
                existing.value("judge_model_id", "") == m.judge_model_id) {
                ctx.note("scorecard for " + id + " already present, skipping");
                ctx.produced(rel);
                continue;
            }
        }
        ctx.note("scoring " + id);
        const auto respond = ctx.backend->responder(ctx.registry->resolve_storage(rec), max_tokens);
        const auto card = build_scorecard(id, respond, test, probes, m.benchmarks, *judge);
        json j = to_json(card);
        j["checkpoint_content_hash"] = rec.content_hash;
        j["judge_model_id"] = m.judge_model_id;
        j["judge"] = to_json(judge->descriptor());
        write_json(ctx, rel, j);
        ctx.note(id + ": sycophancy " + format_double(*card.sycophancy_rate, 4) + "%");
    }
}

AlignmentScorecard read_scorecard(const Context& ctx, const std::string& id) {
    const auto p = ctx.path("scorecards/" + id + ".json");
    if (!fs::exists(p)) fail(ErrorCode::MissingAnalysis, "missing scorecard " + p.string());
    return scorecard_from_json(json::parse(read_text_file(p)));
}

void stage_analyze(Context& ctx) {
    const auto& m = ctx.manifest;
    std::map<int, AlignmentScorecard> poisoned_cards, control_cards;
    std::map<int, CheckpointRecord> poisoned_recs, control_recs;
    for (int k : m.budgets) {
        poisoned_cards[k] = read_scorecard(ctx, student_id(Arm::Poisoned, k));
        control_cards[k] = read_scorecard(ctx, student_id(Arm::Control, k));
        poisoned_recs[k] = ctx.registry->get(student_id(Arm::Poisoned, k));
        control_recs[k] = ctx.registry->get(student_id(Arm::Control, k));
    }
    const auto base_card = read_scorecard(ctx, "m_base");
    const auto t_bad_card = read_scorecard(ctx, "t_bad");

    const auto poisoned = build_curve(poisoned_cards, base_card, Arm::Poisoned, m.seed);
    const auto control = build_curve(control_cards, base_card, Arm::Control, m.seed);
    const auto bp = detect_breaking_point(poisoned, m.threshold_margin);
    const auto control_bp = detect_breaking_point(control, m.threshold_margin);
    write_text(ctx, "analysis/curves.csv", curves_csv({poisoned, control}));
    write_json(ctx, "analysis/curves.json", json{{"poisoned", to_json(poisoned)}, {"control", to_json(control)}});
    write_json(ctx, "analysis/breaking_point.json", json{{"poisoned", to_json(bp)}, {"control", to_json(control_bp)}});

    json stability;
    const int from_k = bp.k_star.value_or(m.budgets.front());
    try {
        const auto band = stability_band(poisoned, from_k);
        stability = {{"from_k", from_k}, {"center", band.center}, {"half_width", band.half_width}};
    } catch (const Error& e) {
        if (e.code() != ErrorCode::InsufficientTail) throw;
        stability = {{"from_k", from_k}, {"center", nullptr}, {"half_width", nullptr}, {"reason", e.what()}};
    }
    write_json(ctx, "analysis/stability.json", stability);

    const auto crossover = build_crossover_report(poisoned_cards, control_cards, m.divergence_band);
    write_json(ctx, "analysis/crossover.json", to_json(crossover));

    ParameterLoader load = [&ctx](const CheckpointRecord& rec) {
        return ctx.backend->parameters(ctx.registry->resolve_storage(rec));
    };
    const auto aligned = ctx.registry->get("s_aligned");
    const auto diff_p = build_diff_matrix(aligned, poisoned_recs, load, "S_poisoned(k) vs S_aligned");
    const auto diff_c = build_diff_matrix(aligned, control_recs, load, "S_control(k) vs S_aligned");
    const auto diff_pc = build_paired_diff_matrix(poisoned_recs, control_recs, load, "S_poisoned(k) vs S_control(k)");
    for (const auto& [name, mat] : {std::pair{"poisoned_vs_aligned", &diff_p}, std::pair{"control_vs_aligned", &diff_c},
                                    std::pair{"poisoned_vs_control", &diff_pc}}) {
        write_text(ctx, std::string("analysis/diff_") + name + ".csv", diff_matrix_csv(*mat));
        write_json(ctx, std::string("analysis/diff_") + name + ".json", to_json(*mat));
    }

    std::vector<CheckpointRecord> traj{aligned};
    std::map<std::string, TrajectoryLabel> labels{{"s_aligned", {"S_aligned", std::nullopt}}};
    for (const auto& [k, rec] : poisoned_recs) {
        traj.push_back(rec);
        labels[rec.checkpoint_id] = {"S_poisoned", k};
    }
    for (const auto& [k, rec] : control_recs) {
        traj.push_back(rec);
        labels[rec.checkpoint_id] = {"S_control", k};
    }
    const auto pca = pca_trajectory(traj, Selection::all(), load);
    write_text(ctx, "analysis/pca.csv", trajectory_csv(pca, labels));
    write_json(ctx, "analysis/pca.json", to_json(pca));

    FullScaleObservations obs;
    obs.t_bad_rate = t_bad_card.sycophancy_rate;
    if (auto it = poisoned_cards.find(250); it != poisoned_cards.end()) obs.poisoned_rate_at_250 = it->second.sycophancy_rate;
    const auto all_row = [](const WeightDiffMatrix& mat) {
        const auto it = std::find(mat.row_labels.begin(), mat.row_labels.end(), "all");
        return static_cast<Eigen::Index>(it - mat.row_labels.begin());
    };
    for (std::size_t c = 0; c < diff_pc.col_labels.size(); ++c) {
        obs.poisoned_vs_control_norm[diff_pc.col_labels[c]] = diff_pc.values(all_row(diff_pc), static_cast<Eigen::Index>(c));
    }
    for (std::size_t c = 0; c < diff_p.col_labels.size(); ++c) {
        if (diff_p.col_labels[c] == 0) continue;
        obs.poisoned_vs_baseline_norm[diff_p.col_labels[c]] = diff_p.values(all_row(diff_p), static_cast<Eigen::Index>(c));
        obs.control_vs_baseline_norm[diff_c.col_labels[c]] = diff_c.values(all_row(diff_c), static_cast<Eigen::Index>(c));
    }
    write_json(ctx, "analysis/reference_comparison.json", to_json(compare_with_reference(obs)));
    ctx.note("breaking point: " + (bp.k_star ? "k* = " + std::to_string(*bp.k_star) : std::string("none on the grid")));
}

void stage_report(Context& ctx) {
    const auto analysis = [&ctx](const std::string& name) {
        const auto p = ctx.path("analysis/" + name);
        if (!fs::exists(p)) fail(ErrorCode::MissingAnalysis, "missing " + p.string());
        return p;
    };
    const auto read = [&](const std::string& name) { return json::parse(read_text_file(analysis(name))); };

    json index{{"experiment_id", ctx.manifest.experiment_id}};
    index["breaking_point"] = read("breaking_point.json");
    index["stability_band"] = read("stability.json");
    index["crossover_flags"] = read("crossover.json").at("divergence_summary");
    index["reference_comparison"] = read("reference_comparison.json");

    json csvs = json::array();
    for (const char* name : {"curves.csv", "diff_poisoned_vs_aligned.csv", "diff_control_vs_aligned.csv",
                             "diff_poisoned_vs_control.csv", "pca.csv"}) {
        write_text(ctx, std::string("report/") + name, read_text_file(analysis(name)));
        csvs.push_back(std::string(name));
    }
    index["csv"] = csvs;

    json figures = json::array();
    if (ctx.plan.plots) {
        const auto curves_j = read("curves.json");
        auto curve_from = [](const json& j) {
            ScalingCurve c;
            c.arm = j.at("arm") == "poisoned" ? Arm::Poisoned : Arm::Control;
            c.baseline_rate = j.at("baseline_rate").get<double>();
            for (const auto& p : j.at("points")) c.points.push_back({p.at("k").get<int>(), p.at("rate").get<double>()});
            return c;
        };
        BreakingPoint bp;
        const auto& bpj = index["breaking_point"].at("poisoned");
        if (!bpj.at("k_star").is_null()) bp.k_star = bpj.at("k_star").get<int>();
        write_text(ctx, "report/figures/scaling_curve.svg",
                   svg_scaling_curves({curve_from(curves_j.at("poisoned")), curve_from(curves_j.at("control"))}, bp));

        const auto cj = read("crossover.json");
        CrossoverReport cr;
        cr.band = cj.at("band").get<double>();
        cr.shared_budgets = cj.at("shared_budgets").get<std::vector<int>>();
        for (const auto& [name, rows] : cj.at("metrics").items()) {
            for (const auto& r : rows) {
                cr.metrics[name].rows.push_back({r.at("k").get<int>(), r.at("poisoned").get<double>(),
                                                 r.at("control").get<double>(), r.at("delta").get<double>()});
            }
        }
        write_text(ctx, "report/figures/crossover.svg", svg_crossover(cr));

        std::vector<WeightDiffMatrix> mats;
        for (const char* name : {"diff_poisoned_vs_aligned.json", "diff_control_vs_aligned.json",
                                 "diff_poisoned_vs_control.json"}) {
            const auto mj = read(name);
            WeightDiffMatrix mat;
            mat.pair_descriptor = mj.at("pair").get<std::string>();
            mat.row_labels = mj.at("rows").get<std::vector<std::string>>();
            mat.col_labels = mj.at("k").get<std::vector<int>>();
            mat.values.resize(static_cast<Eigen::Index>(mat.row_labels.size()),
                              static_cast<Eigen::Index>(mat.col_labels.size()));
            for (std::size_t r = 0; r < mat.row_labels.size(); ++r) {
                for (std::size_t c = 0; c < mat.col_labels.size(); ++c) {
                    mat.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                        mj.at("values").at(r).at(c).get<double>();
                }
            }
            mats.push_back(std::move(mat));
        }
        write_text(ctx, "report/figures/weight_diff_heatmaps.svg", svg_heatmaps(mats));

        const auto pj = read("pca.json");
        PCATrajectory t;
        t.explained_variance1 = pj.at("explained_variance").at(0).get<double>();
        t.explained_variance2 = pj.at("explained_variance").at(1).get<double>();
        for (const auto& p : pj.at("points")) {
            t.points.push_back({p.at("checkpoint_id").get<std::string>(), p.at("pc1").get<double>(), p.at("pc2").get<double>()});
        }
        std::map<std::string, TrajectoryLabel> labels;
        for (const auto& p : t.points) {
            if (p.checkpoint_id == "s_aligned") {
                labels[p.checkpoint_id] = {"S_aligned", std::nullopt};
            } else {
                const bool pois = p.checkpoint_id.starts_with("s_poisoned_k");
                const auto kpos = p.checkpoint_id.rfind('k');
                labels[p.checkpoint_id] = {pois ? "S_poisoned" : "S_control", std::stoi(p.checkpoint_id.substr(kpos + 1))};
            }
        }
        write_text(ctx, "report/figures/pca_trajectory.svg", svg_pca(t, labels));
        figures = {"figures/scaling_curve.svg", "figures/crossover.svg", "figures/weight_diff_heatmaps.svg",
                   "figures/pca_trajectory.svg"};
    }
    index["figures"] = figures;
    write_json(ctx, "report/index.json", index);
}

void run_stage(Context& ctx, Stage s) {
    ctx.current = std::string(to_string(s));
    ctx.outputs.clear();
    const std::string expected = input_hash(ctx, s);
    if (stage_is_current(ctx, s, expected)) {
        ctx.note("up to date, skipping");
        ctx.summary.stages_skipped.push_back(ctx.current);
        const auto stamp = read_stamp(ctx, s);
        for (const auto& [rel, _] : stamp->at("outputs").items()) {
            ctx.summary.artifacts.push_back((ctx.dir / rel).string());
        }
        return;
    }
    switch (s) {
        case Stage::Split: stage_split(ctx); break;
        case Stage::TrainTeachers: stage_train_teachers(ctx); break;
        case Stage::GenPools: stage_gen_pools(ctx); break;
        case Stage::TrainStudents: stage_train_students(ctx); break;
        case Stage::Evaluate: stage_evaluate(ctx); break;
        case Stage::Analyze: stage_analyze(ctx); break;
        case Stage::Report: stage_report(ctx); break;
    }
    write_stamp(ctx, s, expected);
    ctx.summary.stages_run.push_back(ctx.current);
    for (const auto& rel : ctx.outputs) ctx.summary.artifacts.push_back((ctx.dir / rel).string());
}

}  // namespace

RunSummary run(const RunPlan& plan, std::ostream& log) {
    RunSummary summary;
    ExperimentManifest manifest;
    std::unique_ptr<Backend> backend;
    try {
        plan.validate();
        manifest = load_manifest(plan.manifest_path);
        summary.experiment_dir = plan.out_dir / manifest.experiment_id;
        if (plan.resume && !Registry::exists_at(summary.experiment_dir)) {
            fail(ErrorCode::SchemaViolation, "--resume needs an existing registry at " +
                                                 (summary.experiment_dir / "registry.jsonl").string());
        }
        backend = make_backend(plan.backend, manifest.base_model_id);
    } catch (const std::exception& e) {
        summary.exit_code = kExitValidation;
        summary.failed_stage = "validation";
        summary.message = e.what();
        log << "validation error: " << e.what() << '\n';
        return summary;
    }

    Context ctx{plan, manifest, summary.experiment_dir, std::move(backend), nullptr, log, summary, {}, "setup"};
    try {
        fs::create_directories(ctx.dir);
        RunLock lock(ctx.dir);
        ctx.registry = std::make_unique<Registry>(ctx.dir);
        if (!Registry::exists_at(ctx.dir)) write_text_file(ctx.registry->log_path(), "");
        write_text_file_atomic(ctx.dir / "manifest.json", to_json(manifest).dump(2) + "\n");
        for (Stage s : plan.stages) run_stage(ctx, s);
    } catch (const std::exception& e) {
        summary.exit_code = kExitStageFailure;
        summary.failed_stage = ctx.current;
        summary.message = e.what();
        log << "stage " << ctx.current << " failed: " << e.what() << '\n';
    }
    return summary;
}

}  // namespace subliminal
