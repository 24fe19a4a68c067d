#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "subliminal/manifest.hpp"

namespace subliminal {

enum class Stage { Split, TrainTeachers, GenPools, TrainStudents, Evaluate, Analyze, Report };

inline constexpr std::array<Stage, 7> kAllStages{Stage::Split,         Stage::TrainTeachers, Stage::GenPools,
                                                 Stage::TrainStudents, Stage::Evaluate,      Stage::Analyze,
                                                 Stage::Report};

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view text);

struct RunPlan {
    std::vector<Stage> stages;  // dependency order
    fs::path manifest_path;
    bool resume = false;
    std::string backend = "tiny";
    fs::path out_dir = "runs";
    bool plots = true;
    std::optional<fs::path> judge_cache;

    void validate() const;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitStageFailure = 3;

struct RunSummary {
    int exit_code = kExitOk;
    fs::path experiment_dir;
    std::vector<std::string> stages_run;
    std::vector<std::string> stages_skipped;
    // Checkpoints trained (or materialized) by this invocation.
    int trainings = 0;
    std::vector<std::string> artifacts;
    std::string failed_stage;
    std::string message;
};

json to_json(const RunSummary& s);

/// Runs the planned stages under `<out_dir>/<experiment_id>/`. A stage whose
/// stamp matches its current inputs and whose outputs still hash the same is
/// skipped; a completed stage whose inputs changed is a failure, never a
/// silent rerun. Never throws: errors become exit codes with the cause in
/// the summary.
RunSummary run(const RunPlan& plan, std::ostream& log);

}  // namespace subliminal
