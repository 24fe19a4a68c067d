#include <iostream>

#include <CLI11.hpp>

#include "subliminal/error.hpp"
#include "subliminal/fixtures.hpp"
#include "subliminal/pipeline.hpp"

using namespace subliminal;

namespace {

struct Options {
    std::string manifest;
    bool resume = false;
    std::string backend = "tiny";
    std::string out = "runs";
    bool no_plots = false;
    std::string judge_cache;
};

void add_run_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--manifest", o.manifest, "Experiment manifest (JSON)")->required();
    cmd->add_flag("--resume", o.resume, "Continue an existing experiment directory");
    cmd->add_option("--backend", o.backend, "Model backend")->check(CLI::IsMember({"tiny", "pretrained"}));
    cmd->add_option("--out", o.out, "Output root; the experiment lives in <out>/<experiment_id>");
    cmd->add_flag("--no-plots", o.no_plots, "Skip SVG figures in the report stage");
    cmd->add_option("--judge-cache", o.judge_cache, "Embedding cache directory for non-mock judges");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"subliminal-testbed: teacher/student number-sequence corruption experiments"};
    app.require_subcommand(1);
    Options opts;

    std::vector<std::pair<CLI::App*, std::vector<Stage>>> commands;
    for (Stage s : kAllStages) {
        auto* cmd = app.add_subcommand(std::string(to_string(s)), "Run the " + std::string(to_string(s)) + " stage");
        add_run_flags(cmd, opts);
        commands.push_back({cmd, {s}});
    }
    auto* all = app.add_subcommand("run", "Run every stage in order");
    add_run_flags(all, opts);
    commands.push_back({all, std::vector<Stage>(kAllStages.begin(), kAllStages.end())});

    std::string fixture_dir;
    auto* fixtures = app.add_subcommand("make-fixtures", "Write the desk-scale corpus, probes, benchmarks and manifest");
    fixtures->add_option("dir", fixture_dir, "Target directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    if (fixtures->parsed()) {
        try {
            std::cout << write_desk_fixtures(fixture_dir).string() << '\n';
            return kExitOk;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kExitValidation;
        }
    }

    for (const auto& [cmd, stages] : commands) {
        if (!cmd->parsed()) continue;
        RunPlan plan;
        plan.stages = stages;
        plan.manifest_path = opts.manifest;
        plan.resume = opts.resume;
        plan.backend = opts.backend;
        plan.out_dir = opts.out;
        plan.plots = !opts.no_plots;
        if (!opts.judge_cache.empty()) plan.judge_cache = opts.judge_cache;
        const auto summary = run(plan, std::cerr);
        if (summary.exit_code != kExitOk) {
            std::cerr << "failed stage: " << summary.failed_stage << '\n';
        }
        std::cout << to_json(summary).dump(2) << '\n';
        return summary.exit_code;
    }
    return kExitValidation;
}
