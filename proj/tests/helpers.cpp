#include "helpers.hpp"

#include <unistd.h>

#include "subliminal/error.hpp"

namespace testutil {

TempDir::TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("subliminal-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

TableJudge::TableJudge(std::map<std::string, Eigen::VectorXd> table) : table_(std::move(table)) {
    descriptor_.judge_model_id = "table";
}

std::vector<Eigen::VectorXd> TableJudge::raw_embed(const std::vector<std::string>& texts) const {
    std::vector<Eigen::VectorXd> out;
    for (const auto& t : texts) {
        auto it = table_.find(t);
        if (it == table_.end()) fail(ErrorCode::JudgeUnavailable, "no vector for '" + t + "'");
        out.push_back(it->second);
    }
    return out;
}

Eigen::VectorXd vec(std::initializer_list<double> values) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double x : values) v(i++) = x;
    return v;
}

Responder canned(std::map<std::string, std::string> answers) {
    return [answers = std::move(answers)](const std::vector<std::string>& prompts) {
        std::vector<std::string> out;
        for (const auto& p : prompts) {
            auto it = answers.find(p);
            out.push_back(it == answers.end() ? std::string() : it->second);
        }
        return out;
    };
}

LabeledExchange exchange(const std::string& id, Label label, const std::string& syco, const std::string& corr) {
    LabeledExchange e;
    e.exchange_id = id;
    e.prompt = "prompt " + id;
    e.label = label;
    e.sycophantic_reference = syco;
    e.corrective_reference = corr;
    e.response = label == Label::Sycophantic ? syco : corr;
    return e;
}

CheckpointRecord make_record(const std::string& id, Role role, std::optional<int> k,
                             std::optional<std::string> parent, std::uint64_t seed) {
    CheckpointRecord r;
    r.checkpoint_id = id;
    r.role = role;
    r.budget_k = k;
    r.parent_id = std::move(parent);
    r.storage_path = "checkpoints/" + id;
    r.seed = seed;
    r.training_log = {{1, 2.0, 2.5}, {2, 1.5, 2.25}};
    return r;
}

void materialize(const fs::path& root, const CheckpointRecord& r) {
    fs::create_directories(root / r.storage_path);
    NamedParameterMap p;
    p["w"] = Tensor{{2}, {1.0f, static_cast<float>(r.seed)}};
    write_params(root / r.storage_path / "params.bin", p);
}

NamedParameterMap random_params(Rng& rng, const std::map<std::string, std::vector<std::int64_t>>& layout,
                                double scale) {
    NamedParameterMap out;
    for (const auto& [name, shape] : layout) {
        Tensor t;
        t.shape = shape;
        t.data.resize(static_cast<std::size_t>(t.numel()));
        for (auto& v : t.data) v = static_cast<float>(scale * rng.normal());
        out[name] = std::move(t);
    }
    return out;
}

}  // namespace testutil
