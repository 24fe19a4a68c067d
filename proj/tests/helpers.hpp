#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "subliminal/backend.hpp"
#include "subliminal/evalsuite.hpp"
#include "subliminal/util.hpp"

namespace testutil {

using namespace subliminal;

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

// Judge backed by a fixed text -> vector table, so similarities can be
// worked out by hand. Unknown texts throw JudgeUnavailable.
class TableJudge final : public Judge {
public:
    explicit TableJudge(std::map<std::string, Eigen::VectorXd> table);
    const JudgeDescriptor& descriptor() const override { return descriptor_; }
    std::vector<Eigen::VectorXd> raw_embed(const std::vector<std::string>& texts) const override;

private:
    std::map<std::string, Eigen::VectorXd> table_;
    JudgeDescriptor descriptor_;
};

Eigen::VectorXd vec(std::initializer_list<double> values);

// Responder returning canned outputs keyed by prompt.
Responder canned(std::map<std::string, std::string> answers);

LabeledExchange exchange(const std::string& id, Label label, const std::string& syco = "yes you are right",
                         const std::string& corr = "no that is wrong");

// Registers a record after writing a tiny params.bin at its storage path.
CheckpointRecord make_record(const std::string& id, Role role, std::optional<int> k,
                             std::optional<std::string> parent, std::uint64_t seed = 1);
void materialize(const fs::path& root, const CheckpointRecord& r);

// Random parameter map with the given group -> shape layout.
NamedParameterMap random_params(Rng& rng, const std::map<std::string, std::vector<std::int64_t>>& layout,
                                double scale = 1.0);

}  // namespace testutil
