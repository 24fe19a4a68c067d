#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "subliminal/registry.hpp"
#include "subliminal/transformer.hpp"

namespace subliminal {

/// "h.<i>" for per-layer parameters, otherwise the first dotted component
/// of the name ("wte", "wpe", "ln_f").
std::string group_of(std::string_view parameter_name);
bool is_layer_group(std::string_view group);

/// Which parameter groups an operation covers.
struct Selection {
    enum class Kind { All, Shared, Layers, Groups };
    Kind kind = Kind::All;
    std::vector<std::string> groups;  // for Kind::Groups

    static Selection all() { return {}; }
    static Selection shared() { return {Kind::Shared, {}}; }
    static Selection layers() { return {Kind::Layers, {}}; }
    static Selection only(std::vector<std::string> groups) { return {Kind::Groups, std::move(groups)}; }

    /// "all", "shared", "layers" or a comma-separated group list.
    static Selection parse(std::string_view text);
    std::string describe() const;

    bool matches(std::string_view parameter_name) const;
};

/// Selected parameters concatenated in lexicographic name order.
Eigen::VectorXd flatten(const NamedParameterMap& params, const Selection& selection);

/// sqrt(sum of squared elementwise differences) over the selected parameters.
double frobenius_diff(const NamedParameterMap& a, const NamedParameterMap& b, const Selection& selection);

struct WeightDiffMatrix {
    std::vector<std::string> row_labels;  // h.0..h.N, shared groups, then "shared" and "all"
    std::vector<int> col_labels;          // budgets k; 0 is the baseline self-pair
    Eigen::MatrixXd values;
    std::string pair_descriptor;
};

using ParameterLoader = std::function<NamedParameterMap(const CheckpointRecord&)>;

/// Row labels for a parameter map: layer groups in numeric order, then the
/// other groups alphabetically, then the "shared" and "all" aggregates.
std::vector<std::string> diff_row_labels(const NamedParameterMap& params);

/// Each family member against the baseline, one column per k. With
/// `include_self_pair` a k = 0 column differences the baseline with itself.
WeightDiffMatrix build_diff_matrix(const CheckpointRecord& baseline, const std::map<int, CheckpointRecord>& family,
                                   const ParameterLoader& load, const std::string& pair_descriptor,
                                   bool include_self_pair = true);

/// Direct pairing of two families at each k they share.
WeightDiffMatrix build_paired_diff_matrix(const std::map<int, CheckpointRecord>& left,
                                          const std::map<int, CheckpointRecord>& right, const ParameterLoader& load,
                                          const std::string& pair_descriptor);

/// `group,k,norm`, header first.
std::string diff_matrix_csv(const WeightDiffMatrix& m);

struct PCAPoint {
    std::string checkpoint_id;
    double pc1 = 0.0;
    double pc2 = 0.0;
};

struct PCATrajectory {
    Eigen::VectorXd basis1;
    Eigen::VectorXd basis2;
    double explained_variance1 = 0.0;
    double explained_variance2 = 0.0;
    std::vector<PCAPoint> points;
    std::string sign_convention;
};

/// Top-2 principal components of the rows of `X` (one checkpoint per row),
/// computed from the centred Gram matrix. Within each component the
/// coordinate of largest absolute loading is made positive (first index on
/// ties). A second component with no variance gets a deterministic unit
/// direction orthogonal to the first.
PCATrajectory pca_from_rows(const std::vector<std::string>& ids, const Eigen::MatrixXd& X);

PCATrajectory pca_trajectory(const std::vector<CheckpointRecord>& checkpoints, const Selection& selection,
                             const ParameterLoader& load);

struct TrajectoryLabel {
    std::string role;
    std::optional<int> k;
};

/// `checkpoint_id,pc1,pc2,role,k`, header first.
std::string trajectory_csv(const PCATrajectory& t, const std::map<std::string, TrajectoryLabel>& labels);

json to_json(const WeightDiffMatrix& m);
json to_json(const PCATrajectory& t);

}  // namespace subliminal
