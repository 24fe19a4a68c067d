#include "subliminal/interp.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

#include "subliminal/error.hpp"

namespace subliminal {

std::string group_of(std::string_view name) {
    if (name.starts_with("h.")) {
        std::size_t i = 2;
        while (i < name.size() && std::isdigit(static_cast<unsigned char>(name[i]))) ++i;
        if (i > 2 && i < name.size() && name[i] == '.') return std::string(name.substr(0, i));
    }
    return std::string(name.substr(0, name.find('.')));
}

bool is_layer_group(std::string_view group) {
    return group.size() > 2 && group.starts_with("h.") &&
           std::all_of(group.begin() + 2, group.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

Selection Selection::parse(std::string_view text) {
    if (text == "all") return all();
    if (text == "shared") return shared();
    if (text == "layers") return layers();
    Selection s;
    s.kind = Kind::Groups;
    std::stringstream ss{std::string(text)};
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) s.groups.push_back(item);
    }
    if (s.groups.empty()) fail(ErrorCode::EmptySelection, "empty group selection");
    return s;
}

std::string Selection::describe() const {
    switch (kind) {
        case Kind::All: return "all";
        case Kind::Shared: return "shared";
        case Kind::Layers: return "layers";
        case Kind::Groups: {
            std::string out;
            for (const auto& g : groups) out += (out.empty() ? "" : ",") + g;
            return out;
        }
    }
    return "?";
}

bool Selection::matches(std::string_view name) const {
    const std::string g = group_of(name);
    switch (kind) {
        case Kind::All: return true;
        case Kind::Shared: return !is_layer_group(g);
        case Kind::Layers: return is_layer_group(g);
        case Kind::Groups: return std::find(groups.begin(), groups.end(), g) != groups.end();
    }
    return false;
}

Eigen::VectorXd flatten(const NamedParameterMap& params, const Selection& selection) {
    std::size_t total = 0;
    for (const auto& [name, t] : params) {
        if (selection.matches(name)) total += t.data.size();
    }
    bool any = false;
    for (const auto& [name, t] : params) any = any || selection.matches(name);
    if (!any) fail(ErrorCode::EmptySelection, "selection '" + selection.describe() + "' matches no parameter");
    Eigen::VectorXd out(static_cast<Eigen::Index>(total));
    Eigen::Index pos = 0;
    for (const auto& [name, t] : params) {
        if (!selection.matches(name)) continue;
        for (float v : t.data) out(pos++) = static_cast<double>(v);
    }
    return out;
}

double frobenius_diff(const NamedParameterMap& a, const NamedParameterMap& b, const Selection& selection) {
    double sum = 0.0;
    bool any = false;
    for (const auto& [name, ta] : a) {
        if (!selection.matches(name)) continue;
        auto it = b.find(name);
        if (it == b.end()) fail(ErrorCode::ShapeMismatch, "parameter '" + name + "' missing from the second map");
        if (it->second.shape != ta.shape || it->second.data.size() != ta.data.size()) {
            fail(ErrorCode::ShapeMismatch, "parameter '" + name + "' differs in shape");
        }
        any = true;
        for (std::size_t i = 0; i < ta.data.size(); ++i) {
            const double d = static_cast<double>(ta.data[i]) - static_cast<double>(it->second.data[i]);
            sum += d * d;
        }
    }
    for (const auto& [name, _] : b) {
        if (selection.matches(name) && !a.contains(name)) {
            fail(ErrorCode::ShapeMismatch, "parameter '" + name + "' missing from the first map");
        }
    }
    if (!any) fail(ErrorCode::EmptySelection, "selection '" + selection.describe() + "' matches no parameter");
    return std::sqrt(sum);
}

std::vector<std::string> diff_row_labels(const NamedParameterMap& params) {
    std::set<int> layers;
    std::set<std::string> shared;
    for (const auto& [name, _] : params) {
        const auto g = group_of(name);
        if (is_layer_group(g)) {
            layers.insert(std::stoi(g.substr(2)));
        } else {
            shared.insert(g);
        }
    }
    std::vector<std::string> rows;
    for (int i : layers) rows.push_back("h." + std::to_string(i));
    rows.insert(rows.end(), shared.begin(), shared.end());
    if (!shared.empty()) rows.push_back("shared");
    rows.push_back("all");
    return rows;
}

namespace {

Selection row_selection(const std::string& label) {
    if (label == "all") return Selection::all();
    if (label == "shared") return Selection::shared();
    return Selection::only({label});
}

Eigen::VectorXd diff_column(const NamedParameterMap& a, const NamedParameterMap& b,
                            const std::vector<std::string>& rows) {
    Eigen::VectorXd col(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) col(static_cast<Eigen::Index>(r)) = frobenius_diff(a, b, row_selection(rows[r]));
    return col;
}

}  // namespace

WeightDiffMatrix build_diff_matrix(const CheckpointRecord& baseline, const std::map<int, CheckpointRecord>& family,
                                   const ParameterLoader& load, const std::string& pair_descriptor,
                                   bool include_self_pair) {
    if (family.empty()) fail(ErrorCode::EmptyFamily, "no checkpoints to difference against the baseline");
    const auto base = load(baseline);
    WeightDiffMatrix m;
    m.pair_descriptor = pair_descriptor;
    m.row_labels = diff_row_labels(base);
    if (include_self_pair) m.col_labels.push_back(0);
    for (const auto& [k, _] : family) m.col_labels.push_back(k);
    m.values.resize(static_cast<Eigen::Index>(m.row_labels.size()), static_cast<Eigen::Index>(m.col_labels.size()));
    Eigen::Index c = 0;
    if (include_self_pair) m.values.col(c++) = diff_column(base, base, m.row_labels);
    for (const auto& [k, rec] : family) m.values.col(c++) = diff_column(base, load(rec), m.row_labels);
    return m;
}

WeightDiffMatrix build_paired_diff_matrix(const std::map<int, CheckpointRecord>& left,
                                          const std::map<int, CheckpointRecord>& right, const ParameterLoader& load,
                                          const std::string& pair_descriptor) {
    WeightDiffMatrix m;
    m.pair_descriptor = pair_descriptor;
    for (const auto& [k, _] : left) {
        if (right.contains(k)) m.col_labels.push_back(k);
    }
    if (m.col_labels.empty()) fail(ErrorCode::EmptyFamily, "the two families share no budget");
    for (std::size_t c = 0; c < m.col_labels.size(); ++c) {
        const int k = m.col_labels[c];
        const auto a = load(left.at(k));
        if (c == 0) {
            m.row_labels = diff_row_labels(a);
            m.values.resize(static_cast<Eigen::Index>(m.row_labels.size()),
                            static_cast<Eigen::Index>(m.col_labels.size()));
        }
        m.values.col(static_cast<Eigen::Index>(c)) = diff_column(a, load(right.at(k)), m.row_labels);
    }
    return m;
}

std::string diff_matrix_csv(const WeightDiffMatrix& m) {
    std::ostringstream out;
    out << "group,k,norm\n";
    for (std::size_t r = 0; r < m.row_labels.size(); ++r) {
        for (std::size_t c = 0; c < m.col_labels.size(); ++c) {
            out << m.row_labels[r] << ',' << m.col_labels[c] << ','
                << format_double(m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)), 9) << '\n';
        }
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// PCA

namespace {

void fix_sign(Eigen::VectorXd& w) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (std::abs(w(i)) > best_abs) {
            best_abs = std::abs(w(i));
            best = i;
        }
    }
    if (w(best) < 0.0) w = -w;
}

}  // namespace

PCATrajectory pca_from_rows(const std::vector<std::string>& ids, const Eigen::MatrixXd& X) {
    const Eigen::Index n = X.rows();
    if (n < 3) fail(ErrorCode::TooFewCheckpoints, "PCA needs at least 3 checkpoints, got " + std::to_string(n));
    if (static_cast<Eigen::Index>(ids.size()) != n) fail(ErrorCode::ShapeMismatch, "one id per row is required");
    if (X.cols() < 2) fail(ErrorCode::ShapeMismatch, "PCA needs at least 2 flattened dimensions");

    const Eigen::RowVectorXd mean = X.colwise().mean();
    const Eigen::MatrixXd Xc = X.rowwise() - mean;
    const Eigen::MatrixXd G = Xc * Xc.transpose();
    if (!(G.trace() > 0.0)) fail(ErrorCode::DegenerateVariance, "all checkpoints are identical");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
    if (eig.info() != Eigen::Success) fail(ErrorCode::DegenerateVariance, "Gram eigendecomposition failed");
    // Ascending order from Eigen; the top two are at the end.
    const double l1 = std::max(0.0, eig.eigenvalues()(n - 1));
    double l2 = std::max(0.0, eig.eigenvalues()(n - 2));
    if (!(l1 > 0.0)) fail(ErrorCode::DegenerateVariance, "no variance across checkpoints");

    PCATrajectory t;
    t.basis1 = Xc.transpose() * eig.eigenvectors().col(n - 1) / std::sqrt(l1);
    t.basis1.normalize();
    fix_sign(t.basis1);

    // Below this the second direction is numerical noise.
    const double floor = l1 * 1e-12 * static_cast<double>(n);
    if (l2 > floor) {
        t.basis2 = Xc.transpose() * eig.eigenvectors().col(n - 2) / std::sqrt(l2);
    } else {
        l2 = 0.0;
        Eigen::Index smallest = 0;
        t.basis1.cwiseAbs().minCoeff(&smallest);
        t.basis2 = Eigen::VectorXd::Unit(t.basis1.size(), smallest);
    }
    t.basis2 -= t.basis1.dot(t.basis2) * t.basis1;
    t.basis2.normalize();
    fix_sign(t.basis2);

    const double dof = static_cast<double>(n - 1);
    t.explained_variance1 = l1 / dof;
    t.explained_variance2 = l2 / dof;
    t.sign_convention = "largest-absolute-loading coordinate of each component is positive (first index on ties)";

    const Eigen::VectorXd p1 = Xc * t.basis1;
    const Eigen::VectorXd p2 = Xc * t.basis2;
    for (Eigen::Index i = 0; i < n; ++i) t.points.push_back({ids[static_cast<std::size_t>(i)], p1(i), p2(i)});
    return t;
}

PCATrajectory pca_trajectory(const std::vector<CheckpointRecord>& checkpoints, const Selection& selection,
                             const ParameterLoader& load) {
    if (checkpoints.size() < 3) {
        fail(ErrorCode::TooFewCheckpoints, "PCA needs at least 3 checkpoints, got " + std::to_string(checkpoints.size()));
    }
    Eigen::MatrixXd X;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        const Eigen::VectorXd v = flatten(load(checkpoints[i]), selection);
        if (i == 0) X.resize(static_cast<Eigen::Index>(checkpoints.size()), v.size());
        if (v.size() != X.cols()) fail(ErrorCode::ShapeMismatch, "checkpoints do not share an architecture");
        X.row(static_cast<Eigen::Index>(i)) = v.transpose();
        ids.push_back(checkpoints[i].checkpoint_id);
    }
    return pca_from_rows(ids, X);
}

std::string trajectory_csv(const PCATrajectory& t, const std::map<std::string, TrajectoryLabel>& labels) {
    std::ostringstream out;
    out << "checkpoint_id,pc1,pc2,role,k\n";
    for (const auto& p : t.points) {
        out << p.checkpoint_id << ',' << format_double(p.pc1, 9) << ',' << format_double(p.pc2, 9) << ',';
        if (auto it = labels.find(p.checkpoint_id); it != labels.end()) {
            out << it->second.role << ',';
            if (it->second.k) out << *it->second.k;
        } else {
            out << ',';
        }
        out << '\n';
    }
    return out.str();
}

json to_json(const WeightDiffMatrix& m) {
    json values = json::array();
    for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.values.cols(); ++c) row.push_back(m.values(r, c));
        values.push_back(row);
    }
    return json{{"pair", m.pair_descriptor}, {"rows", m.row_labels}, {"k", m.col_labels}, {"values", values}};
}

json to_json(const PCATrajectory& t) {
    json points = json::array();
    for (const auto& p : t.points) points.push_back({{"checkpoint_id", p.checkpoint_id}, {"pc1", p.pc1}, {"pc2", p.pc2}});
    return json{{"explained_variance", {t.explained_variance1, t.explained_variance2}},
                {"sign_convention", t.sign_convention},
                {"points", points}};
}

}  // namespace subliminal
