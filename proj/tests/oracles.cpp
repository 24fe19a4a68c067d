#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oracle {

double Logistic::rate(double k) const {
    return baseline + amplitude / (1.0 + std::exp(-slope * (std::log(k) - std::log(k_mid))));
}

std::optional<double> Logistic::threshold_k(double margin) const {
    if (amplitude <= margin) return std::nullopt;
    return k_mid * std::pow(amplitude / margin - 1.0, -1.0 / slope);
}

ScalingCurve Logistic::sample(const std::vector<int>& grid) const {
    ScalingCurve c;
    c.arm = Arm::Poisoned;
    c.baseline_rate = baseline;
    for (int k : grid) c.points.push_back({k, rate(k)});
    return c;
}

std::optional<int> first_grid_point_past(const std::vector<int>& grid, std::optional<double> threshold) {
    if (!threshold) return std::nullopt;
    for (int k : grid) {
        if (k > *threshold) return k;
    }
    return std::nullopt;
}

Logistic random_logistic(Rng& rng, double margin, const std::vector<int>& grid) {
    for (;;) {
        Logistic l;
        l.baseline = 5.0 + 40.0 * rng.uniform();
        l.amplitude = std::min(100.0 - l.baseline, 2.0 + 60.0 * rng.uniform());
        l.slope = 0.5 + 6.0 * rng.uniform();
        l.k_mid = std::exp(std::log(50.0) + (std::log(12000.0) - std::log(50.0)) * rng.uniform());
        const auto t = l.threshold_k(margin);
        if (!t) return l;
        const bool clear = std::all_of(grid.begin(), grid.end(), [&](int k) { return std::abs(k - *t) > 0.01 * k; });
        if (clear) return l;
    }
}

double naive_frobenius(const NamedParameterMap& a, const NamedParameterMap& b) {
    long double sum = 0.0L;
    for (const auto& [name, ta] : a) {
        const auto& tb = b.at(name);
        for (std::size_t i = 0; i < ta.data.size(); ++i) {
            const long double d = static_cast<long double>(ta.data[i]) - static_cast<long double>(tb.data[i]);
            sum += d * d;
        }
    }
    return static_cast<double>(std::sqrt(sum));
}

void apply_sign_convention(Eigen::VectorXd& v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
        if (std::abs(v(i)) > std::abs(v(best))) best = i;
    }
    if (v(best) < 0) v = -v;
}

void jacobi_eigen(Eigen::MatrixXd A, Eigen::VectorXd& values, Eigen::MatrixXd& vectors) {
    const Eigen::Index n = A.rows();
    Eigen::MatrixXd V = Eigen::MatrixXd::Identity(n, n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
        if (off < 1e-30 * std::max(1.0, A.squaredNorm())) break;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (A(p, q) == 0.0) continue;
                const double theta = (A(q, q) - A(p, p)) / (2.0 * A(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = A(k, p), akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = A(p, k), aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = V(k, p), vkq = V(k, q);
                    V(k, p) = c * vkp - s * vkq;
                    V(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return A(a, a) > A(b, b); });
    values.resize(n);
    vectors.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        values(i) = A(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
        vectors.col(i) = V.col(order[static_cast<std::size_t>(i)]);
    }
}

namespace {

// Top eigenvector of v -> Xc^T Xc v restricted to the complement of `skip`.
Eigen::VectorXd power_iteration(const Eigen::MatrixXd& Xc, const std::vector<Eigen::VectorXd>& skip) {
    Eigen::VectorXd v = Xc.colwise().sum().transpose() + Eigen::VectorXd::LinSpaced(Xc.cols(), 1.0, 2.0);
    auto project = [&](Eigen::VectorXd& x) {
        for (const auto& s : skip) x -= s.dot(x) * s;
    };
    project(v);
    v.normalize();
    for (int it = 0; it < 200000; ++it) {
        Eigen::VectorXd w = Xc.transpose() * (Xc * v);
        project(w);
        const double norm = w.norm();
        if (norm == 0.0) return v;
        w /= norm;
        if (w.dot(v) < 0) w = -w;
        const double change = (w - v).norm();
        v = w;
        if (change < 1e-13) break;
    }
    return v;
}

}  // namespace

PcaOracle covariance_pca(const Eigen::MatrixXd& X) {
    const Eigen::Index n = X.rows();
    const Eigen::RowVectorXd mean = X.colwise().mean();
    const Eigen::MatrixXd Xc = X.rowwise() - mean;
    Eigen::VectorXd b1, b2;
    if (X.cols() <= 200) {
        const Eigen::MatrixXd C = Xc.transpose() * Xc / static_cast<double>(n - 1);
        Eigen::VectorXd values;
        Eigen::MatrixXd vectors;
        jacobi_eigen(C, values, vectors);
        b1 = vectors.col(0);
        b2 = vectors.col(1);
    } else {
        b1 = power_iteration(Xc, {});
        b2 = power_iteration(Xc, {b1});
    }
    apply_sign_convention(b1);
    apply_sign_convention(b2);
    PcaOracle out;
    out.coords.resize(n, 2);
    out.coords.col(0) = Xc * b1;
    out.coords.col(1) = Xc * b2;
    out.variance << out.coords.col(0).squaredNorm() / static_cast<double>(n - 1),
        out.coords.col(1).squaredNorm() / static_cast<double>(n - 1);
    return out;
}

}  // namespace oracle
