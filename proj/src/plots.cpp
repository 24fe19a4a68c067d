#include "subliminal/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace subliminal {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Frame {
    double width = 640, height = 420;
    double left = 70, right = 150, top = 40, bottom = 60;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    bool log_x = false;

    double px(double x) const {
        const double a = log_x ? std::log10(x) : x;
        const double lo = log_x ? std::log10(x0) : x0;
        const double hi = log_x ? std::log10(x1) : x1;
        const double t = hi > lo ? (a - lo) / (hi - lo) : 0.5;
        return left + t * (width - left - right);
    }
    double py(double y) const {
        const double t = y1 > y0 ? (y - y0) / (y1 - y0) : 0.5;
        return height - bottom - t * (height - top - bottom);
    }
};

void open_svg(std::ostringstream& out, double w, double h, const std::string& title) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
        << "\" viewBox=\"0 0 " << num(w) << ' ' << num(h) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << num(w / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
        << "</text>\n";
}

void axes(std::ostringstream& out, const Frame& f, const std::vector<double>& xticks, const std::string& xlabel,
          const std::string& ylabel) {
    const double xa = f.px(f.x0), xb = f.px(f.x1), ya = f.py(f.y0), yb = f.py(f.y1);
    out << "<line x1=\"" << num(xa) << "\" y1=\"" << num(ya) << "\" x2=\"" << num(xb) << "\" y2=\"" << num(ya)
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << num(xa) << "\" y1=\"" << num(ya) << "\" x2=\"" << num(xa) << "\" y2=\"" << num(yb)
        << "\" stroke=\"black\"/>\n";
    for (double x : xticks) {
        out << "<line x1=\"" << num(f.px(x)) << "\" y1=\"" << num(ya) << "\" x2=\"" << num(f.px(x)) << "\" y2=\""
            << num(ya + 5) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << num(f.px(x)) << "\" y=\"" << num(ya + 18) << "\" text-anchor=\"middle\">"
            << format_double(x) << "</text>\n";
    }
    for (int i = 0; i <= 5; ++i) {
        const double y = f.y0 + (f.y1 - f.y0) * i / 5.0;
        out << "<line x1=\"" << num(xa - 5) << "\" y1=\"" << num(f.py(y)) << "\" x2=\"" << num(xa) << "\" y2=\""
            << num(f.py(y)) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << num(xa - 8) << "\" y=\"" << num(f.py(y) + 4) << "\" text-anchor=\"end\">"
            << format_double(std::round(y * 100.0) / 100.0) << "</text>\n";
    }
    out << "<text x=\"" << num((xa + xb) / 2) << "\" y=\"" << num(f.height - 15) << "\" text-anchor=\"middle\">"
        << escape(xlabel) << "</text>\n";
    out << "<text transform=\"translate(18," << num((ya + yb) / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
        << escape(ylabel) << "</text>\n";
}

void legend(std::ostringstream& out, const Frame& f, int index, const std::string& color, const std::string& label,
            bool dashed = false) {
    const double x = f.width - f.right + 15;
    const double y = f.top + 10 + 18 * index;
    out << "<line x1=\"" << num(x) << "\" y1=\"" << num(y) << "\" x2=\"" << num(x + 20) << "\" y2=\"" << num(y)
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"" << (dashed ? " stroke-dasharray=\"5,3\"" : "")
        << "/>\n";
    out << "<text x=\"" << num(x + 26) << "\" y=\"" << num(y + 4) << "\">" << escape(label) << "</text>\n";
}

void polyline(std::ostringstream& out, const Frame& f, const std::vector<std::pair<double, double>>& pts,
              const std::string& color) {
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) out << num(f.px(x)) << ',' << num(f.py(y)) << ' ';
    out << "\"/>\n";
    for (const auto& [x, y] : pts) {
        out << "<circle cx=\"" << num(f.px(x)) << "\" cy=\"" << num(f.py(y)) << "\" r=\"3.5\" fill=\"" << color
            << "\"/>\n";
    }
}

std::string heat_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    // white -> dark red
    const int r = static_cast<int>(255 - 100 * t);
    const int g = static_cast<int>(255 - 235 * t);
    const int b = static_cast<int>(255 - 225 * t);
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

}  // namespace

std::string svg_scaling_curves(const std::vector<ScalingCurve>& curves, const BreakingPoint& bp) {
    Frame f;
    f.log_x = true;
    f.y0 = 0;
    f.y1 = 100;
    std::vector<double> ks;
    for (const auto& c : curves) {
        for (const auto& p : c.points) ks.push_back(p.k);
    }
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    f.x0 = ks.empty() ? 1 : ks.front() * 0.8;
    f.x1 = ks.empty() ? 10 : ks.back() * 1.25;

    std::ostringstream out;
    open_svg(out, f.width, f.height, "Sycophancy rate vs poison budget");
    axes(out, f, ks, "poison budget k (log scale)", "sycophancy rate (%)");
    int idx = 0;
    for (const auto& c : curves) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& p : c.points) pts.emplace_back(p.k, p.rate);
        const std::string color = c.arm == Arm::Poisoned ? kPalette[1] : kPalette[0];
        polyline(out, f, pts, color);
        legend(out, f, idx++, color, std::string(to_string(c.arm)));
    }
    if (!curves.empty()) {
        const double y = f.py(curves.front().baseline_rate);
        out << "<line x1=\"" << num(f.px(f.x0)) << "\" y1=\"" << num(y) << "\" x2=\"" << num(f.px(f.x1))
            << "\" y2=\"" << num(y) << "\" stroke=\"#555\" stroke-dasharray=\"5,3\"/>\n";
        legend(out, f, idx++, "#555", "M_base", true);
    }
    if (bp.k_star) {
        const double x = f.px(*bp.k_star);
        out << "<line x1=\"" << num(x) << "\" y1=\"" << num(f.py(0)) << "\" x2=\"" << num(x) << "\" y2=\""
            << num(f.py(100)) << "\" stroke=\"#2ca02c\" stroke-dasharray=\"2,2\"/>\n";
        legend(out, f, idx++, "#2ca02c", "k* = " + std::to_string(*bp.k_star), true);
    }
    out << "</svg>\n";
    return out.str();
}

std::string svg_crossover(const CrossoverReport& report) {
    Frame f;
    f.log_x = true;
    double lo = -report.band, hi = report.band;
    for (const auto& [_, m] : report.metrics) {
        for (const auto& r : m.rows) {
            lo = std::min(lo, r.delta);
            hi = std::max(hi, r.delta);
        }
    }
    f.y0 = std::floor(lo - 1);
    f.y1 = std::ceil(hi + 1);
    std::vector<double> ks(report.shared_budgets.begin(), report.shared_budgets.end());
    f.x0 = ks.empty() ? 1 : ks.front() * 0.8;
    f.x1 = ks.empty() ? 10 : ks.back() * 1.25;

    std::ostringstream out;
    open_svg(out, f.width, f.height, "Poisoned minus control, per metric");
    axes(out, f, ks, "poison budget k (log scale)", "delta (percentage points)");
    for (double y : {report.band, -report.band, 0.0}) {
        out << "<line x1=\"" << num(f.px(f.x0)) << "\" y1=\"" << num(f.py(y)) << "\" x2=\"" << num(f.px(f.x1))
            << "\" y2=\"" << num(f.py(y)) << "\" stroke=\"#999\"" << (y == 0.0 ? "" : " stroke-dasharray=\"5,3\"")
            << "/>\n";
    }
    int idx = 0;
    for (const auto& [name, m] : report.metrics) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& r : m.rows) pts.emplace_back(r.k, r.delta);
        const std::string color = kPalette[idx % 10];
        polyline(out, f, pts, color);
        legend(out, f, idx++, color, name);
    }
    out << "</svg>\n";
    return out.str();
}

std::string svg_heatmaps(const std::vector<WeightDiffMatrix>& matrices) {
    constexpr double cell_w = 56, cell_h = 22, label_w = 70, gap = 40, top = 60;
    double vmax = 0.0;
    std::size_t max_rows = 0;
    double width = 20;
    for (const auto& m : matrices) {
        if (m.values.size()) vmax = std::max(vmax, m.values.maxCoeff());
        max_rows = std::max(max_rows, m.row_labels.size());
        width += label_w + cell_w * static_cast<double>(m.col_labels.size()) + gap;
    }
    const double height = top + cell_h * static_cast<double>(max_rows) + 70;

    std::ostringstream out;
    open_svg(out, width, height, "Frobenius norm of weight differences per parameter group");
    double x0 = 20;
    for (const auto& m : matrices) {
        out << "<text x=\"" << num(x0 + label_w) << "\" y=\"" << num(top - 22) << "\">" << escape(m.pair_descriptor)
            << "</text>\n";
        for (std::size_t c = 0; c < m.col_labels.size(); ++c) {
            out << "<text x=\"" << num(x0 + label_w + cell_w * (c + 0.5)) << "\" y=\"" << num(top - 6)
                << "\" text-anchor=\"middle\">k=" << m.col_labels[c] << "</text>\n";
        }
        for (std::size_t r = 0; r < m.row_labels.size(); ++r) {
            const double y = top + cell_h * static_cast<double>(r);
            out << "<text x=\"" << num(x0 + label_w - 6) << "\" y=\"" << num(y + cell_h * 0.68)
                << "\" text-anchor=\"end\">" << escape(m.row_labels[r]) << "</text>\n";
            for (std::size_t c = 0; c < m.col_labels.size(); ++c) {
                const double v = m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
                const double x = x0 + label_w + cell_w * static_cast<double>(c);
                out << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(cell_w) << "\" height=\""
                    << num(cell_h) << "\" fill=\"" << heat_color(vmax > 0 ? v / vmax : 0) << "\" stroke=\"white\"/>\n";
                out << "<text x=\"" << num(x + cell_w / 2) << "\" y=\"" << num(y + cell_h * 0.68)
                    << "\" text-anchor=\"middle\" font-size=\"10\">" << num(v) << "</text>\n";
            }
        }
        x0 += label_w + cell_w * static_cast<double>(m.col_labels.size()) + gap;
    }
    out << "</svg>\n";
    return out.str();
}

std::string svg_pca(const PCATrajectory& t, const std::map<std::string, TrajectoryLabel>& labels) {
    Frame f;
    f.width = 600;
    f.height = 520;
    f.left = 70;
    f.right = 40;
    double xlo = 0, xhi = 0, ylo = 0, yhi = 0;
    for (const auto& p : t.points) {
        xlo = std::min(xlo, p.pc1);
        xhi = std::max(xhi, p.pc1);
        ylo = std::min(ylo, p.pc2);
        yhi = std::max(yhi, p.pc2);
    }
    const double padx = std::max(1e-9, (xhi - xlo) * 0.1), pady = std::max(1e-9, (yhi - ylo) * 0.1);
    f.x0 = xlo - padx;
    f.x1 = xhi + padx;
    f.y0 = ylo - pady;
    f.y1 = yhi + pady;

    std::ostringstream out;
    open_svg(out, f.width, f.height, "Checkpoint trajectories on the top two principal components");
    axes(out, f, {}, "PC1 (var " + format_double(t.explained_variance1, 4) + ")",
         "PC2 (var " + format_double(t.explained_variance2, 4) + ")");

    // Connect each arm from the baseline outwards in k order.
    std::map<std::string, std::vector<std::pair<int, const PCAPoint*>>> arms;
    const PCAPoint* baseline = nullptr;
    for (const auto& p : t.points) {
        auto it = labels.find(p.checkpoint_id);
        if (it == labels.end()) continue;
        if (it->second.role == "S_aligned") baseline = &p;
        if (it->second.k) arms[it->second.role].emplace_back(*it->second.k, &p);
    }
    int idx = 0;
    for (auto& [role, pts] : arms) {
        std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<std::pair<double, double>> line;
        if (baseline) line.emplace_back(baseline->pc1, baseline->pc2);
        for (const auto& [k, p] : pts) line.emplace_back(p->pc1, p->pc2);
        const std::string color = role == "S_poisoned" ? kPalette[1] : kPalette[idx % 10];
        polyline(out, f, line, color);
        ++idx;
    }
    for (const auto& p : t.points) {
        out << "<circle cx=\"" << num(f.px(p.pc1)) << "\" cy=\"" << num(f.py(p.pc2))
            << "\" r=\"4\" fill=\"none\" stroke=\"black\"/>\n";
        out << "<text x=\"" << num(f.px(p.pc1) + 6) << "\" y=\"" << num(f.py(p.pc2) - 6) << "\" font-size=\"10\">"
            << escape(p.checkpoint_id) << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace subliminal
