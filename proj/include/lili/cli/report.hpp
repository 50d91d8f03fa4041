#pragma once

// Figure-data exports from run directories: learning curves, the Point Mass
// target-angle histogram and opponent strategy occupancy, each as CSV plus SVG.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "lili/cli/analysis.hpp"
#include "lili/cli/run.hpp"

namespace lili::cli {

inline constexpr std::size_t kSmoothingWindow = 100;
inline constexpr std::size_t kHistogramWindow = 500;
inline constexpr std::size_t kOccupancyWindow = 200;
inline constexpr std::size_t kHistogramBins = 36;

struct ReportRun {
    std::string label;
    RunConfig config;
    std::vector<MetricsRow> rows;
};

/// Loads and checks every run; throws before anything is written.
inline std::vector<ReportRun> load_report_runs(const std::vector<fs::path>& dirs) {
    if (dirs.empty()) throw ConfigError("report: no run directories given");
    std::vector<ReportRun> runs;
    std::map<std::string, int> seen;
    for (const auto& d : dirs) {
        if (!fs::is_directory(d)) throw ConfigError(d.string() + ": not a directory");
        ReportRun r;
        r.config = load_run_config(d);
        r.rows = read_metrics_csv(d / "metrics.csv");
        if (r.rows.empty()) throw ConfigError(d.string() + ": metrics log has no rows");
        r.label = to_string(r.config.algorithm) + "_s" + std::to_string(r.config.seed);
        if (const int k = seen[r.label]++; k > 0) r.label += "_" + std::to_string(k);
        if (!runs.empty() && r.config.env.id != runs.front().config.env.id)
            throw ConfigError("report: runs use different environments (" + to_string(runs.front().config.env.id) +
                              " in " + dirs.front().string() + ", " + to_string(r.config.env.id) + " in " +
                              d.string() + ")");
        runs.push_back(std::move(r));
    }
    return runs;
}

namespace svg {

struct Series {
    std::string label;
    std::vector<double> x, y;
};

inline const char* colour(std::size_t i) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
    return palette[i % 7];
}

inline std::string num(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

inline std::string line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                              const std::vector<Series>& series) {
    constexpr double W = 640, H = 400, L = 60, R = 150, T = 30, B = 50;
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]), y1 = std::max(y1, s.y[i]);
        }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\">" << title << "</text>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << L << "\" y=\"" << H - B + 16 << "\">" << num(x0) << "</text>\n";
    os << "<text x=\"" << W - R << "\" y=\"" << H - B + 16 << "\" text-anchor=\"end\">" << num(x1) << "</text>\n";
    os << "<text x=\"" << L - 4 << "\" y=\"" << H - B << "\" text-anchor=\"end\">" << num(y0) << "</text>\n";
    os << "<text x=\"" << L - 4 << "\" y=\"" << T + 10 << "\" text-anchor=\"end\">" << num(y1) << "</text>\n";
    os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
    os << "<text transform=\"translate(14," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << ylabel
       << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        os << "<polyline fill=\"none\" stroke=\"" << colour(k) << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            if (std::isfinite(s.y[i])) os << num(px(s.x[i])) << ',' << num(py(s.y[i])) << ' ';
        os << "\"/>\n";
        os << "<text x=\"" << W - R + 8 << "\" y=\"" << T + 14 + 16 * static_cast<double>(k) << "\" fill=\"" << colour(k)
           << "\">" << s.label << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

/// Grouped bars: one group per category, one bar per series.
inline std::string bar_chart(const std::string& title, const std::vector<std::string>& categories,
                             const std::vector<Series>& series, double ymax) {
    constexpr double W = 640, H = 400, L = 60, R = 150, T = 30, B = 60;
    const double group = (W - L - R) / static_cast<double>(std::max<std::size_t>(1, categories.size()));
    const double bar = group * 0.8 / static_cast<double>(std::max<std::size_t>(1, series.size()));
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\">" << title << "</text>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << L - 4 << "\" y=\"" << T + 10 << "\" text-anchor=\"end\">" << num(ymax) << "</text>\n";
    os << "<text x=\"" << L - 4 << "\" y=\"" << H - B << "\" text-anchor=\"end\">0</text>\n";
    const bool label_every = categories.size() <= 12;
    for (std::size_t c = 0; c < categories.size(); ++c) {
        const double gx = L + group * static_cast<double>(c) + group * 0.1;
        for (std::size_t k = 0; k < series.size(); ++k) {
            const double v = std::clamp(series[k].y[c] / ymax, 0.0, 1.0) * (H - T - B);
            os << "<rect x=\"" << num(gx + bar * static_cast<double>(k)) << "\" y=\"" << num(H - B - v) << "\" width=\""
               << num(bar) << "\" height=\"" << num(v) << "\" fill=\"" << colour(k) << "\"/>\n";
        }
        if (label_every || c % 6 == 0)
            os << "<text x=\"" << num(gx + group * 0.4) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
               << categories[c] << "</text>\n";
    }
    for (std::size_t k = 0; k < series.size(); ++k)
        os << "<text x=\"" << W - R + 8 << "\" y=\"" << T + 14 + 16 * static_cast<double>(k) << "\" fill=\"" << colour(k)
           << "\">" << series[k].label << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

}  // namespace svg

struct ReportFiles {
    std::vector<std::pair<std::string, std::string>> files;  // name, contents
};

/// Learning curve: raw and smoothed per-step reward for every run.
inline void add_learning_curve(const std::vector<ReportRun>& runs, ReportFiles& out) {
    std::size_t longest = 0;
    for (std::size_t k = 1; k < runs.size(); ++k)
        if (runs[k].rows.size() > runs[longest].rows.size()) longest = k;
    std::string csv = "# per-step reward per interaction; *_smoothed is a trailing moving average over " +
                      std::to_string(kSmoothingWindow) + " logged rows (one row per interaction unless run.log_every > 1)\ninteraction";
    for (const auto& r : runs) csv += "," + r.label + "," + r.label + "_smoothed";
    csv += "\n";
    std::vector<std::vector<double>> smooth;
    std::vector<svg::Series> series;
    for (const auto& r : runs) {
        std::vector<double> raw;
        for (const auto& row : r.rows) raw.push_back(row.mean_step_reward);
        smooth.push_back(trailing_average(raw, kSmoothingWindow));
        svg::Series s{r.label, {}, smooth.back()};
        for (const auto& row : r.rows) s.x.push_back(static_cast<double>(row.interaction));
        series.push_back(std::move(s));
    }
    for (std::size_t i = 0; i < runs[longest].rows.size(); ++i) {
        csv += std::to_string(runs[longest].rows[i].interaction);
        for (std::size_t k = 0; k < runs.size(); ++k) {
            if (i < runs[k].rows.size())
                csv += "," + detail::format_double(runs[k].rows[i].mean_step_reward) + "," + detail::format_double(smooth[k][i]);
            else
                csv += ",,";
        }
        csv += "\n";
    }
    out.files.emplace_back("learning_curve.csv", csv);
    out.files.emplace_back("learning_curve.svg",
                           svg::line_chart("Per-step reward (trailing " + std::to_string(kSmoothingWindow) + ")",
                                           "interaction", "reward", series));
}

/// Target angle relative to the start-adjacent point, binned over [-pi, pi).
inline std::vector<double> angle_histogram(const std::vector<MetricsRow>& rows, std::size_t k, std::size_t bins) {
    std::vector<double> h(bins, 0.0);
    const auto tail = final_rows(rows, k);
    for (const auto& r : tail) {
        const double d = angle_diff(r.ground_strategy, 0.0);
        auto b = static_cast<std::size_t>((d + std::numbers::pi) / (2.0 * std::numbers::pi) * static_cast<double>(bins));
        h[std::min(b, bins - 1)] += 1.0;
    }
    for (auto& v : h) v /= std::max<double>(1.0, static_cast<double>(tail.size()));
    return h;
}

inline void add_angle_histogram(const std::vector<ReportRun>& runs, ReportFiles& out) {
    std::string csv = "# fraction of the final " + std::to_string(kHistogramWindow) +
                      " interactions whose target angle falls in each bin; angle 0 is the start-adjacent point\n"
                      "bin_low,bin_high";
    for (const auto& r : runs) csv += "," + r.label;
    csv += "\n";
    std::vector<svg::Series> series;
    std::vector<std::string> cats;
    const double w = 2.0 * std::numbers::pi / static_cast<double>(kHistogramBins);
    for (const auto& r : runs) series.push_back({r.label, {}, angle_histogram(r.rows, kHistogramWindow, kHistogramBins)});
    double ymax = 0.0;
    for (const auto& s : series)
        for (double v : s.y) ymax = std::max(ymax, v);
    for (std::size_t b = 0; b < kHistogramBins; ++b) {
        const double lo = -std::numbers::pi + w * static_cast<double>(b);
        csv += detail::format_double(lo) + "," + detail::format_double(lo + w);
        for (const auto& s : series) csv += "," + detail::format_double(s.y[b]);
        csv += "\n";
        cats.push_back(svg::num(lo + w / 2));
    }
    out.files.emplace_back("angle_histogram.csv", csv);
    out.files.emplace_back("angle_histogram.svg",
                           svg::bar_chart("Target angle, final " + std::to_string(kHistogramWindow) + " interactions",
                                          cats, series, ymax > 0 ? ymax : 1.0));
}

inline void add_occupancy(const std::vector<ReportRun>& runs, ReportFiles& out) {
    const EnvId env = runs.front().config.env.id;
    const auto labels = occupancy_labels(env);
    std::string csv = "# fraction of the final " + std::to_string(kOccupancyWindow) +
                      " interactions played with each opponent strategy\nstrategy";
    for (const auto& r : runs) csv += "," + r.label;
    csv += "\n";
    std::vector<svg::Series> series;
    for (const auto& r : runs) series.push_back({r.label, {}, final_occupancy(r.rows, kOccupancyWindow, env)});
    for (std::size_t b = 0; b < labels.size(); ++b) {
        csv += labels[b];
        for (const auto& s : series) csv += "," + detail::format_double(s.y[b]);
        csv += "\n";
    }
    out.files.emplace_back("occupancy.csv", csv);
    out.files.emplace_back("occupancy.svg",
                           svg::bar_chart("Opponent strategy, final " + std::to_string(kOccupancyWindow) + " interactions",
                                          labels, series, 1.0));
}

/// Final-window summary per run: mean per-step reward, return and success.
inline void add_summary(const std::vector<ReportRun>& runs, ReportFiles& out) {
    std::string csv = "# means over the final " + std::to_string(kHistogramWindow) +
                      " interactions\nrun,algorithm,seed,interactions,mean_step_reward,episode_return,success\n";
    for (const auto& r : runs)
        csv += r.label + "," + to_string(r.config.algorithm) + "," + std::to_string(r.config.seed) + "," +
               std::to_string(r.rows.size()) + "," +
               detail::format_double(final_mean_step_reward(r.rows, kHistogramWindow)) + "," +
               detail::format_double(final_mean_return(r.rows, kHistogramWindow)) + "," +
               detail::format_double(final_success_rate(r.rows, kHistogramWindow)) + "\n";
    out.files.emplace_back("summary.csv", csv);
}

inline ReportFiles build_report(const std::vector<ReportRun>& runs) {
    ReportFiles out;
    add_learning_curve(runs, out);
    if (runs.front().config.env.id == EnvId::point_mass) add_angle_histogram(runs, out);
    else add_occupancy(runs, out);
    add_summary(runs, out);
    return out;
}

/// Writes every export into `out_dir`; nothing is created when loading fails.
inline std::vector<fs::path> write_report(const std::vector<fs::path>& dirs, const fs::path& out_dir) {
    const auto files = build_report(load_report_runs(dirs));
    fs::create_directories(out_dir);
    std::vector<fs::path> written;
    for (const auto& [name, text] : files.files) {
        write_text(out_dir / name, text);
        written.push_back(out_dir / name);
    }
    return written;
}

}  // namespace lili::cli
