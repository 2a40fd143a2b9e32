#pragma once
// Report artifacts: one EpisodeRecord per unit of work, written as a JSON
// line and a CSV row, plus a dependency-free SVG polyline chart. All numeric
// formatting goes through shortest-round-trip to_chars so identical runs
// produce byte-identical files.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "toolforge/confidence.hpp"
#include "toolforge/errors.hpp"
#include "toolforge/serialize.hpp"

namespace toolforge::io {

// One row of experiment output. Every experiment maps its unit of work onto
// this shape: a loop episode (e2), a sweep point (e1), a screened candidate
// (e3), a calibration sample (e4) or a budgeted evaluation (e5). Fields that
// do not apply to an experiment keep their defaults.
struct EpisodeRecord {
    std::uint64_t seed = 0;
    std::uint64_t episode = 0; // 1-based within a seed
    std::string arm;           // experiment-specific condition label
    double x = 0.0;            // the record's position on the plot axis
    std::string tool;
    std::string outcome;
    bool success = false;
    double success_rate = 0.0;
    double perf = 0.0;
    double reward = 0.0;
    double lr = 0.0;
    bool impasse = false;
    std::string impasse_reason;
    bool invented = false;
    std::string invented_tool;
    conf::ConfidenceReport report;
};

inline std::string format_double(double v) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

inline json to_json(const EpisodeRecord& r) {
    return json{{"seed", r.seed},
                {"episode", r.episode},
                {"arm", r.arm},
                {"x", r.x},
                {"tool", r.tool},
                {"outcome", r.outcome},
                {"success", r.success},
                {"success_rate", r.success_rate},
                {"perf", r.perf},
                {"reward", r.reward},
                {"lr", r.lr},
                {"impasse", r.impasse},
                {"impasse_reason", r.impasse_reason},
                {"invented", r.invented},
                {"invented_tool", r.invented_tool},
                {"report", to_json(r.report)}};
}

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

// Creates the directory (if needed) and proves it is writable by touching a
// probe file, so experiments fail fast instead of after minutes of compute.
inline void ensure_writable_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("output: cannot create directory '" + dir.string() + "'");
    const auto probe = dir / ".write-probe";
    {
        std::ofstream out(probe);
        if (!out) throw IoError("output: directory '" + dir.string() + "' is not writable");
    }
    std::filesystem::remove(probe, ec);
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("output: cannot open '" + path.string() + "' for writing");
    out << content;
    if (!out) throw IoError("output: failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// episodes.jsonl and summary.csv
// ---------------------------------------------------------------------------

inline void write_episodes_jsonl(const std::filesystem::path& path,
                                 const std::vector<EpisodeRecord>& records) {
    std::string text;
    for (const auto& r : records) {
        text += to_json(r).dump();
        text += '\n';
    }
    write_text_file(path, text);
}

namespace detail {

inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string quoted = "\"";
    for (char c : field) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

inline std::string csv_channel(const conf::ConfidenceReport& report, conf::Channel ch) {
    return report.has(ch) ? format_double(report.get(ch)->value) : std::string{};
}

} // namespace detail

inline constexpr std::string_view kSummaryCsvHeader =
    "seed,episode,arm,x,tool,outcome,success,success_rate,perf,reward,lr,"
    "impasse,impasse_reason,invented,invented_tool,"
    "c_perceptual,c_utility,c_model,c_control,c_decision";

inline void write_summary_csv(const std::filesystem::path& path,
                              const std::vector<EpisodeRecord>& records) {
    std::string text{kSummaryCsvHeader};
    text += '\n';
    for (const auto& r : records) {
        text += std::to_string(r.seed);
        text += ',';
        text += std::to_string(r.episode);
        text += ',';
        text += detail::csv_escape(r.arm);
        text += ',';
        text += format_double(r.x);
        text += ',';
        text += detail::csv_escape(r.tool);
        text += ',';
        text += detail::csv_escape(r.outcome);
        text += ',';
        text += r.success ? "1" : "0";
        text += ',';
        text += format_double(r.success_rate);
        text += ',';
        text += format_double(r.perf);
        text += ',';
        text += format_double(r.reward);
        text += ',';
        text += format_double(r.lr);
        text += ',';
        text += r.impasse ? "1" : "0";
        text += ',';
        text += detail::csv_escape(r.impasse_reason);
        text += ',';
        text += r.invented ? "1" : "0";
        text += ',';
        text += detail::csv_escape(r.invented_tool);
        for (conf::Channel ch : conf::kAllChannels) {
            text += ',';
            text += detail::csv_channel(r.report, ch);
        }
        text += '\n';
    }
    write_text_file(path, text);
}

// ---------------------------------------------------------------------------
// plot.svg
// ---------------------------------------------------------------------------

struct PlotSeries {
    std::string name;
    std::vector<std::pair<double, double>> points; // (x, y), in draw order
};

namespace detail {

inline constexpr std::array<std::string_view, 6> kPalette{
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"};

struct AxisRange {
    double lo = 0.0;
    double hi = 1.0;

    void include(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
};

} // namespace detail

// Emits a fixed-size polyline chart with axes, tick labels and a legend.
// Direct markup, no dependencies; output is deterministic.
inline std::string render_plot_svg(const std::string& title, const std::string& x_label,
                                   const std::string& y_label,
                                   const std::vector<PlotSeries>& series) {
    constexpr double width = 720.0;
    constexpr double height = 440.0;
    constexpr double left = 64.0;
    constexpr double right = 24.0;
    constexpr double top = 40.0;
    constexpr double bottom = 56.0;

    detail::AxisRange xr{0.0, 1.0};
    detail::AxisRange yr{0.0, 1.0};
    bool any = false;
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            if (!any) {
                xr = {x, x};
                yr = {y, y};
                any = true;
            } else {
                xr.include(x);
                yr.include(y);
            }
        }
    }
    if (xr.hi - xr.lo < 1e-12) xr.hi = xr.lo + 1.0;
    if (yr.hi - yr.lo < 1e-12) yr.hi = yr.lo + 1.0;

    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;
    const auto sx = [&](double x) { return left + (x - xr.lo) / (xr.hi - xr.lo) * plot_w; };
    const auto sy = [&](double y) { return top + plot_h - (y - yr.lo) / (yr.hi - yr.lo) * plot_h; };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + format_double(width) +
           "\" height=\"" + format_double(height) + "\" viewBox=\"0 0 " + format_double(width) +
           " " + format_double(height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + format_double(width / 2.0) +
           "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
           title + "</text>\n";

    // Axes.
    svg += "<line x1=\"" + format_double(left) + "\" y1=\"" + format_double(top + plot_h) +
           "\" x2=\"" + format_double(left + plot_w) + "\" y2=\"" + format_double(top + plot_h) +
           "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + format_double(left) + "\" y1=\"" + format_double(top) + "\" x2=\"" +
           format_double(left) + "\" y2=\"" + format_double(top + plot_h) +
           "\" stroke=\"black\"/>\n";

    // Ticks and grid.
    constexpr int kTicks = 5;
    for (int i = 0; i < kTicks; ++i) {
        const double f = static_cast<double>(i) / (kTicks - 1);
        const double xv = xr.lo + f * (xr.hi - xr.lo);
        const double yv = yr.lo + f * (yr.hi - yr.lo);
        const double px = sx(xv);
        const double py = sy(yv);
        svg += "<line x1=\"" + format_double(px) + "\" y1=\"" + format_double(top + plot_h) +
               "\" x2=\"" + format_double(px) + "\" y2=\"" + format_double(top + plot_h + 5.0) +
               "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + format_double(px) + "\" y=\"" + format_double(top + plot_h + 20.0) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
               format_double(std::round(xv * 1000.0) / 1000.0) + "</text>\n";
        svg += "<line x1=\"" + format_double(left - 5.0) + "\" y1=\"" + format_double(py) +
               "\" x2=\"" + format_double(left) + "\" y2=\"" + format_double(py) +
               "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + format_double(left - 8.0) + "\" y=\"" + format_double(py + 4.0) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
               format_double(std::round(yv * 1000.0) / 1000.0) + "</text>\n";
    }
    svg += "<text x=\"" + format_double(left + plot_w / 2.0) + "\" y=\"" +
           format_double(height - 12.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + x_label +
           "</text>\n";
    svg += "<text x=\"16\" y=\"" + format_double(top + plot_h / 2.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 " +
           format_double(top + plot_h / 2.0) + ")\">" + y_label + "</text>\n";

    // Series.
    for (std::size_t s = 0; s < series.size(); ++s) {
        const auto color = detail::kPalette[s % detail::kPalette.size()];
        std::string pts;
        for (const auto& [x, y] : series[s].points) {
            if (!pts.empty()) pts += ' ';
            pts += format_double(sx(x));
            pts += ',';
            pts += format_double(sy(y));
        }
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
               "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
        for (const auto& [x, y] : series[s].points) {
            svg += "<circle cx=\"" + format_double(sx(x)) + "\" cy=\"" + format_double(sy(y)) +
                   "\" r=\"2.5\" fill=\"" + std::string(color) + "\"/>\n";
        }
        // Legend entry.
        const double ly = top + 10.0 + 18.0 * static_cast<double>(s);
        svg += "<line x1=\"" + format_double(left + plot_w - 150.0) + "\" y1=\"" +
               format_double(ly) + "\" x2=\"" + format_double(left + plot_w - 126.0) + "\" y2=\"" +
               format_double(ly) + "\" stroke=\"" + std::string(color) +
               "\" stroke-width=\"2\"/>\n";
        svg += "<text x=\"" + format_double(left + plot_w - 120.0) + "\" y=\"" +
               format_double(ly + 4.0) + "\" font-family=\"sans-serif\" font-size=\"12\">" +
               series[s].name + "</text>\n";
    }

    svg += "</svg>\n";
    return svg;
}

inline void write_plot_svg(const std::filesystem::path& path, const std::string& title,
                           const std::string& x_label, const std::string& y_label,
                           const std::vector<PlotSeries>& series) {
    write_text_file(path, render_plot_svg(title, x_label, y_label, series));
}

} // namespace toolforge::io
