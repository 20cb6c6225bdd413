// pharmonic-lab: experiment artifact plumbing. CSV tables, minimal SVG line
// plots (a few polylines on a framed axis box), and the pass/fail check list
// that report.json carries.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace phl {

struct Check {
    std::string name;
    double value = 0.0;
    double bound = 0.0;
    std::string relation;  // "<=", ">=", "==" (display only)
    bool pass = false;
};

inline Check check_le(std::string name, double value, double bound) {
    return {std::move(name), value, bound, "<=", value <= bound};
}
inline Check check_ge(std::string name, double value, double bound) {
    return {std::move(name), value, bound, ">=", value >= bound};
}

inline bool all_pass(const std::vector<Check>& checks) {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

// one table = one file; columns are comma-joined with a header row
inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
    std::ofstream os(path);
    for (size_t c = 0; c < header.size(); ++c) os << (c ? "," : "") << header[c];
    os << "\n";
    os.precision(17);
    for (const auto& row : rows) {
        for (size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << row[c];
        os << "\n";
    }
}

struct PlotSeries {
    std::string label;
    std::vector<double> x, y;
};

// framed polyline plot; log-scales take log10 of the coordinate before layout
inline void write_svg_plot(const std::filesystem::path& path, const std::string& title,
                           const std::vector<PlotSeries>& series, bool logx = false,
                           bool logy = false) {
    const double W = 640, H = 420, ml = 70, mr = 20, mt = 40, mb = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    auto tx = [&](double v) { return logx ? std::log10(std::max(v, 1e-300)) : v; };
    auto ty = [&](double v) { return logy ? std::log10(std::max(v, 1e-300)) : v; };
    for (const auto& s : series)
        for (size_t k = 0; k < s.x.size(); ++k) {
            xmin = std::min(xmin, tx(s.x[k]));
            xmax = std::max(xmax, tx(s.x[k]));
            ymin = std::min(ymin, ty(s.y[k]));
            ymax = std::max(ymax, ty(s.y[k]));
        }
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;
    auto px = [&](double v) { return ml + (tx(v) - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double v) { return H - mb - (ty(v) - ymin) / (ymax - ymin) * (H - mt - mb); };
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    std::ostringstream os;
    os.precision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\">\n";
    os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr << "\" height=\""
       << H - mt - mb << "\" fill=\"none\" stroke=\"#333\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title
       << "</text>\n";
    int ci = 0;
    double ly = mt + 16;
    for (const auto& s : series) {
        const char* col = colors[ci % 6];
        os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
        for (size_t k = 0; k < s.x.size(); ++k)
            os << px(s.x[k]) << "," << py(s.y[k]) << (k + 1 < s.x.size() ? " " : "");
        os << "\"/>\n";
        os << "<text x=\"" << ml + 10 << "\" y=\"" << ly << "\" font-size=\"12\" fill=\"" << col
           << "\">" << s.label << "</text>\n";
        ly += 16;
        ++ci;
    }
    // axis extremes
    os << "<text x=\"" << ml << "\" y=\"" << H - mb + 18
       << "\" font-size=\"11\" text-anchor=\"middle\">" << (logx ? "1e" : "")
       << (logx ? std::to_string(xmin) : std::to_string(xmin)) << "</text>\n";
    os << "<text x=\"" << W - mr << "\" y=\"" << H - mb + 18
       << "\" font-size=\"11\" text-anchor=\"middle\">" << (logx ? "1e" : "")
       << std::to_string(xmax) << "</text>\n";
    os << "</svg>\n";
    std::ofstream f(path);
    f << os.str();
}

}  // namespace phl
