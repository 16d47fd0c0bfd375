#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pri4r {

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;  // (x, y)
};

namespace detail {

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

inline const char* palette(size_t i) {
    static const char* colors[] = {"#1f6fb2", "#d1495b", "#3a7d44", "#8338ec",
                                   "#e07b00", "#0b7a75", "#6c584c", "#1d3557"};
    return colors[i % 8];
}

struct AxisRange {
    double lo, hi;
};

inline AxisRange pad_range(double lo, double hi) {
    if (!(std::isfinite(lo) && std::isfinite(hi)))
        throw std::runtime_error("svg: non-finite data range");
    if (lo == hi) return {lo - 1.0, hi + 1.0};
    double pad = (hi - lo) * 0.05;
    return {lo - pad, hi + pad};
}

}  // namespace detail

// Renders a fixed-size line chart. Output depends only on the arguments, so
// identical inputs give byte-identical files (no timestamps, no randomness).
inline std::string render_line_chart(const std::vector<Series>& series, const std::string& title,
                                     const std::string& xlabel, const std::string& ylabel) {
    if (series.empty()) throw std::runtime_error("svg: no series to plot");
    double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
    bool first = true;
    for (const auto& s : series) {
        if (s.points.empty()) throw std::runtime_error("svg: empty series '" + s.label + "'");
        for (const auto& [x, y] : s.points) {
            if (!std::isfinite(x) || !std::isfinite(y))
                throw std::runtime_error("svg: non-finite point in series '" + s.label + "'");
            if (first) {
                xmin = xmax = x;
                ymin = ymax = y;
                first = false;
            } else {
                xmin = std::min(xmin, x);
                xmax = std::max(xmax, x);
                ymin = std::min(ymin, y);
                ymax = std::max(ymax, y);
            }
        }
    }
    auto xr = detail::pad_range(xmin, xmax);
    auto yr = detail::pad_range(ymin, ymax);

    const double W = 640, H = 420, L = 70, R = 20, T = 40, B = 55;
    auto px = [&](double x) { return L + (x - xr.lo) / (xr.hi - xr.lo) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - yr.lo) / (yr.hi - yr.lo) * (H - T - B); };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" "
           "viewBox=\"0 0 640 420\">\n";
    out += "<rect width=\"640\" height=\"420\" fill=\"#ffffff\"/>\n";
    out += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"15\">" + title + "</text>\n";
    // axes
    out += "<line x1=\"" + detail::fmt(L) + "\" y1=\"" + detail::fmt(T) + "\" x2=\"" +
           detail::fmt(L) + "\" y2=\"" + detail::fmt(H - B) + "\" stroke=\"#333\"/>\n";
    out += "<line x1=\"" + detail::fmt(L) + "\" y1=\"" + detail::fmt(H - B) + "\" x2=\"" +
           detail::fmt(W - R) + "\" y2=\"" + detail::fmt(H - B) + "\" stroke=\"#333\"/>\n";
    // ticks
    for (int i = 0; i <= 4; ++i) {
        double xv = xr.lo + (xr.hi - xr.lo) * i / 4.0;
        double yv = yr.lo + (yr.hi - yr.lo) * i / 4.0;
        out += "<text x=\"" + detail::fmt(px(xv)) + "\" y=\"" + detail::fmt(H - B + 18) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
               detail::fmt(xv) + "</text>\n";
        out += "<text x=\"" + detail::fmt(L - 8) + "\" y=\"" + detail::fmt(py(yv) + 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
               detail::fmt(yv) + "</text>\n";
        out += "<line x1=\"" + detail::fmt(L) + "\" y1=\"" + detail::fmt(py(yv)) + "\" x2=\"" +
               detail::fmt(W - R) + "\" y2=\"" + detail::fmt(py(yv)) +
               "\" stroke=\"#e0e0e0\" stroke-width=\"0.5\"/>\n";
    }
    out += "<text x=\"320\" y=\"408\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"13\">" + xlabel + "</text>\n";
    out += "<text x=\"16\" y=\"230\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"13\" transform=\"rotate(-90 16 230)\">" + ylabel + "</text>\n";

    for (size_t si = 0; si < series.size(); ++si) {
        const char* color = detail::palette(si);
        const auto& pts = series[si].points;
        if (pts.size() > 1) {
            std::string poly = "<polyline fill=\"none\" stroke=\"";
            poly += color;
            poly += "\" stroke-width=\"1.8\" points=\"";
            for (const auto& [x, y] : pts)
                poly += detail::fmt(px(x)) + "," + detail::fmt(py(y)) + " ";
            poly += "\"/>\n";
            out += poly;
        }
        for (const auto& [x, y] : pts)
            out += "<circle cx=\"" + detail::fmt(px(x)) + "\" cy=\"" + detail::fmt(py(y)) +
                   "\" r=\"2.4\" fill=\"" + color + "\"/>\n";
        // legend entry
        double ly = T + 8 + 18.0 * static_cast<double>(si);
        out += "<line x1=\"" + detail::fmt(W - R - 150) + "\" y1=\"" + detail::fmt(ly) +
               "\" x2=\"" + detail::fmt(W - R - 126) + "\" y2=\"" + detail::fmt(ly) +
               "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
        out += "<text x=\"" + detail::fmt(W - R - 120) + "\" y=\"" + detail::fmt(ly + 4) +
               "\" font-family=\"sans-serif\" font-size=\"12\">" + series[si].label + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

inline void write_svg(const std::string& svg, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("svg: cannot open " + path + " for writing");
    os << svg;
    if (!os) throw std::runtime_error("svg: write failed for " + path);
}

}  // namespace pri4r
