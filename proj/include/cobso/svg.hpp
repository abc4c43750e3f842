#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "cobso/grid.hpp"
#include "cobso/tracking.hpp"

namespace cobso::svg {

/// Five-stop viridis-like ramp; u in [0, 1].
inline void value_color(double u, int& r, int& g, int& b) {
    static const int stops[5][3] = {
        {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
    u = std::clamp(u, 0.0, 1.0) * 4.0;
    const int s = std::min(3, int(u));
    const double f = u - s;
    r = int(std::lround(stops[s][0] + f * (stops[s + 1][0] - stops[s][0])));
    g = int(std::lround(stops[s][1] + f * (stops[s + 1][1] - stops[s][1])));
    b = int(std::lround(stops[s][2] + f * (stops[s + 1][2] - stops[s][2])));
}

namespace detail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

} // namespace detail

/// Deterministic SVG heatmap of a surface: one rect per cell, pitch outline,
/// optional player markers, and a value legend. Fixed number formatting so
/// identical inputs give identical bytes.
inline std::string render_heatmap(const Surface& surface, const std::string& title,
                                  const Frame* frame = nullptr) {
    const PitchSpec& pitch = surface.pitch;
    const double scale = 8.0; // px per meter
    const double margin = 30.0;
    const double legend_w = 50.0;
    const double w = pitch.length * scale + 2 * margin + legend_w;
    const double h = pitch.width * scale + 2 * margin + 20.0;

    double vmax = surface.max_value();
    if (vmax <= 0.0) vmax = 1.0;

    auto px = [&](double x) { return margin + (x + 0.5 * pitch.length) * scale; };
    auto py = [&](double y) { return margin + (0.5 * pitch.width - y) * scale; };

    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt(w) + "\" height=\"" +
           detail::fmt(h) + "\" viewBox=\"0 0 " + detail::fmt(w) + " " + detail::fmt(h) + "\">\n";
    out += "<title>" + title + "</title>\n";
    out += "<rect width=\"" + detail::fmt(w) + "\" height=\"" + detail::fmt(h) +
           "\" fill=\"white\"/>\n";

    for (int iy = 0; iy < pitch.ny; ++iy) {
        for (int ix = 0; ix < pitch.nx; ++ix) {
            int r, g, b;
            value_color(surface.at(ix, iy) / vmax, r, g, b);
            const Vec2 c = surface.pitch.cell_center(ix, iy);
            out += "<rect x=\"" + detail::fmt(px(c.x - 0.5 * pitch.dx())) + "\" y=\"" +
                   detail::fmt(py(c.y + 0.5 * pitch.dy())) + "\" width=\"" +
                   detail::fmt(pitch.dx() * scale) + "\" height=\"" + detail::fmt(pitch.dy() * scale) +
                   "\" fill=\"rgb(" + std::to_string(r) + "," + std::to_string(g) + "," +
                   std::to_string(b) + ")\"/>\n";
        }
    }

    // pitch outline, halfway line, goals
    const std::string line_style = "stroke=\"white\" stroke-width=\"1.5\" fill=\"none\"";
    out += "<rect x=\"" + detail::fmt(px(-0.5 * pitch.length)) + "\" y=\"" +
           detail::fmt(py(0.5 * pitch.width)) + "\" width=\"" + detail::fmt(pitch.length * scale) +
           "\" height=\"" + detail::fmt(pitch.width * scale) + "\" " + line_style + "/>\n";
    out += "<line x1=\"" + detail::fmt(px(0)) + "\" y1=\"" + detail::fmt(py(0.5 * pitch.width)) +
           "\" x2=\"" + detail::fmt(px(0)) + "\" y2=\"" + detail::fmt(py(-0.5 * pitch.width)) +
           "\" " + line_style + "/>\n";
    for (double side : {-0.5, 0.5}) {
        out += "<line x1=\"" + detail::fmt(px(side * pitch.length)) + "\" y1=\"" +
               detail::fmt(py(0.5 * pitch.goal_width)) + "\" x2=\"" +
               detail::fmt(px(side * pitch.length)) + "\" y2=\"" +
               detail::fmt(py(-0.5 * pitch.goal_width)) +
               "\" stroke=\"red\" stroke-width=\"4\" fill=\"none\"/>\n";
    }

    if (frame) {
        for (const auto& p : frame->players) {
            const char* fill = p.team == Team::Home ? "#d62728" : "#1f77b4";
            out += "<circle cx=\"" + detail::fmt(px(p.pos.x)) + "\" cy=\"" + detail::fmt(py(p.pos.y)) +
                   "\" r=\"4\" fill=\"" + fill + "\" stroke=\"white\" stroke-width=\"1\"/>\n";
        }
        out += "<circle cx=\"" + detail::fmt(px(frame->ball.pos.x)) + "\" cy=\"" +
               detail::fmt(py(frame->ball.pos.y)) +
               "\" r=\"3\" fill=\"black\" stroke=\"white\" stroke-width=\"1\"/>\n";
    }

    // legend: vertical gradient bar with min/max labels
    const double lx = w - legend_w - 5.0, ly = margin, lh = pitch.width * scale;
    const int bands = 32;
    for (int i = 0; i < bands; ++i) {
        int r, g, b;
        value_color(1.0 - double(i) / (bands - 1), r, g, b);
        out += "<rect x=\"" + detail::fmt(lx) + "\" y=\"" + detail::fmt(ly + i * lh / bands) +
               "\" width=\"14\" height=\"" + detail::fmt(lh / bands + 0.5) + "\" fill=\"rgb(" +
               std::to_string(r) + "," + std::to_string(g) + "," + std::to_string(b) + ")\"/>\n";
    }
    char vbuf[48];
    std::snprintf(vbuf, sizeof(vbuf), "%.4g", vmax);
    out += "<text x=\"" + detail::fmt(lx + 18) + "\" y=\"" + detail::fmt(ly + 10) +
           "\" font-size=\"11\" font-family=\"sans-serif\">" + vbuf + "</text>\n";
    out += "<text x=\"" + detail::fmt(lx + 18) + "\" y=\"" + detail::fmt(ly + lh) +
           "\" font-size=\"11\" font-family=\"sans-serif\">0</text>\n";
    out += "<text x=\"" + detail::fmt(margin) + "\" y=\"" + detail::fmt(margin - 10) +
           "\" font-size=\"13\" font-family=\"sans-serif\">" + title + "</text>\n";
    out += "</svg>\n";
    return out;
}

} // namespace cobso::svg
