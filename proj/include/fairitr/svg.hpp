// Copyright 2026 the fairitr authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace fairitr {

/// Minimal deterministic SVG line plots: axes, ticks, polylines, legend.
/// Kept tiny on purpose so result files need no plotting toolchain.
namespace svg {

struct Series {
    std::string label;
    std::string color;
    std::vector<double> x;
    std::vector<double> y;
};

struct Panel {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
};

namespace detail {

inline std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline void render_panel(std::string& out, const Panel& panel, double ox, double oy, double width,
                         double height) {
    const double ml = 52.0, mr = 14.0, mt = 28.0, mb = 40.0;
    const double px = ox + ml, py = oy + mt;
    const double pw = width - ml - mr, ph = height - mt - mb;

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : panel.series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (xmin > xmax) {
        xmin = 0.0;
        xmax = 1.0;
    }
    if (ymin > ymax) {
        ymin = 0.0;
        ymax = 1.0;
    }
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) {
        ymax += 0.5;
        ymin -= 0.5;
    }
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto sx = [&](double v) { return px + (v - xmin) / (xmax - xmin) * pw; };
    auto sy = [&](double v) { return py + ph - (v - ymin) / (ymax - ymin) * ph; };

    out += "<rect x='" + fmt(px) + "' y='" + fmt(py) + "' width='" + fmt(pw) + "' height='" +
           fmt(ph) + "' fill='none' stroke='#444' stroke-width='1'/>\n";
    out += "<text x='" + fmt(px + pw / 2) + "' y='" + fmt(oy + 18) +
           "' text-anchor='middle' font-size='13' font-family='sans-serif'>" + panel.title +
           "</text>\n";
    for (int t = 0; t <= 4; ++t) {
        const double fx = xmin + (xmax - xmin) * t / 4.0;
        const double fy = ymin + (ymax - ymin) * t / 4.0;
        out += "<line x1='" + fmt(sx(fx)) + "' y1='" + fmt(py + ph) + "' x2='" + fmt(sx(fx)) +
               "' y2='" + fmt(py + ph + 4) + "' stroke='#444'/>\n";
        out += "<text x='" + fmt(sx(fx)) + "' y='" + fmt(py + ph + 16) +
               "' text-anchor='middle' font-size='10' font-family='sans-serif'>" + fmt(fx) +
               "</text>\n";
        out += "<line x1='" + fmt(px - 4) + "' y1='" + fmt(sy(fy)) + "' x2='" + fmt(px) + "' y2='" +
               fmt(sy(fy)) + "' stroke='#444'/>\n";
        out += "<text x='" + fmt(px - 6) + "' y='" + fmt(sy(fy) + 3) +
               "' text-anchor='end' font-size='10' font-family='sans-serif'>" + fmt(fy) +
               "</text>\n";
    }
    out += "<text x='" + fmt(px + pw / 2) + "' y='" + fmt(py + ph + 32) +
           "' text-anchor='middle' font-size='11' font-family='sans-serif'>" + panel.x_label +
           "</text>\n";
    out += "<text x='" + fmt(ox + 14) + "' y='" + fmt(py + ph / 2) +
           "' text-anchor='middle' font-size='11' font-family='sans-serif' transform='rotate(-90 " +
           fmt(ox + 14) + " " + fmt(py + ph / 2) + ")'>" + panel.y_label + "</text>\n";

    double legend_y = py + 12;
    for (const auto& s : panel.series) {
        if (s.x.empty()) continue;
        std::string points;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            points += fmt(sx(s.x[i])) + "," + fmt(sy(s.y[i])) + " ";
        }
        out += "<polyline fill='none' stroke='" + s.color + "' stroke-width='1.6' points='" +
               points + "'/>\n";
        out += "<line x1='" + fmt(px + pw - 96) + "' y1='" + fmt(legend_y) + "' x2='" +
               fmt(px + pw - 80) + "' y2='" + fmt(legend_y) + "' stroke='" + s.color +
               "' stroke-width='1.6'/>\n";
        out += "<text x='" + fmt(px + pw - 76) + "' y='" + fmt(legend_y + 3) +
               "' font-size='10' font-family='sans-serif'>" + s.label + "</text>\n";
        legend_y += 13;
    }
}

} // namespace detail

/// Render panels side by side into one SVG document.
inline std::string render(const std::vector<Panel>& panels, double panel_width = 460.0,
                          double panel_height = 340.0) {
    const double width = panel_width * static_cast<double>(panels.size());
    std::string out = "<svg xmlns='http://www.w3.org/2000/svg' width='" + detail::fmt(width) +
                      "' height='" + detail::fmt(panel_height) + "' viewBox='0 0 " +
                      detail::fmt(width) + " " + detail::fmt(panel_height) + "'>\n";
    out += "<rect width='100%' height='100%' fill='white'/>\n";
    for (std::size_t i = 0; i < panels.size(); ++i)
        detail::render_panel(out, panels[i], panel_width * static_cast<double>(i), 0.0, panel_width,
                             panel_height);
    out += "</svg>\n";
    return out;
}

} // namespace svg

} // namespace fairitr
