// SPDX-License-Identifier: Apache-2.0
//
// Minimal static SVG charts for the report stage. Output is a pure function
// of the inputs.
#pragma once

#include <optional>
#include <string>
#include <vector>

namespace aqua::harness::plot {

struct Series {
    std::string name;
    std::string color;  // any SVG colour
    std::vector<double> x, y;
};

// Scatter plot with an optional horizontal threshold line.
std::string scatter(const std::string& title, const std::string& ylabel, const std::vector<Series>& series,
                    std::optional<double> hline = std::nullopt, const std::string& hline_label = {});

// Grouped bars: one group per category, one bar per series (series[i].y[j]
// is the value of series i in category j; x is ignored).
std::string bars(const std::string& title, const std::vector<std::string>& categories,
                 const std::vector<Series>& series);

// Overlaid histograms of two or more samples on a shared range.
std::string histograms(const std::string& title, const std::vector<Series>& samples, int bins = 20,
                       std::optional<double> vline = std::nullopt);

// Lines through (x, y) points per series.
std::string lines(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                  const std::vector<Series>& series);

}  // namespace aqua::harness::plot
