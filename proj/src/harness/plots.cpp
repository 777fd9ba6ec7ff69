// SPDX-License-Identifier: Apache-2.0
#include "aqua/harness/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace aqua::harness::plot {

namespace {

constexpr double kW = 640, kH = 400, kL = 60, kR = 20, kT = 40, kB = 50;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string esc(const std::string& s) {
    std::string o;
    for (char c : s) {
        if (c == '<') o += "&lt;";
        else if (c == '>') o += "&gt;";
        else if (c == '&') o += "&amp;";
        else o += c;
    }
    return o;
}

struct Frame {
    double x0, x1, y0, y1;
    double px(double x) const { return kL + (x - x0) / (x1 - x0) * (kW - kL - kR); }
    double py(double y) const { return kH - kB - (y - y0) / (y1 - y0) * (kH - kT - kB); }
};

void widen(double& lo, double& hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) lo = 0, hi = 1;
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
}

std::string header(const std::string& title) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kW) + "\" height=\"" + num(kH) +
           "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
           "<text x=\"" + num(kW / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + esc(title) +
           "</text>\n";
}

std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel, bool xticks = true) {
    std::string s;
    s += "<line x1=\"" + num(kL) + "\" y1=\"" + num(kH - kB) + "\" x2=\"" + num(kW - kR) + "\" y2=\"" + num(kH - kB) +
         "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(kL) + "\" y1=\"" + num(kT) + "\" x2=\"" + num(kL) + "\" y2=\"" + num(kH - kB) +
         "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double y = f.y0 + (f.y1 - f.y0) * i / 4;
        s += "<text x=\"" + num(kL - 4) + "\" y=\"" + num(f.py(y) + 4) + "\" text-anchor=\"end\">" + num(y) +
             "</text>\n";
        if (xticks) {
            const double x = f.x0 + (f.x1 - f.x0) * i / 4;
            s += "<text x=\"" + num(f.px(x)) + "\" y=\"" + num(kH - kB + 14) + "\" text-anchor=\"middle\">" + num(x) +
                 "</text>\n";
        }
    }
    s += "<text x=\"" + num(kW / 2) + "\" y=\"" + num(kH - 12) + "\" text-anchor=\"middle\">" + esc(xlabel) +
         "</text>\n";
    s += "<text x=\"14\" y=\"" + num(kH / 2) + "\" transform=\"rotate(-90 14 " + num(kH / 2) +
         ")\" text-anchor=\"middle\">" + esc(ylabel) + "</text>\n";
    return s;
}

std::string legend(const std::vector<Series>& series) {
    std::string s;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double y = kT + 6 + 14.0 * static_cast<double>(i);
        s += "<rect x=\"" + num(kW - kR - 130) + "\" y=\"" + num(y - 8) + "\" width=\"10\" height=\"10\" fill=\"" +
             series[i].color + "\"/>\n";
        s += "<text x=\"" + num(kW - kR - 115) + "\" y=\"" + num(y + 1) + "\">" + esc(series[i].name) + "</text>\n";
    }
    return s;
}

}  // namespace

std::string scatter(const std::string& title, const std::string& ylabel, const std::vector<Series>& series,
                    std::optional<double> hline, const std::string& hline_label) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series) {
        for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
        for (double v : s.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
    }
    if (hline) y0 = std::min(y0, *hline), y1 = std::max(y1, *hline);
    widen(x0, x1);
    widen(y0, y1);
    const Frame f{x0, x1, y0, y1};
    std::string s = header(title) + axes(f, "image index", ylabel);
    for (const auto& se : series)
        for (std::size_t i = 0; i < se.x.size() && i < se.y.size(); ++i)
            s += "<circle cx=\"" + num(f.px(se.x[i])) + "\" cy=\"" + num(f.py(se.y[i])) + "\" r=\"2\" fill=\"" +
                 se.color + "\" fill-opacity=\"0.7\"/>\n";
    if (hline) {
        s += "<line x1=\"" + num(kL) + "\" y1=\"" + num(f.py(*hline)) + "\" x2=\"" + num(kW - kR) + "\" y2=\"" +
             num(f.py(*hline)) + "\" stroke=\"black\" stroke-dasharray=\"5,3\"/>\n";
        s += "<text x=\"" + num(kL + 4) + "\" y=\"" + num(f.py(*hline) - 4) + "\">" + esc(hline_label) + "</text>\n";
    }
    return s + legend(series) + "</svg>\n";
}

std::string bars(const std::string& title, const std::vector<std::string>& categories,
                 const std::vector<Series>& series) {
    double y1 = 0;
    for (const auto& se : series)
        for (double v : se.y) y1 = std::max(y1, v);
    if (y1 <= 0) y1 = 1;
    const Frame f{0, 1, 0, y1 * 1.1};
    std::string s = header(title) + axes(f, "", "", false);
    const double gw = (kW - kL - kR) / std::max<std::size_t>(1, categories.size());
    const double bw = gw * 0.8 / std::max<std::size_t>(1, series.size());
    for (std::size_t j = 0; j < categories.size(); ++j) {
        const double gx = kL + gw * static_cast<double>(j) + gw * 0.1;
        for (std::size_t i = 0; i < series.size(); ++i) {
            if (j >= series[i].y.size()) continue;
            const double v = series[i].y[j];
            s += "<rect x=\"" + num(gx + bw * static_cast<double>(i)) + "\" y=\"" + num(f.py(v)) + "\" width=\"" +
                 num(bw * 0.9) + "\" height=\"" + num(f.py(0) - f.py(v)) + "\" fill=\"" + series[i].color + "\"/>\n";
            s += "<text x=\"" + num(gx + bw * (static_cast<double>(i) + 0.45)) + "\" y=\"" + num(f.py(v) - 3) +
                 "\" text-anchor=\"middle\" font-size=\"9\">" + num(v) + "</text>\n";
        }
        s += "<text x=\"" + num(gx + gw * 0.4) + "\" y=\"" + num(kH - kB + 14) + "\" text-anchor=\"middle\">" +
             esc(categories[j]) + "</text>\n";
    }
    return s + legend(series) + "</svg>\n";
}

std::string histograms(const std::string& title, const std::vector<Series>& samples, int bins,
                       std::optional<double> vline) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& se : samples)
        for (double v : se.y) lo = std::min(lo, v), hi = std::max(hi, v);
    widen(lo, hi);
    std::vector<std::vector<double>> freq;
    double fmax = 0;
    for (const auto& se : samples) {
        std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
        for (double v : se.y) {
            int b = static_cast<int>((v - lo) / (hi - lo) * bins);
            h[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))] += 1.0;
        }
        for (double& v : h) {
            v /= std::max<std::size_t>(1, se.y.size());
            fmax = std::max(fmax, v);
        }
        freq.push_back(std::move(h));
    }
    const Frame f{lo, hi, 0, fmax > 0 ? fmax * 1.1 : 1};
    std::string s = header(title) + axes(f, "value", "fraction");
    const double bw = (hi - lo) / bins;
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (int b = 0; b < bins; ++b) {
            const double v = freq[i][static_cast<std::size_t>(b)];
            if (v <= 0) continue;
            const double x = lo + bw * b;
            s += "<rect x=\"" + num(f.px(x)) + "\" y=\"" + num(f.py(v)) + "\" width=\"" + num(f.px(x + bw) - f.px(x)) +
                 "\" height=\"" + num(f.py(0) - f.py(v)) + "\" fill=\"" + samples[i].color +
                 "\" fill-opacity=\"0.5\"/>\n";
        }
    if (vline && *vline >= lo && *vline <= hi)
        s += "<line x1=\"" + num(f.px(*vline)) + "\" y1=\"" + num(kT) + "\" x2=\"" + num(f.px(*vline)) + "\" y2=\"" +
             num(kH - kB) + "\" stroke=\"black\" stroke-dasharray=\"5,3\"/>\n";
    return s + legend(samples) + "</svg>\n";
}

std::string lines(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                  const std::vector<Series>& series) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& se : series) {
        for (double v : se.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
        for (double v : se.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
    }
    widen(x0, x1);
    widen(y0, y1);
    const Frame f{x0, x1, y0, y1};
    std::string s = header(title) + axes(f, xlabel, ylabel);
    for (const auto& se : series) {
        std::string pts;
        for (std::size_t i = 0; i < se.x.size() && i < se.y.size(); ++i)
            pts += num(f.px(se.x[i])) + "," + num(f.py(se.y[i])) + " ";
        s += "<polyline fill=\"none\" stroke=\"" + se.color + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
        for (std::size_t i = 0; i < se.x.size() && i < se.y.size(); ++i)
            s += "<circle cx=\"" + num(f.px(se.x[i])) + "\" cy=\"" + num(f.py(se.y[i])) + "\" r=\"3\" fill=\"" +
                 se.color + "\"/>\n";
    }
    return s + legend(series) + "</svg>\n";
}

}  // namespace aqua::harness::plot
