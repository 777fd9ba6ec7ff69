// SPDX-License-Identifier: Apache-2.0
#include "aqua/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aqua::metrics {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("metric: shape mismatch");
    if (a.empty()) throw std::invalid_argument("metric: empty image");
}

struct Moments {
    double mean = 0;
    double var = 0;  // sample variance (n - 1)
    std::size_t n = 0;
};

Moments moments(const std::vector<double>& v) {
    Moments m;
    m.n = v.size();
    for (double x : v) m.mean += x;
    m.mean /= static_cast<double>(m.n);
    for (double x : v) m.var += (x - m.mean) * (x - m.mean);
    m.var /= static_cast<double>(m.n - 1);
    return m;
}

}  // namespace

double mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b);
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.storage()[i]) - b.storage()[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

double mse(const synth::Patch& a, const synth::Patch& b) { return mse(a.pixels, b.pixels); }

double pcc(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b);
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a.storage()[i];
        mb += b.storage()[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a.storage()[i] - ma, db = b.storage()[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0 || sbb <= 0) throw std::domain_error("pcc: zero-variance input");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double pcc(const synth::Patch& a, const synth::Patch& b) { return pcc(a.pixels, b.pixels); }

double psnr(const Tensor& a, const Tensor& b, double max_val) {
    const double m = mse(a, b);
    if (m <= 0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(max_val * max_val / m));
}

double psnr(const synth::Patch& a, const synth::Patch& b, double max_val) { return psnr(a.pixels, b.pixels, max_val); }

double welch_t(const std::vector<double>& pos, const std::vector<double>& neg) {
    if (pos.size() < 2 || neg.size() < 2) throw std::invalid_argument("welch_t: need >= 2 samples per group");
    const Moments p = moments(pos), q = moments(neg);
    const double se2 = p.var / static_cast<double>(p.n) + q.var / static_cast<double>(q.n);
    if (!(se2 > 0)) {
        if (p.mean == q.mean) return 0.0;
        throw std::domain_error("welch_t: both groups have zero variance");
    }
    return std::abs(p.mean - q.mean) / std::sqrt(se2);
}

double kl_divergence(const std::vector<double>& pos, const std::vector<double>& neg, int bins) {
    if (pos.empty() || neg.empty()) throw std::invalid_argument("kl_divergence: empty group");
    if (bins < 1) throw std::invalid_argument("kl_divergence: bins < 1");
    double lo = pos[0], hi = pos[0];
    for (const auto* g : {&pos, &neg})
        for (double v : *g) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    auto histogram = [&](const std::vector<double>& v) {
        std::vector<double> h(bins, 0.0);
        for (double x : v) {
            int b = 0;
            if (hi > lo) b = std::min(bins - 1, static_cast<int>((x - lo) / (hi - lo) * bins));
            h[b] += 1.0;
        }
        double total = 0;
        for (double& c : h) total += (c = c / static_cast<double>(v.size()) + kKlEpsilon);
        for (double& c : h) c /= total;
        return h;
    };
    const auto p = histogram(pos), q = histogram(neg);
    double kl = 0;
    for (int i = 0; i < bins; ++i) kl += p[i] * std::log(p[i] / q[i]);
    return std::max(0.0, kl);
}

double auc(const std::vector<double>& pos, const std::vector<double>& neg) {
    if (pos.empty() || neg.empty()) throw std::invalid_argument("auc: empty group");
    std::vector<double> n = neg;
    std::sort(n.begin(), n.end());
    double wins = 0;
    for (double p : pos) {
        const auto lo = std::lower_bound(n.begin(), n.end(), p);
        const auto hi = std::upper_bound(n.begin(), n.end(), p);
        wins += static_cast<double>(lo - n.begin()) + 0.5 * static_cast<double>(hi - lo);
    }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

double Confusion::accuracy() const noexcept { return total() ? static_cast<double>(tp + tn) / total() : 0.0; }
double Confusion::sensitivity() const noexcept { return tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0; }
double Confusion::specificity() const noexcept { return tn + fp ? static_cast<double>(tn) / (tn + fp) : 0.0; }

Confusion confusion(const std::vector<LabeledScore>& records, double threshold) {
    Confusion c;
    for (const auto& r : records) {
        const bool reject = r.score >= threshold;
        if (r.positive)
            (reject ? c.tp : c.fn)++;
        else
            (reject ? c.fp : c.tn)++;
    }
    return c;
}

SeparationReport separation(std::string name, const std::vector<double>& pos, const std::vector<double>& neg) {
    SeparationReport r;
    r.metric_name = std::move(name);
    r.abs_t = welch_t(pos, neg);
    r.kl_divergence = kl_divergence(pos, neg);
    r.auc = auc(pos, neg);
    return r;
}

NucleiStats count_nuclei(const synth::Patch& p) {
    if (p.domain != synth::Domain::HE) throw std::invalid_argument("count_nuclei: expects an HE patch");
    const Tensor& t = p.pixels;
    const int h = t.height(), w = t.width();
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(h) * w, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double blue = t.at(2, y, x) - 0.5 * (static_cast<double>(t.at(0, y, x)) + t.at(1, y, x));
            mask[static_cast<std::size_t>(y) * w + x] = blue > kBluenessThreshold;
        }
    NucleiStats s;
    std::vector<int> stack;
    long total_area = 0;
    for (int start = 0; start < h * w; ++start) {
        if (!mask[start]) continue;
        int size = 0;
        mask[start] = 0;
        stack.push_back(start);
        while (!stack.empty()) {
            const int idx = stack.back();
            stack.pop_back();
            ++size;
            const int y = idx / w, x = idx % w;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    const int n = ny * w + nx;
                    if (mask[n]) {
                        mask[n] = 0;
                        stack.push_back(n);
                    }
                }
        }
        if (size >= kMinComponentPx) {
            ++s.count;
            total_area += size;
        }
    }
    s.count_per_unit_area = static_cast<double>(s.count) / (static_cast<double>(h) * w);
    s.mean_area_px = s.count ? static_cast<double>(total_area) / s.count : 0.0;
    return s;
}

}  // namespace aqua::metrics
