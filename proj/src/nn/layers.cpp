// SPDX-License-Identifier: Apache-2.0
#include "aqua/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "aqua/kernels/kernels.hpp"

namespace aqua::nn {

namespace {

std::vector<float> pad_planes(const Tensor& in, int p) {
    const int h = in.height(), w = in.width();
    const int hp = h + 2 * p, wp = w + 2 * p;
    std::vector<float> out(static_cast<std::size_t>(in.channels()) * hp * wp, 0.0f);
    for (int c = 0; c < in.channels(); ++c) {
        const float* src = in.channel(c);
        float* dst = out.data() + static_cast<std::size_t>(c) * hp * wp;
        for (int y = 0; y < h; ++y) std::copy(src + y * w, src + (y + 1) * w, dst + (y + p) * wp + p);
    }
    return out;
}

}  // namespace

Conv2d::Conv2d(std::string name, int cin, int cout, int ksize) : cin_(cin), cout_(cout), k_(ksize) {
    if (cin <= 0 || cout <= 0 || ksize <= 0 || ksize % 2 == 0)
        throw std::invalid_argument("Conv2d: bad shape for " + name);
    const std::size_t nw = static_cast<std::size_t>(cout) * cin * ksize * ksize;
    weight = Param{name + ".weight", std::vector<float>(nw, 0.0f), std::vector<float>(nw, 0.0f)};
    bias = Param{name + ".bias", std::vector<float>(cout, 0.0f), std::vector<float>(cout, 0.0f)};
}

void Conv2d::init(Rng& rng) {
    const double fan_in = static_cast<double>(cin_) * k_ * k_;
    const double bound = std::sqrt(6.0 / fan_in) / std::sqrt(1.0 + kLeakySlope * kLeakySlope);
    for (float& w : weight.value) w = static_cast<float>(rng.uniform(-bound, bound));
    std::fill(bias.value.begin(), bias.value.end(), 0.0f);
}

Tensor Conv2d::forward(const Tensor& in) const {
    if (in.channels() != cin_) throw std::invalid_argument("Conv2d " + weight.name + ": channel mismatch");
    kernels::ConvShape s{cin_, cout_, in.height(), in.width(), k_};
    const std::vector<float> padded = pad_planes(in, s.pad());
    Tensor out(cout_, in.height(), in.width());
    kernels::active().conv_forward(padded.data(), weight.value.data(), bias.value.data(), s, out.data());
    return out;
}

void Conv2d::backward(const Tensor& in, const Tensor& gout, Tensor* gin) {
    kernels::ConvShape s{cin_, cout_, in.height(), in.width(), k_};
    const auto& kt = kernels::active();
    {
        const std::vector<float> padded = pad_planes(in, s.pad());
        kt.conv_weight_grad(padded.data(), gout.data(), s, weight.grad.data(), bias.grad.data());
    }
    if (!gin) return;
    // Input gradient is a correlation of the padded output gradient with the
    // spatially flipped, channel-transposed kernel.
    const int kk = k_ * k_;
    std::vector<float> flipped(weight.value.size());
    for (int co = 0; co < cout_; ++co)
        for (int ci = 0; ci < cin_; ++ci)
            for (int i = 0; i < kk; ++i)
                flipped[(static_cast<std::size_t>(ci) * cout_ + co) * kk + (kk - 1 - i)] =
                    weight.value[(static_cast<std::size_t>(co) * cin_ + ci) * kk + i];
    kernels::ConvShape st{cout_, cin_, in.height(), in.width(), k_};
    const std::vector<float> gpad = pad_planes(gout, st.pad());
    *gin = Tensor(cin_, in.height(), in.width());
    kt.conv_forward(gpad.data(), flipped.data(), nullptr, st, gin->data());
}

Tensor leaky_relu(const Tensor& x) {
    Tensor y = x;
    for (float& v : y.storage()) v = v > 0.0f ? v : v * kLeakySlope;
    return y;
}

void leaky_relu_backward(const Tensor& pre, Tensor& grad) {
    const auto& p = pre.storage();
    auto& g = grad.storage();
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!(p[i] > 0.0f)) g[i] *= kLeakySlope;
}

Tensor avg_pool2(const Tensor& x) {
    if (x.height() % 2 || x.width() % 2) throw std::invalid_argument("avg_pool2: odd extent");
    Tensor y(x.channels(), x.height() / 2, x.width() / 2);
    for (int c = 0; c < x.channels(); ++c)
        for (int yy = 0; yy < y.height(); ++yy)
            for (int xx = 0; xx < y.width(); ++xx)
                y.at(c, yy, xx) = 0.25f * ((x.at(c, 2 * yy, 2 * xx) + x.at(c, 2 * yy, 2 * xx + 1)) +
                                           (x.at(c, 2 * yy + 1, 2 * xx) + x.at(c, 2 * yy + 1, 2 * xx + 1)));
    return y;
}

Tensor avg_pool2_backward(const Tensor& g) {
    Tensor out(g.channels(), g.height() * 2, g.width() * 2);
    for (int c = 0; c < g.channels(); ++c)
        for (int y = 0; y < out.height(); ++y)
            for (int x = 0; x < out.width(); ++x) out.at(c, y, x) = 0.25f * g.at(c, y / 2, x / 2);
    return out;
}

Tensor upsample2(const Tensor& x) {
    Tensor y(x.channels(), x.height() * 2, x.width() * 2);
    for (int c = 0; c < x.channels(); ++c)
        for (int yy = 0; yy < y.height(); ++yy)
            for (int xx = 0; xx < y.width(); ++xx) y.at(c, yy, xx) = x.at(c, yy / 2, xx / 2);
    return y;
}

Tensor upsample2_backward(const Tensor& g) {
    Tensor out(g.channels(), g.height() / 2, g.width() / 2);
    for (int c = 0; c < out.channels(); ++c)
        for (int y = 0; y < out.height(); ++y)
            for (int x = 0; x < out.width(); ++x)
                out.at(c, y, x) = (g.at(c, 2 * y, 2 * x) + g.at(c, 2 * y, 2 * x + 1)) +
                                  (g.at(c, 2 * y + 1, 2 * x) + g.at(c, 2 * y + 1, 2 * x + 1));
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.height() != b.height() || a.width() != b.width()) throw std::invalid_argument("concat: extent mismatch");
    Tensor out(a.channels() + b.channels(), a.height(), a.width());
    std::copy(a.storage().begin(), a.storage().end(), out.storage().begin());
    std::copy(b.storage().begin(), b.storage().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

void split_channels(const Tensor& g, int ca, Tensor& ga, Tensor& gb) {
    ga = Tensor(ca, g.height(), g.width());
    gb = Tensor(g.channels() - ca, g.height(), g.width());
    auto mid = g.storage().begin() + static_cast<std::ptrdiff_t>(ga.size());
    std::copy(g.storage().begin(), mid, ga.storage().begin());
    std::copy(mid, g.storage().end(), gb.storage().begin());
}

Adam::Adam(std::vector<Param*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const Param* p : params_) {
        m_.emplace_back(p->value.size(), 0.0f);
        v_.emplace_back(p->value.size(), 0.0f);
    }
}

void Adam::zero_grad() {
    for (Param* p : params_) p->zero_grad();
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    const float step = static_cast<float>(lr_ * std::sqrt(c2) / c1);
    const float b1 = static_cast<float>(b1_), b2 = static_cast<float>(b2_);
    const float eps = static_cast<float>(eps_ * std::sqrt(c2));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& w = params_[i]->value;
        const auto& g = params_[i]->grad;
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = b1 * m[j] + (1.0f - b1) * g[j];
            v[j] = b2 * v[j] + (1.0f - b2) * (g[j] * g[j]);
            w[j] -= step * m[j] / (std::sqrt(v[j]) + eps);
        }
    }
}

bool all_finite(const std::vector<Param*>& params) {
    for (const Param* p : params)
        for (float v : p->value)
            if (!std::isfinite(v)) return false;
    return true;
}

std::uint64_t hash_params(const std::vector<const Param*>& params) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const Param* p : params) {
        h = fnv1a64(p->name, h);
        h = fnv1a64(p->value.data(), p->value.size() * sizeof(float), h);
    }
    return h;
}

}  // namespace aqua::nn
