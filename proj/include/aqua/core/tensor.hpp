// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace aqua {

// Dense float32 image stored channel-major (C x H x W).
class Tensor {
public:
    Tensor() = default;
    Tensor(int c, int h, int w, float fill = 0.0f)
        : c_(c), h_(h), w_(w), data_(static_cast<std::size_t>(c) * h * w, fill) {
        if (c < 0 || h < 0 || w < 0) throw std::invalid_argument("Tensor: negative extent");
    }

    int channels() const noexcept { return c_; }
    int height() const noexcept { return h_; }
    int width() const noexcept { return w_; }
    std::size_t plane() const noexcept { return static_cast<std::size_t>(h_) * w_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float& at(int c, int y, int x) noexcept {
        assert(c < c_ && y < h_ && x < w_);
        return data_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x];
    }
    float at(int c, int y, int x) const noexcept {
        assert(c < c_ && y < h_ && x < w_);
        return data_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x];
    }

    float* data() noexcept { return data_.data(); }
    const float* data() const noexcept { return data_.data(); }
    float* channel(int c) noexcept { return data_.data() + c * plane(); }
    const float* channel(int c) const noexcept { return data_.data() + c * plane(); }
    std::span<float> values() noexcept { return data_; }
    std::span<const float> values() const noexcept { return data_; }
    std::vector<float>& storage() noexcept { return data_; }
    const std::vector<float>& storage() const noexcept { return data_; }

    bool same_shape(const Tensor& o) const noexcept { return c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }
    void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

    bool operator==(const Tensor& o) const = default;

private:
    int c_ = 0, h_ = 0, w_ = 0;
    std::vector<float> data_;
};

}  // namespace aqua
