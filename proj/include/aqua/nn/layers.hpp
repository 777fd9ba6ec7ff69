// SPDX-License-Identifier: Apache-2.0
//
// Minimal building blocks for the small convolutional networks in this
// project. Layers are stateless at inference; training code keeps its own
// activations and calls the matching backward function.
#pragma once

#include <string>
#include <vector>

#include "aqua/core/rng.hpp"
#include "aqua/core/tensor.hpp"

namespace aqua::nn {

struct Param {
    std::string name;
    std::vector<float> value;
    std::vector<float> grad;

    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::string name, int cin, int cout, int ksize);

    // He-uniform weights, zero bias.
    void init(Rng& rng);
    Tensor forward(const Tensor& in) const;
    // Accumulates parameter gradients; writes the input gradient when gin is non-null.
    void backward(const Tensor& in, const Tensor& gout, Tensor* gin);

    int in_channels() const noexcept { return cin_; }
    int out_channels() const noexcept { return cout_; }
    int ksize() const noexcept { return k_; }

    Param weight;
    Param bias;

private:
    int cin_ = 0, cout_ = 0, k_ = 3;
};

inline constexpr float kLeakySlope = 0.1f;

Tensor leaky_relu(const Tensor& x);
// Gradient through leaky ReLU given the pre-activation input.
void leaky_relu_backward(const Tensor& pre, Tensor& grad);

Tensor avg_pool2(const Tensor& x);
Tensor avg_pool2_backward(const Tensor& gout);
Tensor upsample2(const Tensor& x);
Tensor upsample2_backward(const Tensor& gout);

Tensor concat_channels(const Tensor& a, const Tensor& b);
// Splits a gradient of concat_channels(a, b) back into its two parts.
void split_channels(const Tensor& g, int ca, Tensor& ga, Tensor& gb);

// Adam with bias correction; decoupled from any particular network.
class Adam {
public:
    Adam(std::vector<Param*> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void zero_grad();
    void step();
    void set_lr(double lr) { lr_ = lr; }

private:
    std::vector<Param*> params_;
    std::vector<std::vector<float>> m_, v_;
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
};

bool all_finite(const std::vector<Param*>& params);
// FNV-1a over names and raw weight bytes; used to prove weights stayed frozen.
std::uint64_t hash_params(const std::vector<const Param*>& params);

}  // namespace aqua::nn
