// SPDX-License-Identifier: Apache-2.0
//
// Restoration metrics, gradient-norm statistics and the multiply-accumulate
// cost model.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pdeblur/pde_layer.hpp"
#include "pdeblur/tensor.hpp"

namespace pdeblur::autograd {
struct GradientStore;
}

namespace pdeblur::metrics {

enum class MacCategory { Conv = 0, PdeLayer = 1, Other = 2 };

std::string to_string(MacCategory c);

class MacCounter {
public:
    void add(MacCategory category, std::uint64_t count) { counts_[static_cast<std::size_t>(category)] += count; }
    std::uint64_t get(MacCategory category) const { return counts_[static_cast<std::size_t>(category)]; }
    std::uint64_t total() const { return counts_[0] + counts_[1] + counts_[2]; }
    void reset() { counts_ = {}; }

private:
    std::array<std::uint64_t, 3> counts_{};
};

/// Multiplies/divides per pixel per iteration of the PDE update: coefficient
/// formation (Ax, Ay, Bx, By, 2Bx, 2By), the four stencil products, the
/// 2 dt f term and the division by L make 12; spatially varying velocity adds
/// the two central differences, their 2 dt scaling and the product with H[k].
std::uint64_t pde_macs_per_pixel(pde::VelocityMode mode);

/// batch*C*H*W * (K * per_pixel + 1); the +1 is the one-time scale*I of f(I).
std::uint64_t pde_layer_macs(const Shape& shape, std::size_t K, pde::VelocityMode mode);

/// 3x3 convolution, stride 1: batch * out_channels * H * W * in_channels * 9.
std::uint64_t conv2d_macs(const Shape& input, std::size_t out_channels);

/// GMACs with three decimals.
std::string format_gmacs(std::uint64_t macs);

/// 10 log10(1 / MSE) for peak 1.0. Identical inputs give +infinity.
Real psnr(const FeatureMap& a, const FeatureMap& b);

enum class SsimMode { Gaussian11, Block8 };

std::string to_string(SsimMode mode);
SsimMode ssim_mode_from_string(const std::string& name);

/// Window side: 11 for Gaussian11, 8 for Block8.
std::size_t ssim_window(SsimMode mode);

inline constexpr Real kSsimC1 = 0.01 * 0.01;
inline constexpr Real kSsimC2 = 0.03 * 0.03;

/// Mean SSIM over windows, channels and batch. Gaussian11 slides an 11x11
/// sigma=1.5 window over every valid position; Block8 tiles non-overlapping
/// 8x8 blocks. Throws ContractError when the image is smaller than the window.
Real ssim(const FeatureMap& a, const FeatureMap& b, SsimMode mode = SsimMode::Gaussian11);

struct GradNormRecord {
    std::size_t epoch = 0;
    std::size_t step = 0;
    Real global_norm = 0;
    std::vector<std::pair<std::string, Real>> per_module;
    bool finite = true;
};

GradNormRecord grad_norm(const autograd::GradientStore& grads, std::size_t epoch = 0, std::size_t step = 0);

} // namespace pdeblur::metrics
