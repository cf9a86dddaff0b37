// SPDX-License-Identifier: Apache-2.0

#include "pdeblur/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "pdeblur/autograd.hpp"

namespace pdeblur::metrics {

std::string to_string(MacCategory c) {
    switch (c) {
    case MacCategory::Conv: return "conv";
    case MacCategory::PdeLayer: return "pde_layer";
    case MacCategory::Other: return "other";
    }
    return "unknown";
}

std::uint64_t pde_macs_per_pixel(pde::VelocityMode mode) { return mode == pde::VelocityMode::Spatial ? 16 : 12; }

std::uint64_t pde_layer_macs(const Shape& shape, std::size_t K, pde::VelocityMode mode) {
    const std::uint64_t n = shape.numel();
    return n * (static_cast<std::uint64_t>(K) * pde_macs_per_pixel(mode) + 1);
}

std::uint64_t conv2d_macs(const Shape& input, std::size_t out_channels) {
    return static_cast<std::uint64_t>(input.batch) * out_channels * input.height * input.width * input.channels * 9;
}

std::string format_gmacs(std::uint64_t macs) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", static_cast<double>(macs) / 1e9);
    return buf;
}

Real psnr(const FeatureMap& a, const FeatureMap& b) {
    require_same_shape(a, b, "psnr");
    if (a.size() == 0) throw ContractError("psnr: empty images");
    Real acc = 0;
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Real d = x[i] - y[i];
        acc += d * d;
    }
    if (acc == 0) return std::numeric_limits<Real>::infinity();
    const Real mse = acc / static_cast<Real>(x.size());
    return 10 * std::log10(1 / mse);
}

std::string to_string(SsimMode mode) { return mode == SsimMode::Gaussian11 ? "gaussian11" : "block8"; }

SsimMode ssim_mode_from_string(const std::string& name) {
    if (name == "gaussian11") return SsimMode::Gaussian11;
    if (name == "block8") return SsimMode::Block8;
    throw ContractError("unknown ssim mode '" + name + "'");
}

namespace {

Real ssim_from_moments(Real mx, Real my, Real sxx, Real syy, Real sxy) {
    return ((2 * mx * my + kSsimC1) * (2 * sxy + kSsimC2)) / ((mx * mx + my * my + kSsimC1) * (sxx + syy + kSsimC2));
}

std::vector<Real> gaussian_window(std::size_t size, Real sigma) {
    std::vector<Real> w(size * size);
    const Real centre = static_cast<Real>(size - 1) / 2;
    Real total = 0;
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const Real dy = static_cast<Real>(y) - centre;
            const Real dx = static_cast<Real>(x) - centre;
            w[y * size + x] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            total += w[y * size + x];
        }
    }
    for (Real& v : w) v /= total;
    return w;
}

} // namespace

std::size_t ssim_window(SsimMode mode) { return mode == SsimMode::Gaussian11 ? 11 : 8; }

Real ssim(const FeatureMap& a, const FeatureMap& b, SsimMode mode) {
    require_same_shape(a, b, "ssim");
    const Shape& s = a.shape();
    const std::size_t win = ssim_window(mode);
    if (s.height < win || s.width < win) {
        throw ContractError("ssim: image " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                            " is smaller than the " + std::to_string(win) + "x" + std::to_string(win) + " window");
    }
    static const std::vector<Real> gauss = gaussian_window(11, 1.5);

    Real total = 0;
    std::size_t windows = 0;
    for (std::size_t bi = 0; bi < s.batch; ++bi) {
        for (std::size_t c = 0; c < s.channels; ++c) {
            const ConstPlane pa = a.plane(bi, c);
            const ConstPlane pb = b.plane(bi, c);
            const std::size_t stride = mode == SsimMode::Gaussian11 ? 1 : win;
            for (std::size_t y0 = 0; y0 + win <= s.height; y0 += stride) {
                for (std::size_t x0 = 0; x0 + win <= s.width; x0 += stride) {
                    Real mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
                    for (std::size_t y = 0; y < win; ++y) {
                        for (std::size_t x = 0; x < win; ++x) {
                            const Real wgt = mode == SsimMode::Gaussian11 ? gauss[y * win + x]
                                                                          : Real(1) / static_cast<Real>(win * win);
                            const Real va = pa.at(y0 + y, x0 + x);
                            const Real vb = pb.at(y0 + y, x0 + x);
                            mx += wgt * va;
                            my += wgt * vb;
                            xx += wgt * va * va;
                            yy += wgt * vb * vb;
                            xy += wgt * va * vb;
                        }
                    }
                    total += ssim_from_moments(mx, my, xx - mx * mx, yy - my * my, xy - mx * my);
                    ++windows;
                }
            }
        }
    }
    return total / static_cast<Real>(windows);
}

GradNormRecord grad_norm(const autograd::GradientStore& grads, std::size_t epoch, std::size_t step) {
    GradNormRecord rec;
    rec.epoch = epoch;
    rec.step = step;
    Real total_sq = 0;
    const auto module_norm = [&](const std::string& name, auto&& visit) {
        Real sq = 0;
        visit([&](std::span<const Real> t) {
            for (Real g : t) sq += g * g;
        });
        rec.per_module.emplace_back(name, std::sqrt(sq));
        total_sq += sq;
    };
    for (std::size_t i = 0; i < grads.params.convs.size(); ++i) {
        const auto& cg = grads.params.convs[i];
        module_norm("conv[" + std::to_string(i) + "]", [&](auto&& f) {
            f(std::span<const Real>(cg.weight));
            f(std::span<const Real>(cg.bias));
        });
    }
    for (std::size_t i = 0; i < grads.params.pdes.size(); ++i) {
        const auto& pg = grads.params.pdes[i];
        module_norm("pde[" + std::to_string(i) + "]",
                    [&](auto&& f) { pg.for_each_tensor([&](std::string_view, std::span<const Real> t) { f(t); }); });
    }
    rec.global_norm = std::sqrt(total_sq);
    rec.finite = std::isfinite(rec.global_norm);
    return rec;
}

} // namespace pdeblur::metrics
