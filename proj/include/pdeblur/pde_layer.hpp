// SPDX-License-Identifier: Apache-2.0
//
// Advection-diffusion global feature layer.
//
// The layer evolves a feature map H under
//
//     dH/dt = div(D grad H) - div(v H) + f(I)
//
// discretized with a three-level (leapfrog / Du Fort-Frankel style) scheme:
//
//   L H[k+1] = M H[k-1] - 2 (u_x + v_y) dt H[k] + 2 dt f
//              + (2Bx - Ax) H[k](x+1,y) + (2Bx + Ax) H[k](x-1,y)
//              + (2By - Ay) H[k](x,y+1) + (2By + Ay) H[k](x,y-1)
//
//   L = 1 + 2Bx + 2By,  M = 1 - 2Bx - 2By,
//   Ax = u dt / (2 dx), Ay = v dt / (2 dy), Bx = Dx dt / dx^2, By = Dy dt / dy^2,
//   u_x, v_y = central differences of the velocity fields.
//
// H[-1] is taken equal to H[0] (the layer input) and f = scale * input + bias is
// evaluated once. The update is evaluated in the algebraically equivalent
// increment form H[k+1] = H[k-1] + (...)/L so that constant fields and the
// zero-parameter identity are reproduced bit-exactly.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pdeblur/tensor.hpp"

namespace pdeblur::metrics {
class MacCounter;
}

namespace pdeblur::pde {

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class VelocityMode { Uniform, Spatial };

std::string to_string(VelocityMode mode);
VelocityMode velocity_mode_from_string(const std::string& name);

/// Nonnegative reparameterization of the diffusion coefficients, D = log(1 + e^raw).
/// raw = -inf maps to exactly 0 and is how a fully "off" layer is expressed.
Real softplus(Real raw);
/// d softplus / d raw (the logistic sigmoid).
Real softplus_grad(Real raw);

/// Glorot/Xavier uniform bound sqrt(6 / (fan_in + fan_out)).
Real xavier_bound(std::size_t fan_in, std::size_t fan_out);

struct PdeLayerParams {
    std::size_t channels = 0;
    std::size_t height = 0; ///< spatial resolution the velocity fields are defined on
    std::size_t width = 0;
    VelocityMode velocity_mode = VelocityMode::Spatial;

    std::vector<ScalarField2D> u; ///< per channel; 1x1 in Uniform mode
    std::vector<ScalarField2D> v;
    std::vector<Real> dx_raw;
    std::vector<Real> dy_raw;
    std::vector<Real> source_scale;
    std::vector<Real> source_bias;

    /// All effective coefficients zero: the layer is the identity map.
    static PdeLayerParams zeros(std::size_t channels, std::size_t height, std::size_t width, VelocityMode mode);

    Real diffusion_x(std::size_t c) const { return softplus(dx_raw[c]); }
    Real diffusion_y(std::size_t c) const { return softplus(dy_raw[c]); }
    Real velocity_u(std::size_t c, std::size_t y, std::size_t x) const {
        return velocity_mode == VelocityMode::Uniform ? u[c].at(0, 0) : u[c].at(y, x);
    }
    Real velocity_v(std::size_t c, std::size_t y, std::size_t x) const {
        return velocity_mode == VelocityMode::Uniform ? v[c].at(0, 0) : v[c].at(y, x);
    }

    std::size_t field_height() const { return velocity_mode == VelocityMode::Uniform ? 1 : height; }
    std::size_t field_width() const { return velocity_mode == VelocityMode::Uniform ? 1 : width; }

    std::size_t scalar_count() const;
    void validate() const;

    /// Visits every parameter tensor in the canonical order
    /// u[0..C), v[0..C), dx_raw, dy_raw, source_scale, source_bias.
    template <class F>
    void for_each_tensor(F&& f) {
        for (std::size_t c = 0; c < u.size(); ++c) f(std::string_view("u"), std::span<Real>(u[c].data()));
        for (std::size_t c = 0; c < v.size(); ++c) f(std::string_view("v"), std::span<Real>(v[c].data()));
        f(std::string_view("dx_raw"), std::span<Real>(dx_raw));
        f(std::string_view("dy_raw"), std::span<Real>(dy_raw));
        f(std::string_view("source_scale"), std::span<Real>(source_scale));
        f(std::string_view("source_bias"), std::span<Real>(source_bias));
    }
    template <class F>
    void for_each_tensor(F&& f) const {
        for (std::size_t c = 0; c < u.size(); ++c) f(std::string_view("u"), std::span<const Real>(u[c].data()));
        for (std::size_t c = 0; c < v.size(); ++c) f(std::string_view("v"), std::span<const Real>(v[c].data()));
        f(std::string_view("dx_raw"), std::span<const Real>(dx_raw));
        f(std::string_view("dy_raw"), std::span<const Real>(dy_raw));
        f(std::string_view("source_scale"), std::span<const Real>(source_scale));
        f(std::string_view("source_bias"), std::span<const Real>(source_bias));
    }

    std::vector<Real> flatten() const;
    void assign_flat(std::span<const Real> values);

    friend bool operator==(const PdeLayerParams&, const PdeLayerParams&) = default;
};

struct Discretization {
    Real delta_x = 1.0;
    Real delta_y = 1.0;
    Real delta_t = 1.0;
    std::size_t K = 1;

    void validate() const;
    friend bool operator==(const Discretization&, const Discretization&) = default;
};

struct CoefficientSet {
    Real L = 1;
    Real M = 1;
    Real A_x = 0;
    Real A_y = 0;
    Real B_x = 0;
    Real B_y = 0;
    Real u_x = 0;
    Real v_y = 0;
};

/// Xavier-uniform draws scaled by 0.01 for u, v, dx_raw, dy_raw and the
/// source scale; source bias starts at zero. Fan sizes follow the usual
/// convention for a tensor laid out as (C, H, W): fan_in = H*W, fan_out = C*W.
/// Per-channel scalars are treated as (C, 1): fan_in = 1, fan_out = C.
PdeLayerParams init_params(std::size_t channels, std::size_t height, std::size_t width, VelocityMode mode,
                           std::uint64_t seed);

CoefficientSet compute_coefficients(const PdeLayerParams& params, const Discretization& disc, std::size_t channel,
                                    std::size_t x, std::size_t y, BoundaryMode mode);

/// f(I) = scale_c * I + bias_c.
FeatureMap source_term(const FeatureMap& input, const PdeLayerParams& params);

/// One application of the update. `source` is f(I); the 2 dt factor is applied here.
FeatureMap pde_step(const FeatureMap& h_k, const FeatureMap& h_km1, const FeatureMap& source,
                    const PdeLayerParams& params, const Discretization& disc, BoundaryMode mode);

struct LayerTrace {
    std::vector<FeatureMap> states; ///< H[-1], H[0], ..., H[K]
    FeatureMap source;
    Discretization disc;
    BoundaryMode boundary = BoundaryMode::Replicate;

    bool complete() const;
};

struct ForwardResult {
    FeatureMap output;
    LayerTrace trace;
};

/// When `macs` is given it is charged pde_layer_macs(shape, K, mode). With
/// `instrumented` set the same kernels run on CountingReal and the counter is
/// charged the tally instead of the closed form.
ForwardResult forward(const FeatureMap& input, const PdeLayerParams& params, const Discretization& disc,
                      BoundaryMode mode, metrics::MacCounter* macs = nullptr, bool instrumented = false);

struct BackwardResult {
    FeatureMap grad_input;
    PdeLayerParams grad_params; ///< same layout as the parameters, holding gradients
};

BackwardResult backward(const LayerTrace& trace, const FeatureMap& grad_output, const PdeLayerParams& params);

struct CflReport {
    Real max_B_x = 0;
    Real max_B_y = 0;
    Real max_abs_A_x = 0;
    Real max_abs_A_y = 0;
    Real max_B_sum = 0;
    bool warning = false;
    std::string message;
};

/// Explicit-scheme heuristic: warns when Bx + By exceeds 1/2 anywhere.
CflReport cfl_diagnostic(const PdeLayerParams& params, const Discretization& disc);

/// Header {format, version, channels, height, width, velocity_mode} followed by
/// the flat f64 values in for_each_tensor order.
std::string encode_params(const PdeLayerParams& params);
PdeLayerParams decode_params(const std::string& bytes);
void save_params(const std::filesystem::path& path, const PdeLayerParams& params);
PdeLayerParams load_params(const std::filesystem::path& path);

} // namespace pdeblur::pde
