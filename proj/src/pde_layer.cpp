// SPDX-License-Identifier: Apache-2.0

#include "pdeblur/pde_layer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "pdeblur/counting.hpp"
#include "pdeblur/metrics.hpp"
#include "pdeblur/serialization.hpp"

namespace pdeblur::pde {

namespace {

constexpr int kParamsVersion = 1;
constexpr const char* kParamsFormat = "pdeblur.pde_params";

/// Resolved stencil indices along one axis; -1 marks an implicit zero.
struct AxisTable {
    std::vector<std::ptrdiff_t> prev;
    std::vector<std::ptrdiff_t> next;

    AxisTable(std::size_t n, BoundaryMode mode) : prev(n), next(n) {
        const auto len = static_cast<std::ptrdiff_t>(n);
        for (std::ptrdiff_t i = 0; i < len; ++i) {
            prev[i] = resolve_index(i - 1, len, mode);
            next[i] = resolve_index(i + 1, len, mode);
        }
    }
};

Real at_or_zero(std::span<const Real> plane, std::size_t width, std::ptrdiff_t y, std::ptrdiff_t x) {
    if (y < 0 || x < 0) return Real(0);
    return plane[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)];
}

void check_input_against_params(const FeatureMap& h, const PdeLayerParams& params) {
    if (h.shape().channels != params.channels) {
        throw ShapeError("pde layer: input has " + std::to_string(h.shape().channels) + " channels, parameters have " +
                         std::to_string(params.channels));
    }
    if (params.velocity_mode == VelocityMode::Spatial &&
        (h.shape().height != params.height || h.shape().width != params.width)) {
        throw ShapeError("pde layer: input is " + std::to_string(h.shape().height) + "x" +
                         std::to_string(h.shape().width) + " but spatial velocity fields are " +
                         std::to_string(params.height) + "x" + std::to_string(params.width));
    }
}

/// Per-step scalar constants, shared by the forward kernel and the adjoint.
struct StepConstants {
    Real c_ax;     // dt / (2 dx)
    Real c_ay;     // dt / (2 dy)
    Real c_bx;     // dt / dx^2
    Real c_by;     // dt / dy^2
    Real inv_2dx;  // 1 / (2 dx)
    Real inv_2dy;  // 1 / (2 dy)
    Real two_dt;

    explicit StepConstants(const Discretization& d)
        : c_ax(d.delta_t / (2 * d.delta_x)), c_ay(d.delta_t / (2 * d.delta_y)),
          c_bx(d.delta_t / (d.delta_x * d.delta_x)), c_by(d.delta_t / (d.delta_y * d.delta_y)),
          inv_2dx(1 / (2 * d.delta_x)), inv_2dy(1 / (2 * d.delta_y)), two_dt(2 * d.delta_t) {}
};

/// One update of a single (batch, channel) plane. Per pixel this performs 12
/// multiplies/divides, 16 when the velocity is spatially varying; the closed
/// form in metrics::pde_layer_macs must agree with the CountingReal tally.
template <class T>
void step_plane(ConstPlane hk, ConstPlane hkm1, ConstPlane src, std::span<Real> out, const PdeLayerParams& p,
                std::size_t c, const StepConstants& k, const AxisTable& xs, const AxisTable& ys) {
    const std::size_t h = hk.height;
    const std::size_t w = hk.width;
    const bool spatial = p.velocity_mode == VelocityMode::Spatial;
    const T one(1);
    const T two(2);
    const T c_ax(k.c_ax), c_ay(k.c_ay), c_bx(k.c_bx), c_by(k.c_by);
    const T inv_2dx(k.inv_2dx), inv_2dy(k.inv_2dy), two_dt(k.two_dt);
    const T dx_eff(p.diffusion_x(c));
    const T dy_eff(p.diffusion_y(c));
    std::span<const Real> uf = p.u[c].data();
    std::span<const Real> vf = p.v[c].data();

    for (std::size_t y = 0; y < h; ++y) {
        const std::ptrdiff_t yu = ys.prev[y];
        const std::ptrdiff_t yd = ys.next[y];
        for (std::size_t x = 0; x < w; ++x) {
            const std::ptrdiff_t xl = xs.prev[x];
            const std::ptrdiff_t xr = xs.next[x];
            const std::size_t idx = y * w + x;

            const T u(spatial ? uf[idx] : uf[0]);
            const T v(spatial ? vf[idx] : vf[0]);
            const T ax = u * c_ax;
            const T ay = v * c_ay;
            const T bx = dx_eff * c_bx;
            const T by = dy_eff * c_by;
            const T bx2 = bx * two;
            const T by2 = by * two;
            const T l = one + bx2 + by2;

            const T centre_prev(hkm1.data[idx]);
            const T nr(at_or_zero(hk.data, w, static_cast<std::ptrdiff_t>(y), xr));
            const T nl(at_or_zero(hk.data, w, static_cast<std::ptrdiff_t>(y), xl));
            const T nd(at_or_zero(hk.data, w, yd, static_cast<std::ptrdiff_t>(x)));
            const T nu(at_or_zero(hk.data, w, yu, static_cast<std::ptrdiff_t>(x)));

            T inc = bx2 * ((nr - centre_prev) + (nl - centre_prev)) + by2 * ((nd - centre_prev) + (nu - centre_prev)) +
                    ax * (nl - nr) + ay * (nu - nd) + two_dt * T(src.data[idx]);
            if (spatial) {
                const T ux = (T(at_or_zero(uf, w, static_cast<std::ptrdiff_t>(y), xr)) -
                              T(at_or_zero(uf, w, static_cast<std::ptrdiff_t>(y), xl))) *
                             inv_2dx;
                const T vy = (T(at_or_zero(vf, w, yd, static_cast<std::ptrdiff_t>(x))) -
                              T(at_or_zero(vf, w, yu, static_cast<std::ptrdiff_t>(x)))) *
                             inv_2dy;
                inc = inc - ((ux + vy) * two_dt) * T(hk.data[idx]);
            }
            out[idx] = metrics::value_of(centre_prev + inc / l);
        }
    }
}

template <class T>
FeatureMap step_impl(const FeatureMap& h_k, const FeatureMap& h_km1, const FeatureMap& source,
                     const PdeLayerParams& params, const StepConstants& k, const AxisTable& xs, const AxisTable& ys) {
    FeatureMap out(h_k.shape());
    const Shape& s = h_k.shape();
    for (std::size_t b = 0; b < s.batch; ++b) {
        for (std::size_t c = 0; c < s.channels; ++c) {
            step_plane<T>(h_k.plane(b, c), h_km1.plane(b, c), source.plane(b, c), out.plane(b, c), params, c, k, xs,
                          ys);
        }
    }
    return out;
}

template <class T>
FeatureMap source_impl(const FeatureMap& input, const PdeLayerParams& params) {
    FeatureMap out(input.shape());
    const Shape& s = input.shape();
    for (std::size_t b = 0; b < s.batch; ++b) {
        for (std::size_t c = 0; c < s.channels; ++c) {
            const T scale(params.source_scale[c]);
            const T bias(params.source_bias[c]);
            auto in = input.plane(b, c).data;
            auto o = out.plane(b, c);
            for (std::size_t i = 0; i < o.size(); ++i) o[i] = metrics::value_of(scale * T(in[i]) + bias);
        }
    }
    return out;
}

} // namespace

std::string to_string(VelocityMode mode) { return mode == VelocityMode::Uniform ? "uniform" : "spatial"; }

VelocityMode velocity_mode_from_string(const std::string& name) {
    if (name == "uniform") return VelocityMode::Uniform;
    if (name == "spatial") return VelocityMode::Spatial;
    throw ContractError("unknown velocity mode '" + name + "'");
}

Real softplus(Real raw) {
    if (raw > 0) return raw + std::log1p(std::exp(-raw));
    return std::log1p(std::exp(raw));
}

Real softplus_grad(Real raw) {
    if (raw >= 0) return 1 / (1 + std::exp(-raw));
    const Real e = std::exp(raw);
    return e / (1 + e);
}

Real xavier_bound(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(Real(6) / static_cast<Real>(fan_in + fan_out));
}

PdeLayerParams PdeLayerParams::zeros(std::size_t channels, std::size_t height, std::size_t width, VelocityMode mode) {
    PdeLayerParams p;
    p.channels = channels;
    p.height = height;
    p.width = width;
    p.velocity_mode = mode;
    p.u.assign(channels, ScalarField2D(p.field_height(), p.field_width()));
    p.v = p.u;
    p.dx_raw.assign(channels, -std::numeric_limits<Real>::infinity());
    p.dy_raw = p.dx_raw;
    p.source_scale.assign(channels, 0);
    p.source_bias.assign(channels, 0);
    return p;
}

std::size_t PdeLayerParams::scalar_count() const {
    std::size_t n = 0;
    for_each_tensor([&](std::string_view, std::span<const Real> t) { n += t.size(); });
    return n;
}

void PdeLayerParams::validate() const {
    if (channels == 0 || height == 0 || width == 0) throw ContractError("pde params: dimensions must be >= 1");
    const auto fail = [](const std::string& what) { throw ShapeError("pde params: " + what); };
    if (u.size() != channels || v.size() != channels) fail("velocity field count does not match channels");
    for (std::size_t c = 0; c < channels; ++c) {
        if (u[c].height() != field_height() || u[c].width() != field_width() || v[c].height() != field_height() ||
            v[c].width() != field_width()) {
            fail("velocity field of channel " + std::to_string(c) + " has the wrong resolution");
        }
    }
    if (dx_raw.size() != channels || dy_raw.size() != channels || source_scale.size() != channels ||
        source_bias.size() != channels) {
        fail("per-channel vectors do not match channel count");
    }
}

std::vector<Real> PdeLayerParams::flatten() const {
    std::vector<Real> out;
    out.reserve(scalar_count());
    for_each_tensor([&](std::string_view, std::span<const Real> t) { out.insert(out.end(), t.begin(), t.end()); });
    return out;
}

void PdeLayerParams::assign_flat(std::span<const Real> values) {
    if (values.size() != scalar_count()) {
        throw ShapeError("pde params: flat vector has " + std::to_string(values.size()) + " values, expected " +
                         std::to_string(scalar_count()));
    }
    std::size_t pos = 0;
    for_each_tensor([&](std::string_view, std::span<Real> t) {
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(pos), t.size(), t.begin());
        pos += t.size();
    });
}

void Discretization::validate() const {
    if (!(delta_x > 0) || !(delta_y > 0) || !(delta_t > 0)) {
        throw ContractError("discretization: delta_x, delta_y, delta_t must be positive");
    }
    if (K < 1) throw ContractError("discretization: K must be >= 1");
}

PdeLayerParams init_params(std::size_t channels, std::size_t height, std::size_t width, VelocityMode mode,
                           std::uint64_t seed) {
    if (channels == 0 || height == 0 || width == 0) throw ContractError("init_params: dimensions must be >= 1");
    PdeLayerParams p = PdeLayerParams::zeros(channels, height, width, mode);
    std::mt19937_64 rng(seed);
    const auto draw = [&](Real bound) {
        std::uniform_real_distribution<Real> dist(-bound, bound);
        return Real(0.01) * dist(rng);
    };

    const std::size_t fh = p.field_height();
    const std::size_t fw = p.field_width();
    const Real velocity_bound = xavier_bound(fh * fw, channels * fw);
    for (auto* field : {&p.u, &p.v}) {
        for (auto& f : *field) {
            for (Real& x : f.data()) x = draw(velocity_bound);
        }
    }
    const Real scalar_bound = xavier_bound(1, channels);
    for (auto* vec : {&p.dx_raw, &p.dy_raw, &p.source_scale}) {
        for (Real& x : *vec) x = draw(scalar_bound);
    }
    return p;
}

CoefficientSet compute_coefficients(const PdeLayerParams& params, const Discretization& disc, std::size_t channel,
                                    std::size_t x, std::size_t y, BoundaryMode mode) {
    if (channel >= params.channels) throw ContractError("compute_coefficients: channel out of range");
    if (params.velocity_mode == VelocityMode::Spatial && (x >= params.width || y >= params.height)) {
        throw ContractError("compute_coefficients: position (" + std::to_string(x) + "," + std::to_string(y) +
                            ") out of range");
    }
    const StepConstants k(disc);
    CoefficientSet cs;
    const Real u = params.velocity_u(channel, y, x);
    const Real v = params.velocity_v(channel, y, x);
    cs.A_x = u * k.c_ax;
    cs.A_y = v * k.c_ay;
    cs.B_x = params.diffusion_x(channel) * k.c_bx;
    cs.B_y = params.diffusion_y(channel) * k.c_by;
    cs.L = 1 + cs.B_x * 2 + cs.B_y * 2;
    cs.M = 1 - cs.B_x * 2 - cs.B_y * 2;
    if (params.velocity_mode == VelocityMode::Spatial) {
        cs.u_x = (neighbor(params.u[channel], x, y, 1, 0, mode) - neighbor(params.u[channel], x, y, -1, 0, mode)) *
                 k.inv_2dx;
        cs.v_y = (neighbor(params.v[channel], x, y, 0, 1, mode) - neighbor(params.v[channel], x, y, 0, -1, mode)) *
                 k.inv_2dy;
    }
    return cs;
}

FeatureMap source_term(const FeatureMap& input, const PdeLayerParams& params) {
    if (input.shape().channels != params.channels) throw ShapeError("source_term: channel mismatch");
    return source_impl<Real>(input, params);
}

FeatureMap pde_step(const FeatureMap& h_k, const FeatureMap& h_km1, const FeatureMap& source,
                    const PdeLayerParams& params, const Discretization& disc, BoundaryMode mode) {
    require_same_shape(h_k, h_km1, "pde_step");
    require_same_shape(h_k, source, "pde_step");
    check_input_against_params(h_k, params);
    disc.validate();
    if (!h_k.all_finite() || !h_km1.all_finite() || !source.all_finite()) {
        throw NumericalError("pde_step: non-finite input");
    }
    const AxisTable xs(h_k.shape().width, mode);
    const AxisTable ys(h_k.shape().height, mode);
    return step_impl<Real>(h_k, h_km1, source, params, StepConstants(disc), xs, ys);
}

bool LayerTrace::complete() const {
    if (states.size() != disc.K + 2) return false;
    return std::all_of(states.begin(), states.end(),
                       [&](const FeatureMap& s) { return s.shape() == states.front().shape(); }) &&
           source.shape() == states.front().shape();
}

ForwardResult forward(const FeatureMap& input, const PdeLayerParams& params, const Discretization& disc,
                      BoundaryMode mode, metrics::MacCounter* macs, bool instrumented) {
    disc.validate();
    check_input_against_params(input, params);
    if (!input.all_finite()) throw NumericalError("pde layer: non-finite input");

    const metrics::TallyScope tally;
    ForwardResult r;
    r.trace.disc = disc;
    r.trace.boundary = mode;
    r.trace.states.reserve(disc.K + 2);
    r.trace.states.push_back(input);
    r.trace.states.push_back(input);
    r.trace.source = instrumented ? source_impl<metrics::CountingReal>(input, params) : source_impl<Real>(input, params);

    const AxisTable xs(input.shape().width, mode);
    const AxisTable ys(input.shape().height, mode);
    const StepConstants k(disc);
    for (std::size_t step = 0; step < disc.K; ++step) {
        const FeatureMap& hk = r.trace.states[step + 1];
        const FeatureMap& hkm1 = r.trace.states[step];
        FeatureMap next = instrumented
                              ? step_impl<metrics::CountingReal>(hk, hkm1, r.trace.source, params, k, xs, ys)
                              : step_impl<Real>(hk, hkm1, r.trace.source, params, k, xs, ys);
        if (!next.all_finite()) {
            throw NumericalError("pde layer: non-finite state after iteration " + std::to_string(step + 1) + " of " +
                                 std::to_string(disc.K));
        }
        r.trace.states.push_back(std::move(next));
    }
    r.output = r.trace.states.back();

    if (macs) {
        if (instrumented) {
            macs->add(metrics::MacCategory::PdeLayer, tally.elapsed());
        } else {
            macs->add(metrics::MacCategory::PdeLayer,
                      metrics::pde_layer_macs(input.shape(), disc.K, params.velocity_mode));
        }
    }
    return r;
}

BackwardResult backward(const LayerTrace& trace, const FeatureMap& grad_output, const PdeLayerParams& params) {
    if (!trace.complete()) throw ContractError("pde backward: incomplete trace");
    const FeatureMap& input = trace.states[1];
    require_same_shape(grad_output, input, "pde backward");
    check_input_against_params(input, params);

    const Shape& s = input.shape();
    const std::size_t K = trace.disc.K;
    const std::size_t h = s.height;
    const std::size_t w = s.width;
    const bool spatial = params.velocity_mode == VelocityMode::Spatial;
    const StepConstants k(trace.disc);
    const AxisTable xs(w, trace.boundary);
    const AxisTable ys(h, trace.boundary);

    // grads[j] is the adjoint of states[j] = H[j-1].
    std::vector<FeatureMap> grads(K + 2, FeatureMap(s));
    grads[K + 1] = grad_output;
    FeatureMap grad_source(s);

    BackwardResult r;
    r.grad_params = PdeLayerParams::zeros(params.channels, params.height, params.width, params.velocity_mode);
    PdeLayerParams& gp = r.grad_params;
    std::fill(gp.dx_raw.begin(), gp.dx_raw.end(), Real(0));
    std::fill(gp.dy_raw.begin(), gp.dy_raw.end(), Real(0));
    std::vector<Real> grad_bx(params.channels, 0);
    std::vector<Real> grad_by(params.channels, 0);

    for (std::size_t step = K; step-- > 0;) {
        const FeatureMap& next = trace.states[step + 2];
        const FeatureMap& hk = trace.states[step + 1];
        const FeatureMap& hkm1 = trace.states[step];
        const FeatureMap& g_next = grads[step + 2];
        FeatureMap& g_k = grads[step + 1];
        FeatureMap& g_km1 = grads[step];

        for (std::size_t b = 0; b < s.batch; ++b) {
            for (std::size_t c = 0; c < s.channels; ++c) {
                const Real bx2 = params.diffusion_x(c) * k.c_bx * 2;
                const Real by2 = params.diffusion_y(c) * k.c_by * 2;
                const Real l = 1 + bx2 + by2;
                const Real m = 1 - bx2 - by2;
                std::span<const Real> uf = params.u[c].data();
                std::span<const Real> vf = params.v[c].data();
                std::span<Real> gu = gp.u[c].data();
                std::span<Real> gv = gp.v[c].data();

                auto hk_p = hk.plane(b, c).data;
                auto prev_p = hkm1.plane(b, c).data;
                auto next_p = next.plane(b, c).data;
                auto gn = g_next.plane(b, c).data;
                auto gk = g_k.plane(b, c);
                auto gkm1 = g_km1.plane(b, c);
                auto gs = grad_source.plane(b, c);

                for (std::size_t y = 0; y < h; ++y) {
                    const std::ptrdiff_t yu = ys.prev[y];
                    const std::ptrdiff_t yd = ys.next[y];
                    const auto yi = static_cast<std::ptrdiff_t>(y);
                    for (std::size_t x = 0; x < w; ++x) {
                        const std::ptrdiff_t xl = xs.prev[x];
                        const std::ptrdiff_t xr = xs.next[x];
                        const auto xi = static_cast<std::ptrdiff_t>(x);
                        const std::size_t idx = y * w + x;
                        const Real g = gn[idx] / l;
                        if (g == 0) continue;

                        const Real u = spatial ? uf[idx] : uf[0];
                        const Real v = spatial ? vf[idx] : vf[0];
                        const Real ax = u * k.c_ax;
                        const Real ay = v * k.c_ay;

                        const Real nr = at_or_zero(hk_p, w, yi, xr);
                        const Real nl = at_or_zero(hk_p, w, yi, xl);
                        const Real nd = at_or_zero(hk_p, w, yd, xi);
                        const Real nu = at_or_zero(hk_p, w, yu, xi);

                        gkm1[idx] += g * m;
                        gs[idx] += g * k.two_dt;
                        if (xr >= 0) gk[static_cast<std::size_t>(yi) * w + static_cast<std::size_t>(xr)] += g * (bx2 - ax);
                        if (xl >= 0) gk[static_cast<std::size_t>(yi) * w + static_cast<std::size_t>(xl)] += g * (bx2 + ax);
                        if (yd >= 0) gk[static_cast<std::size_t>(yd) * w + static_cast<std::size_t>(xi)] += g * (by2 - ay);
                        if (yu >= 0) gk[static_cast<std::size_t>(yu) * w + static_cast<std::size_t>(xi)] += g * (by2 + ay);

                        // L appears as the divisor: d(out)/dL = -(out - prev)/L.
                        const Real delta = next_p[idx] - prev_p[idx];
                        grad_bx[c] += 2 * g * (nr + nl - 2 * prev_p[idx] - delta);
                        grad_by[c] += 2 * g * (nd + nu - 2 * prev_p[idx] - delta);

                        const Real g_ax = g * (nl - nr);
                        const Real g_ay = g * (nu - nd);
                        if (spatial) {
                            gu[idx] += g_ax * k.c_ax;
                            gv[idx] += g_ay * k.c_ay;
                            const Real ux = (at_or_zero(uf, w, yi, xr) - at_or_zero(uf, w, yi, xl)) * k.inv_2dx;
                            const Real vy = (at_or_zero(vf, w, yd, xi) - at_or_zero(vf, w, yu, xi)) * k.inv_2dy;
                            gk[idx] -= g * k.two_dt * (ux + vy);
                            const Real g_div = -g * k.two_dt * hk_p[idx];
                            if (xr >= 0) gu[static_cast<std::size_t>(yi) * w + static_cast<std::size_t>(xr)] += g_div * k.inv_2dx;
                            if (xl >= 0) gu[static_cast<std::size_t>(yi) * w + static_cast<std::size_t>(xl)] -= g_div * k.inv_2dx;
                            if (yd >= 0) gv[static_cast<std::size_t>(yd) * w + static_cast<std::size_t>(xi)] += g_div * k.inv_2dy;
                            if (yu >= 0) gv[static_cast<std::size_t>(yu) * w + static_cast<std::size_t>(xi)] -= g_div * k.inv_2dy;
                        } else {
                            gu[0] += g_ax * k.c_ax;
                            gv[0] += g_ay * k.c_ay;
                        }
                    }
                }
            }
        }
    }

    r.grad_input = grads[0];
    {
        auto gi = r.grad_input.data();
        auto g1 = grads[1].data();
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g1[i];
    }
    for (std::size_t b = 0; b < s.batch; ++b) {
        for (std::size_t c = 0; c < s.channels; ++c) {
            auto gi = r.grad_input.plane(b, c);
            auto gs = std::as_const(grad_source).plane(b, c).data;
            auto in = std::as_const(input).plane(b, c).data;
            for (std::size_t i = 0; i < gi.size(); ++i) {
                gi[i] += params.source_scale[c] * gs[i];
                gp.source_scale[c] += gs[i] * in[i];
                gp.source_bias[c] += gs[i];
            }
        }
    }
    for (std::size_t c = 0; c < params.channels; ++c) {
        gp.dx_raw[c] = grad_bx[c] * k.c_bx * softplus_grad(params.dx_raw[c]);
        gp.dy_raw[c] = grad_by[c] * k.c_by * softplus_grad(params.dy_raw[c]);
    }
    return r;
}

CflReport cfl_diagnostic(const PdeLayerParams& params, const Discretization& disc) {
    const StepConstants k(disc);
    CflReport r;
    for (std::size_t c = 0; c < params.channels; ++c) {
        const Real bx = params.diffusion_x(c) * k.c_bx;
        const Real by = params.diffusion_y(c) * k.c_by;
        r.max_B_x = std::max(r.max_B_x, bx);
        r.max_B_y = std::max(r.max_B_y, by);
        r.max_B_sum = std::max(r.max_B_sum, bx + by);
        for (Real u : params.u[c].data()) r.max_abs_A_x = std::max(r.max_abs_A_x, std::abs(u * k.c_ax));
        for (Real v : params.v[c].data()) r.max_abs_A_y = std::max(r.max_abs_A_y, std::abs(v * k.c_ay));
    }
    if (r.max_B_sum > Real(0.5)) {
        r.warning = true;
        r.message = "Bx + By = " + std::to_string(r.max_B_sum) + " exceeds 1/2 (explicit-scheme heuristic)";
    }
    return r;
}

std::string encode_params(const PdeLayerParams& params) {
    params.validate();
    nlohmann::json header = {{"format", kParamsFormat},
                             {"version", kParamsVersion},
                             {"channels", params.channels},
                             {"height", params.height},
                             {"width", params.width},
                             {"velocity_mode", to_string(params.velocity_mode)}};
    const auto flat = params.flatten();
    const std::vector<double> values(flat.begin(), flat.end());
    return encode_blob(header, values);
}

PdeLayerParams decode_params(const std::string& bytes) {
    const BlobFile file = decode_blob(bytes);
    require_format(file.header, kParamsFormat, kParamsVersion);
    PdeLayerParams p = PdeLayerParams::zeros(file.header.at("channels").get<std::size_t>(),
                                             file.header.at("height").get<std::size_t>(),
                                             file.header.at("width").get<std::size_t>(),
                                             velocity_mode_from_string(file.header.at("velocity_mode")));
    if (file.values.size() != p.scalar_count()) {
        throw FormatError("pde params: blob holds " + std::to_string(file.values.size()) + " values, header implies " +
                          std::to_string(p.scalar_count()));
    }
    const std::vector<Real> flat(file.values.begin(), file.values.end());
    p.assign_flat(flat);
    return p;
}

void save_params(const std::filesystem::path& path, const PdeLayerParams& params) {
    write_text_file(path, encode_params(params));
}

PdeLayerParams load_params(const std::filesystem::path& path) { return decode_params(read_text_file(path)); }

} // namespace pdeblur::pde
