// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "pdeblur/experiments.hpp"
#include "pdeblur/pde_layer.hpp"

using namespace pdeblur;
using pde::Discretization;
using pde::PdeLayerParams;
using pde::VelocityMode;

namespace {

Real inverse_softplus(Real d) { return std::log(std::expm1(d)); }

PdeLayerParams diffusion_only(std::size_t c, std::size_t h, std::size_t w, Real d) {
    auto p = PdeLayerParams::zeros(c, h, w, VelocityMode::Spatial);
    for (std::size_t i = 0; i < c; ++i) p.dx_raw[i] = p.dy_raw[i] = inverse_softplus(d);
    return p;
}

FeatureMap random_map(Shape s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Real> dist(0, 1);
    FeatureMap m(s);
    for (Real& v : m.data()) v = dist(rng);
    return m;
}

// Evaluates the three-level update pixel by pixel in its textbook form
// L H+ = M H- - 2(u_x + v_y) dt H + 2 dt f + weighted neighbours.
FeatureMap reference_step(const FeatureMap& hk, const FeatureMap& hkm1, const FeatureMap& f, const PdeLayerParams& p,
                          const Discretization& d, BoundaryMode mode) {
    const Shape s = hk.shape();
    FeatureMap out(s);
    const auto at = [&](const FeatureMap& m, std::size_t b, std::size_t c, long y, long x) -> Real {
        const auto yy = resolve_index(y, static_cast<long>(s.height), mode);
        const auto xx = resolve_index(x, static_cast<long>(s.width), mode);
        return yy < 0 || xx < 0 ? 0 : m.at(b, c, yy, xx);
    };
    const auto vel = [&](const std::vector<ScalarField2D>& f2, std::size_t c, long y, long x) -> Real {
        if (p.velocity_mode == VelocityMode::Uniform) return f2[c].at(0, 0);
        const auto yy = resolve_index(y, static_cast<long>(s.height), mode);
        const auto xx = resolve_index(x, static_cast<long>(s.width), mode);
        return yy < 0 || xx < 0 ? 0 : f2[c].at(yy, xx);
    };
    for (std::size_t b = 0; b < s.batch; ++b) {
        for (std::size_t c = 0; c < s.channels; ++c) {
            const Real Dx = std::log1p(std::exp(p.dx_raw[c]));
            const Real Dy = std::log1p(std::exp(p.dy_raw[c]));
            const Real Bx = Dx * d.delta_t / (d.delta_x * d.delta_x);
            const Real By = Dy * d.delta_t / (d.delta_y * d.delta_y);
            const Real L = 1 + 2 * Bx + 2 * By;
            const Real M = 1 - 2 * Bx - 2 * By;
            for (long y = 0; y < static_cast<long>(s.height); ++y) {
                for (long x = 0; x < static_cast<long>(s.width); ++x) {
                    const Real u = vel(p.u, c, y, x);
                    const Real v = vel(p.v, c, y, x);
                    const Real Ax = u * d.delta_t / (2 * d.delta_x);
                    const Real Ay = v * d.delta_t / (2 * d.delta_y);
                    const Real ux = (vel(p.u, c, y, x + 1) - vel(p.u, c, y, x - 1)) / (2 * d.delta_x);
                    const Real vy = (vel(p.v, c, y + 1, x) - vel(p.v, c, y - 1, x)) / (2 * d.delta_y);
                    const Real rhs = M * hkm1.at(b, c, y, x) - 2 * (ux + vy) * d.delta_t * hk.at(b, c, y, x) +
                                     2 * d.delta_t * f.at(b, c, y, x) + (2 * Bx - Ax) * at(hk, b, c, y, x + 1) +
                                     (2 * Bx + Ax) * at(hk, b, c, y, x - 1) + (2 * By - Ay) * at(hk, b, c, y + 1, x) +
                                     (2 * By + Ay) * at(hk, b, c, y - 1, x);
                    out.at(b, c, y, x) = rhs / L;
                }
            }
        }
    }
    return out;
}

} // namespace

TEST_CASE("softplus maps -inf to exactly zero") {
    CHECK(pde::softplus(-std::numeric_limits<Real>::infinity()) == 0);
    CHECK(pde::softplus(0) == doctest::Approx(std::log(2.0)));
    CHECK(pde::softplus(inverse_softplus(0.5)) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(pde::softplus_grad(0) == doctest::Approx(0.5));
}

TEST_CASE("coefficients by hand") {
    const Discretization d{.delta_t = 0.2, .K = 5};
    auto zero = PdeLayerParams::zeros(1, 3, 3, VelocityMode::Spatial);
    const auto c0 = pde::compute_coefficients(zero, d, 0, 1, 1, BoundaryMode::Replicate);
    CHECK(c0.A_x == 0);
    CHECK(c0.A_y == 0);
    CHECK(c0.B_x == 0);
    CHECK(c0.B_y == 0);
    CHECK(c0.L == 1);
    CHECK(c0.M == 1);

    auto moving = zero;
    moving.u[0] = ScalarField2D(3, 3, 1.0);
    CHECK(pde::compute_coefficients(moving, d, 0, 1, 1, BoundaryMode::Replicate).A_x == doctest::Approx(0.1));

    const auto diff = diffusion_only(1, 3, 3, 0.5);
    const auto c = pde::compute_coefficients(diff, d, 0, 1, 1, BoundaryMode::Replicate);
    CHECK(c.B_x == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(c.B_y == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(c.L == doctest::Approx(1.4).epsilon(1e-12));
    CHECK(c.M == doctest::Approx(0.6).epsilon(1e-12));

    CHECK_THROWS_AS(pde::compute_coefficients(diff, d, 1, 0, 0, BoundaryMode::Replicate), ContractError);
    CHECK_THROWS_AS(pde::compute_coefficients(diff, d, 0, 3, 0, BoundaryMode::Replicate), ContractError);
}

TEST_CASE("single diffusion step of an impulse") {
    const Discretization d{.delta_t = 0.2, .K = 1};
    const auto p = diffusion_only(1, 3, 3, 0.5);
    FeatureMap h(Shape{1, 1, 3, 3});
    h.at(0, 0, 1, 1) = 1;
    const FeatureMap f(h.shape());
    const auto out = pde::pde_step(h, h, f, p, d, BoundaryMode::ZeroPad);
    const auto ref = reference_step(h, h, f, p, d, BoundaryMode::ZeroPad);
    CHECK(out.at(0, 0, 1, 1) == doctest::Approx(0.6 / 1.4).epsilon(1e-12));
    for (auto [y, x] : {std::pair{0, 1}, {2, 1}, {1, 0}, {1, 2}}) {
        CHECK(out.at(0, 0, y, x) == doctest::Approx(0.2 / 1.4).epsilon(1e-12));
    }
    CHECK(out.at(0, 0, 0, 0) == 0);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-12));
}

TEST_CASE("pde_step matches the textbook update for random coefficients") {
    for (auto mode : {BoundaryMode::Replicate, BoundaryMode::Periodic, BoundaryMode::ZeroPad}) {
        for (auto vm : {VelocityMode::Spatial, VelocityMode::Uniform}) {
            CAPTURE(to_string(mode));
            CAPTURE(pde::to_string(vm));
            const auto p = exp::random_layer_params(2, 5, 6, vm, 11);
            const Discretization d{.delta_x = 1.0, .delta_y = 0.8, .delta_t = 1.0 / 3, .K = 3};
            const Shape s{2, 2, 5, 6};
            const auto hk = random_map(s, 1), hkm1 = random_map(s, 2), f = random_map(s, 3);
            const auto out = pde::pde_step(hk, hkm1, f, p, d, mode);
            const auto ref = reference_step(hk, hkm1, f, p, d, mode);
            for (std::size_t i = 0; i < out.size(); ++i) {
                CHECK(out.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("zero parameters are the exact identity") {
    const auto x = random_map(Shape{2, 3, 4, 4}, 5);
    for (std::size_t k : {1, 2, 5, 9}) {
        const auto p = PdeLayerParams::zeros(3, 4, 4, VelocityMode::Spatial);
        const auto r = pde::forward(x, p, Discretization{.delta_t = 1.0 / k, .K = k}, BoundaryMode::Replicate);
        CHECK(r.output == x);
        CHECK(r.trace.states.size() == k + 2);
        const auto g = pde::backward(r.trace, x, p);
        CHECK(g.grad_input == x);
    }
    const auto p = PdeLayerParams::zeros(3, 4, 4, VelocityMode::Spatial);
    CHECK(pde::pde_step(x, x, FeatureMap(x.shape()), p, Discretization{}, BoundaryMode::Periodic) == x);
}

TEST_CASE("constant fields are fixed points without velocity or source") {
    for (auto mode : {BoundaryMode::Replicate, BoundaryMode::Periodic}) {
        const FeatureMap c(Shape{1, 2, 5, 7}, 0.37);
        const auto p = diffusion_only(2, 5, 7, 3.7);
        const auto r = pde::forward(c, p, Discretization{.delta_t = 0.2, .K = 5}, mode);
        CHECK(r.output == c);
    }
}

TEST_CASE("periodic transport conserves total mass") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<Real> vel(-0.5, 0.5);
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        auto p = PdeLayerParams::zeros(1, 8, 8, VelocityMode::Uniform);
        p.u[0].at(0, 0) = vel(rng);
        p.v[0].at(0, 0) = vel(rng);
        p.dx_raw[0] = inverse_softplus(0.3);
        p.dy_raw[0] = inverse_softplus(0.2);
        const auto x = random_map(Shape{1, 1, 8, 8}, seed);
        const auto r = pde::forward(x, p, Discretization{.delta_t = 0.01, .K = 100}, BoundaryMode::Periodic);
        CHECK(std::abs(reduce_sum(r.output) - reduce_sum(x)) <= 1e-10 * std::abs(reduce_sum(x)));
    }
}

TEST_CASE("K = 1 forward is one step from (H0, H0, f)") {
    const auto p = exp::random_layer_params(2, 4, 4, VelocityMode::Spatial, 2);
    const auto x = random_map(Shape{1, 2, 4, 4}, 9);
    const Discretization d{.delta_t = 1.0, .K = 1};
    const auto r = pde::forward(x, p, d, BoundaryMode::Replicate);
    CHECK(r.output == pde::pde_step(x, x, pde::source_term(x, p), p, d, BoundaryMode::Replicate));
}

TEST_CASE("source term is affine per channel") {
    auto p = PdeLayerParams::zeros(1, 1, 1, VelocityMode::Uniform);
    const FeatureMap one(Shape{1, 1, 1, 1}, 1.0);
    CHECK(pde::source_term(one, p).at(0, 0, 0, 0) == 0);
    p.source_scale[0] = 1;
    CHECK(pde::source_term(one, p) == one);
    p.source_scale[0] = 2;
    p.source_bias[0] = 0.5;
    CHECK(pde::source_term(one, p).at(0, 0, 0, 0) == 2.5);
}

TEST_CASE("backward of a zero cotangent is zero") {
    const auto p = exp::random_layer_params(2, 4, 4, VelocityMode::Spatial, 4);
    const auto x = random_map(Shape{1, 2, 4, 4}, 4);
    const auto r = pde::forward(x, p, Discretization{.delta_t = 1.0 / 3, .K = 3}, BoundaryMode::Replicate);
    const auto g = pde::backward(r.trace, FeatureMap(x.shape()), p);
    CHECK(reduce_max_abs(g.grad_input) == 0);
    for (Real v : g.grad_params.flatten()) CHECK(v == 0);
    pde::LayerTrace broken = r.trace;
    broken.states.pop_back();
    CHECK_THROWS(pde::backward(broken, x, p));
}

TEST_CASE("adjoint passes central-difference checks") {
    for (auto vm : {VelocityMode::Spatial, VelocityMode::Uniform}) {
        for (auto mode : {BoundaryMode::Replicate, BoundaryMode::Periodic, BoundaryMode::ZeroPad}) {
            exp::GradCheckConfig cfg;
            cfg.k = 3;
            cfg.height = 5;
            cfg.width = 4;
            cfg.seeds = 2;
            cfg.velocity_mode = vm;
            cfg.boundary = mode;
            const auto r = exp::run_gradcheck(cfg);
            CAPTURE(r.runs.front().report.summary());
            CHECK(r.passed);
        }
    }
}

TEST_CASE("cfl diagnostic") {
    const auto zero = PdeLayerParams::zeros(2, 3, 3, VelocityMode::Spatial);
    const auto z = pde::cfl_diagnostic(zero, Discretization{.delta_t = 0.2, .K = 5});
    CHECK_FALSE(z.warning);
    CHECK(z.max_B_x == 0);
    CHECK(z.max_B_y == 0);
    CHECK(z.max_abs_A_x == 0);

    auto hot = PdeLayerParams::zeros(1, 3, 3, VelocityMode::Spatial);
    hot.dx_raw[0] = inverse_softplus(5);
    const auto w = pde::cfl_diagnostic(hot, Discretization{.delta_t = 0.2, .K = 5});
    CHECK(w.max_B_x == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.warning);

    const auto ok = pde::cfl_diagnostic(diffusion_only(1, 3, 3, 0.5), Discretization{.delta_t = 0.2, .K = 5});
    CHECK(ok.max_B_sum == doctest::Approx(0.2).epsilon(1e-12));
    CHECK_FALSE(ok.warning);
}

TEST_CASE("init is seeded and bounded") {
    const auto a = pde::init_params(4, 8, 8, VelocityMode::Spatial, 17);
    const auto b = pde::init_params(4, 8, 8, VelocityMode::Spatial, 17);
    CHECK(a == b);
    CHECK_FALSE(a == pde::init_params(4, 8, 8, VelocityMode::Spatial, 18));
    const Real bound = 0.01 * pde::xavier_bound(8 * 8, 4 * 8);
    for (const auto& f : a.u) {
        for (Real v : f.data()) CHECK(std::abs(v) <= bound);
    }
    for (Real v : a.source_bias) CHECK(v == 0);
}

TEST_CASE("parameter files round-trip") {
    const auto p = exp::random_layer_params(3, 4, 5, VelocityMode::Spatial, 8);
    CHECK(pde::decode_params(pde::encode_params(p)) == p);
    const auto path = std::filesystem::temp_directory_path() / "pdeblur_test_params.bin";
    pde::save_params(path, p);
    CHECK(pde::load_params(path) == p);
    std::filesystem::remove(path);
}

TEST_CASE("non-finite inputs are rejected") {
    const auto p = PdeLayerParams::zeros(1, 2, 2, VelocityMode::Spatial);
    FeatureMap x(Shape{1, 1, 2, 2});
    x.at(0, 0, 1, 1) = std::numeric_limits<Real>::infinity();
    CHECK_THROWS_AS(pde::pde_step(x, x, FeatureMap(x.shape()), p, Discretization{}, BoundaryMode::Replicate),
                    pde::NumericalError);
    CHECK_THROWS_AS(pde::pde_step(x, FeatureMap(Shape{1, 1, 2, 3}), x, p, Discretization{}, BoundaryMode::Replicate),
                    ShapeError);
}
