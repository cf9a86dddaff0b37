// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>

#include "pdeblur/toy_net.hpp"

using namespace pdeblur;
using namespace pdeblur::net;

namespace {

FeatureMap random_image(Shape s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Real> dist(0, 1);
    FeatureMap m(s);
    for (Real& v : m.data()) v = dist(rng);
    return m;
}

std::uint64_t conv_params(std::uint64_t in, std::uint64_t out) { return in * out * 9 + out; }

} // namespace

TEST_CASE("default layout") {
    const NetConfig cfg;
    auto b = build(cfg, 32, 32, 0);
    CHECK(b.network.pde_nodes.size() == 5);
    CHECK(b.network.graph.count(autograd::OpKind::PdeLayer) == 5);
    CHECK(b.params.convs.size() == 11);
    for (std::size_t i = 1; i < b.network.pde_nodes.size(); ++i) {
        CHECK(b.network.graph.node(b.network.pde_nodes[i]).parents ==
              std::vector<autograd::NodeId>{b.network.pde_nodes[i - 1]});
    }
    for (const auto& p : b.params.pdes) {
        CHECK(p.height == 8);
        CHECK(p.width == 8);
        CHECK(p.channels == cfg.bottleneck_channels());
    }
    const std::uint64_t convs = conv_params(3, 8) + conv_params(8, 8) + conv_params(8, 16) + conv_params(16, 16) +
                                conv_params(16, 32) + conv_params(32, 32) + conv_params(48, 16) +
                                conv_params(16, 16) + conv_params(24, 8) + conv_params(8, 8) + conv_params(8, 3);
    const std::uint64_t pde = 5 * (2 * 32 * 8 * 8 + 4 * 32);
    CHECK(parameter_count(cfg, 32, 32) == convs + pde);
    CHECK(b.params.scalar_count() == convs + pde);
}

TEST_CASE("baseline has no pde node") {
    NetConfig cfg;
    cfg.pde_layers = 0;
    auto b = build(cfg, 32, 32, 0);
    CHECK(b.network.graph.count(autograd::OpKind::PdeLayer) == 0);
    CHECK(b.params.pdes.empty());
}

TEST_CASE("indivisible sizes are refused with both numbers") {
    const NetConfig cfg;
    CHECK_THROWS_AS(build(cfg, 30, 32, 0), ShapeError);
    try {
        cfg.check_image_size(30, 32);
        FAIL("expected a shape error");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("30") != std::string::npos);
        CHECK(msg.find('4') != std::string::npos);
    }
}

TEST_CASE("zero pde parameters reduce the net to its baseline") {
    NetConfig with;
    with.zero_init_output = false;
    NetConfig without = with;
    without.pde_layers = 0;
    auto a = build(with, 16, 16, 3);
    auto b = build(without, 16, 16, 3);
    for (auto& p : a.params.pdes) p = pde::PdeLayerParams::zeros(p.channels, p.height, p.width, p.velocity_mode);
    auto base_params = a.params;
    base_params.pdes.clear();
    const auto x = random_image(Shape{2, 3, 16, 16}, 1);
    a.network.set_discretization(pde::Discretization{.delta_t = 0.2, .K = 5});
    CHECK(predict(a.network, a.params, x, false) == predict(b.network, base_params, x, false));
}

TEST_CASE("untrained net with zero output conv") {
    const NetConfig cfg;
    auto b = build(cfg, 16, 16, 4);
    const auto x = random_image(Shape{1, 3, 16, 16}, 2);
    CHECK(predict(b.network, b.params, x) == x);

    NetConfig plain = cfg;
    plain.global_residual = false;
    auto c = build(plain, 16, 16, 4);
    c.params.convs.back().bias = {0.1, 0.2, 0.3};
    const auto y = predict(c.network, c.params, x, false);
    for (std::size_t ch = 0; ch < 3; ++ch) {
        for (Real v : std::as_const(y).plane(0, ch).data) CHECK(v == doctest::Approx(0.1 * (ch + 1)));
    }
}

TEST_CASE("builds are deterministic in the seed") {
    const NetConfig cfg;
    auto a = build(cfg, 16, 16, 9);
    auto b = build(cfg, 16, 16, 9);
    CHECK(a.params == b.params);
    CHECK_FALSE(a.params == build(cfg, 16, 16, 10).params);
    const auto x = random_image(Shape{1, 3, 16, 16}, 3);
    CHECK(predict(a.network, a.params, x) == predict(b.network, b.params, x));
}

TEST_CASE("config json round-trip and validation") {
    NetConfig cfg;
    cfg.depth = 3;
    cfg.velocity_mode = pde::VelocityMode::Uniform;
    cfg.boundary = BoundaryMode::Periodic;
    cfg.skip_connections = false;
    CHECK(NetConfig::from_json(cfg.to_json()) == cfg);
    NetConfig bad;
    bad.depth = 0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = NetConfig{};
    bad.base_channels = 0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
}
