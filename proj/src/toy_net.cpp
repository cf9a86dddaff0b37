// SPDX-License-Identifier: Apache-2.0

#include "pdeblur/toy_net.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pdeblur/metrics.hpp"
#include "pdeblur/rng.hpp"

namespace pdeblur::net {

void NetConfig::validate() const {
    if (depth < 1) throw ContractError("net config: depth must be >= 1");
    if (base_channels < 1) throw ContractError("net config: base_channels must be >= 1");
    if (image_channels < 1) throw ContractError("net config: image_channels must be >= 1");
}

void NetConfig::check_image_size(std::size_t height, std::size_t width) const {
    const std::size_t factor = std::size_t{1} << depth;
    for (std::size_t n : {height, width}) {
        if (n == 0 || n % factor != 0) {
            throw ShapeError("image size " + std::to_string(n) + " is not divisible by " + std::to_string(factor) +
                             " (2^depth for depth " + std::to_string(depth) + ")");
        }
    }
}

nlohmann::json NetConfig::to_json() const {
    return {{"depth", depth},
            {"base_channels", base_channels},
            {"pde_layers", pde_layers},
            {"velocity_mode", pde::to_string(velocity_mode)},
            {"boundary", to_string(boundary)},
            {"skip_connections", skip_connections},
            {"global_residual", global_residual},
            {"zero_init_output", zero_init_output},
            {"image_channels", image_channels}};
}

NetConfig NetConfig::from_json(const nlohmann::json& j) {
    NetConfig c;
    c.depth = j.at("depth").get<std::size_t>();
    c.base_channels = j.at("base_channels").get<std::size_t>();
    c.pde_layers = j.at("pde_layers").get<std::size_t>();
    c.velocity_mode = pde::velocity_mode_from_string(j.at("velocity_mode").get<std::string>());
    c.boundary = boundary_from_string(j.at("boundary").get<std::string>());
    c.skip_connections = j.at("skip_connections").get<bool>();
    c.global_residual = j.at("global_residual").get<bool>();
    c.zero_init_output = j.at("zero_init_output").get<bool>();
    c.image_channels = j.at("image_channels").get<std::size_t>();
    c.validate();
    return c;
}

namespace {

/// Walks the architecture once, reporting each conv (in, out) and the PDE
/// stack so graph construction and parameter allocation stay in lockstep.
struct Layout {
    std::vector<std::pair<std::size_t, std::size_t>> convs;
};

Network assemble(const NetConfig& cfg, std::size_t height, std::size_t width, Layout* layout) {
    cfg.validate();
    cfg.check_image_size(height, width);
    using autograd::NodeId;
    Network net;
    net.config = cfg;
    net.height = height;
    net.width = width;
    auto& g = net.graph;
    std::size_t conv_index = 0;
    const auto conv = [&](NodeId x, std::size_t in, std::size_t out) {
        if (layout) layout->convs.emplace_back(in, out);
        return g.add_conv2d(x, conv_index++);
    };

    net.input = g.add_input(0, cfg.image_channels, height, width);
    NodeId cur = net.input;
    std::size_t ch_in = cfg.image_channels;
    std::vector<NodeId> skips;
    for (std::size_t level = 0; level < cfg.depth; ++level) {
        const std::size_t ch = cfg.base_channels << level;
        cur = g.add_relu(conv(cur, ch_in, ch));
        cur = g.add_relu(conv(cur, ch, ch));
        skips.push_back(cur);
        cur = g.add_downsample2x(cur);
        ch_in = ch;
    }
    const std::size_t bott = cfg.bottleneck_channels();
    cur = g.add_relu(conv(cur, ch_in, bott));
    for (std::size_t j = 0; j < cfg.pde_layers; ++j) {
        cur = g.add_pde_layer(cur, j, cfg.boundary);
        net.pde_nodes.push_back(cur);
    }
    cur = g.add_relu(conv(cur, bott, bott));
    ch_in = bott;
    for (std::size_t level = cfg.depth; level-- > 0;) {
        const std::size_t ch = cfg.base_channels << level;
        cur = g.add_upsample2x(cur);
        std::size_t cin = ch_in;
        if (cfg.skip_connections) {
            cur = g.add_concat({cur, skips[level]});
            cin += ch;
        }
        cur = g.add_relu(conv(cur, cin, ch));
        cur = g.add_relu(conv(cur, ch, ch));
        ch_in = ch;
    }
    cur = conv(cur, ch_in, cfg.image_channels);
    if (cfg.global_residual) cur = g.add_add(cur, net.input);
    net.output = cur;
    g.set_outputs({cur});
    return net;
}

} // namespace

Network build_graph(const NetConfig& config, std::size_t height, std::size_t width) {
    return assemble(config, height, width, nullptr);
}

BuildResult build(const NetConfig& config, std::size_t height, std::size_t width, std::uint64_t seed) {
    Layout layout;
    BuildResult r{assemble(config, height, width, &layout), {}};
    std::mt19937_64 rng(derive_seed(seed, 0));
    for (std::size_t i = 0; i < layout.convs.size(); ++i) {
        const auto [in, out] = layout.convs[i];
        const bool output_conv = i + 1 == layout.convs.size();
        auto p = autograd::Conv2dParams::zeros(in, out);
        std::uniform_real_distribution<Real> dist(-1, 1);
        const Real gain = output_conv ? Real(1) : std::sqrt(Real(2));
        const Real bound = gain * pde::xavier_bound(in * 9, out * 9);
        for (Real& w : p.weight) w = bound * dist(rng);
        if (output_conv && config.zero_init_output) std::fill(p.weight.begin(), p.weight.end(), Real(0));
        r.params.convs.push_back(std::move(p));
    }
    const std::size_t shrink = std::size_t{1} << config.depth;
    for (std::size_t j = 0; j < config.pde_layers; ++j) {
        r.params.pdes.push_back(pde::init_params(config.bottleneck_channels(), height / shrink, width / shrink,
                                                 config.velocity_mode, derive_seed(seed, 1000 + j)));
    }
    return r;
}

FeatureMap predict(Network& net, const ModelParams& params, const FeatureMap& image, bool clamp,
                   metrics::MacCounter* macs) {
    const FeatureMap inputs[] = {image};
    autograd::ForwardOptions opts;
    opts.macs = macs;
    FeatureMap out = std::move(autograd::forward_graph(net.graph, params, inputs, opts).front());
    if (clamp) {
        for (Real& v : out.data()) v = std::clamp(v, Real(0), Real(1));
    }
    return out;
}

std::size_t parameter_count(const NetConfig& config, std::size_t height, std::size_t width) {
    Layout layout;
    assemble(config, height, width, &layout);
    std::size_t n = 0;
    for (auto [in, out] : layout.convs) n += in * out * 9 + out;
    const std::size_t shrink = std::size_t{1} << config.depth;
    const std::size_t c = config.bottleneck_channels();
    const std::size_t field = config.velocity_mode == pde::VelocityMode::Spatial ? (height / shrink) * (width / shrink) : 1;
    n += config.pde_layers * (2 * c * field + 4 * c);
    return n;
}

} // namespace pdeblur::net
