// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale U-Net style encoder-decoder with a stack of PDE global layers at
// the bottleneck.

#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "pdeblur/autograd.hpp"
#include "pdeblur/pde_layer.hpp"
#include "pdeblur/tensor.hpp"

namespace pdeblur::metrics {
class MacCounter;
}

namespace pdeblur::net {

struct NetConfig {
    std::size_t depth = 2;
    std::size_t base_channels = 8;
    std::size_t pde_layers = 5;
    pde::VelocityMode velocity_mode = pde::VelocityMode::Spatial;
    BoundaryMode boundary = BoundaryMode::Replicate;
    bool skip_connections = true;
    /// Adds the input image to the decoder output.
    bool global_residual = true;
    /// Starts the output conv at zero weights so the untrained net is the identity
    /// (with global_residual); hidden convs use Xavier with the ReLU gain sqrt(2).
    bool zero_init_output = true;
    std::size_t image_channels = 3;

    void validate() const;
    /// Throws ShapeError naming both numbers when height/width is not a multiple of 2^depth.
    void check_image_size(std::size_t height, std::size_t width) const;
    std::size_t bottleneck_channels() const { return base_channels << depth; }

    nlohmann::json to_json() const;
    static NetConfig from_json(const nlohmann::json& j);
    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

using ModelParams = autograd::ParamStore;

struct Network {
    NetConfig config;
    std::size_t height = 0;
    std::size_t width = 0;
    autograd::Graph graph;
    autograd::NodeId input = 0;
    autograd::NodeId output = 0;
    std::vector<autograd::NodeId> pde_nodes;

    /// Applies one (K, dt) to every PDE node.
    void set_discretization(const pde::Discretization& disc) { graph.set_discretization(disc); }
};

struct BuildResult {
    Network network;
    ModelParams params;
};

/// Xavier-uniform conv weights (ReLU gain on hidden convs) with zero bias; PDE
/// layers via pde::init_params.
BuildResult build(const NetConfig& config, std::size_t height, std::size_t width, std::uint64_t seed);

/// Rebuilds only the graph (for loading saved parameters).
Network build_graph(const NetConfig& config, std::size_t height, std::size_t width);

/// Forward pass on a (B, C, H, W) batch. Clamps to [0, 1] when `clamp` is set.
FeatureMap predict(Network& net, const ModelParams& params, const FeatureMap& image, bool clamp = true,
                   metrics::MacCounter* macs = nullptr);

std::size_t parameter_count(const NetConfig& config, std::size_t height, std::size_t width);

} // namespace pdeblur::net
