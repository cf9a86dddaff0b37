// SPDX-License-Identifier: Apache-2.0
//
// Small reverse-mode engine over the handful of operations the encoder-decoder
// needs. The PDE layer is a single node whose backward is pde::backward.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "pdeblur/pde_layer.hpp"
#include "pdeblur/tensor.hpp"

namespace pdeblur::metrics {
class MacCounter;
}

namespace pdeblur::autograd {

class GraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class OpKind { Input, Conv2d, Relu, Add, Downsample2x, Upsample2x, ConcatChannels, PdeLayer, Scale };

std::string to_string(OpKind op);

using NodeId = std::size_t;

/// 3x3 kernel, stride 1, replicate padding. Weight layout [out][in][ky][kx].
struct Conv2dParams {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::vector<Real> weight;
    std::vector<Real> bias;

    static Conv2dParams zeros(std::size_t in_channels, std::size_t out_channels);
    Real& w(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) {
        return weight[((o * in_channels + i) * 3 + ky) * 3 + kx];
    }
    Real w(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) const {
        return weight[((o * in_channels + i) * 3 + ky) * 3 + kx];
    }
    friend bool operator==(const Conv2dParams&, const Conv2dParams&) = default;
};

/// All trainable state referenced by a graph. Gradients use the same type.
struct ParamStore {
    std::vector<Conv2dParams> convs;
    std::vector<pde::PdeLayerParams> pdes;

    /// Canonical order: conv[i].weight, conv[i].bias for each conv, then each
    /// PDE layer's tensors in PdeLayerParams::for_each_tensor order.
    template <class F>
    void for_each_tensor(F&& f) {
        for (std::size_t i = 0; i < convs.size(); ++i) {
            const std::string p = "conv[" + std::to_string(i) + "].";
            f(p + "weight", std::span<Real>(convs[i].weight));
            f(p + "bias", std::span<Real>(convs[i].bias));
        }
        for (std::size_t i = 0; i < pdes.size(); ++i) {
            const std::string p = "pde[" + std::to_string(i) + "].";
            pdes[i].for_each_tensor([&](std::string_view n, std::span<Real> t) { f(p + std::string(n), t); });
        }
    }
    template <class F>
    void for_each_tensor(F&& f) const {
        for (std::size_t i = 0; i < convs.size(); ++i) {
            const std::string p = "conv[" + std::to_string(i) + "].";
            f(p + "weight", std::span<const Real>(convs[i].weight));
            f(p + "bias", std::span<const Real>(convs[i].bias));
        }
        for (std::size_t i = 0; i < pdes.size(); ++i) {
            const std::string p = "pde[" + std::to_string(i) + "].";
            pdes[i].for_each_tensor([&](std::string_view n, std::span<const Real> t) { f(p + std::string(n), t); });
        }
    }

    std::size_t scalar_count() const;
    std::vector<Real> flatten() const;
    void assign_flat(std::span<const Real> values);
    /// Same layout, every value 0 (including diffusion raws, unlike PdeLayerParams::zeros).
    ParamStore zeros_like() const;

    friend bool operator==(const ParamStore&, const ParamStore&) = default;
};

struct InputPayload {
    std::size_t slot = 0;
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
};
struct ConvPayload {
    std::size_t param = 0;
};
struct ScalePayload {
    Real factor = 1;
};
struct PdePayload {
    std::size_t param = 0;
    BoundaryMode boundary = BoundaryMode::Replicate;
};
using Payload = std::variant<std::monostate, InputPayload, ConvPayload, ScalePayload, PdePayload>;

struct Node {
    NodeId id = 0;
    OpKind op = OpKind::Input;
    std::vector<NodeId> parents;
    Payload payload;
    std::optional<FeatureMap> cached_output;
    std::optional<pde::LayerTrace> trace;
};

class Graph {
public:
    NodeId add_input(std::size_t slot, std::size_t channels, std::size_t height, std::size_t width);
    NodeId add_conv2d(NodeId x, std::size_t param);
    NodeId add_relu(NodeId x);
    NodeId add_add(NodeId a, NodeId b);
    NodeId add_downsample2x(NodeId x);
    NodeId add_upsample2x(NodeId x);
    NodeId add_concat(std::vector<NodeId> parts);
    NodeId add_pde_layer(NodeId x, std::size_t param, BoundaryMode boundary);
    NodeId add_scale(NodeId x, Real factor);

    /// Replaces a node's parents; may introduce cycles, which forward rejects.
    void rewire(NodeId id, std::vector<NodeId> parents);

    void set_outputs(std::vector<NodeId> outputs) { outputs_ = std::move(outputs); }
    const std::vector<NodeId>& outputs() const { return outputs_; }

    /// (K, dt) shared by every PDE node; changed by the trainer per epoch.
    void set_discretization(const pde::Discretization& disc);
    const pde::Discretization& discretization() const { return disc_; }

    std::size_t size() const { return nodes_.size(); }
    const Node& node(NodeId id) const { return nodes_.at(id); }
    Node& node(NodeId id) { return nodes_.at(id); }
    std::size_t count(OpKind op) const;

    /// Kahn order, ties broken by id. Throws GraphError on a cycle or dangling parent.
    std::vector<NodeId> topological_order() const;

    void clear_cache();

private:
    NodeId push(OpKind op, std::vector<NodeId> parents, Payload payload);

    std::vector<Node> nodes_;
    std::vector<NodeId> outputs_;
    pde::Discretization disc_{};
};

struct ForwardOptions {
    metrics::MacCounter* macs = nullptr;
    /// Run conv and PDE kernels on metrics::CountingReal and charge the tally.
    bool instrumented = false;
};

std::vector<FeatureMap> forward_graph(Graph& graph, const ParamStore& params, std::span<const FeatureMap> inputs,
                                      const ForwardOptions& options = {});

struct GradientStore {
    std::vector<std::optional<FeatureMap>> nodes; ///< indexed by NodeId
    ParamStore params;
    /// Gradients w.r.t. graph inputs by slot (zero maps for unused slots).
    std::vector<FeatureMap> inputs;
};

GradientStore backward_graph(const Graph& graph, const ParamStore& params, std::span<const FeatureMap> output_grads);

/// Scalar loss over graph outputs; writes d loss / d output when `grads` is non-null.
using LossFn = std::function<Real(std::span<const FeatureMap> outputs, std::vector<FeatureMap>* grads)>;

/// sum_i w_i * out_i with fixed pseudo-random weights in [-1, 1] drawn from `seed`.
LossFn weighted_sum_loss(std::uint64_t seed);
/// sum out_i^2.
LossFn sum_of_squares_loss();

/// Produces analytic gradients; the default runs forward_graph + backward_graph.
using GradientFn =
    std::function<GradientStore(Graph&, const ParamStore&, std::span<const FeatureMap>, const LossFn&)>;
GradientStore analytic_gradients(Graph& graph, const ParamStore& params, std::span<const FeatureMap> inputs,
                                 const LossFn& loss);

struct GradCheckEntry {
    std::string name;
    std::size_t count = 0;
    Real worst_rel_error = 0;
    Real max_abs_error = 0;
    bool passed = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool passed = true;
    /// A relu input sat within 10 * epsilon of its kink; resample before trusting the result.
    bool near_kink = false;
    Real epsilon = 0;
    Real tolerance = 0;

    const GradCheckEntry* worst() const;
    std::string summary() const;
};

/// Gradient-magnitude floor in the relative error: an entry passes when
/// |analytic - numeric| <= tolerance * max(|analytic|, |numeric|, kGradFloor).
inline constexpr Real kGradFloor = 1e-3;

/// Central finite differences on every parameter (and input entry when
/// `check_inputs`) against the analytic gradient.
GradCheckReport grad_check(Graph& graph, const ParamStore& params, std::span<const FeatureMap> inputs, Real epsilon,
                           Real tolerance, const LossFn& loss, bool check_inputs = true,
                           const GradientFn& analytic = analytic_gradients);

/// Smallest |x| over relu inputs in the current cache (infinity without relus).
Real relu_margin(const Graph& graph);

/// 3x3 replicate-padded convolution. `instrumented` runs it on CountingReal.
FeatureMap conv2d_forward(const FeatureMap& input, const Conv2dParams& p, bool instrumented = false);

} // namespace pdeblur::autograd
