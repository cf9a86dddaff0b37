// SPDX-License-Identifier: Apache-2.0

#include "pdeblur/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <random>
#include <sstream>

#include "pdeblur/counting.hpp"
#include "pdeblur/metrics.hpp"

namespace pdeblur::autograd {

std::string to_string(OpKind op) {
    switch (op) {
    case OpKind::Input: return "input";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Relu: return "relu";
    case OpKind::Add: return "add";
    case OpKind::Downsample2x: return "downsample2x";
    case OpKind::Upsample2x: return "upsample2x";
    case OpKind::ConcatChannels: return "concat_channels";
    case OpKind::PdeLayer: return "pde_layer";
    case OpKind::Scale: return "scale";
    }
    return "unknown";
}

Conv2dParams Conv2dParams::zeros(std::size_t in_channels, std::size_t out_channels) {
    Conv2dParams p;
    p.in_channels = in_channels;
    p.out_channels = out_channels;
    p.weight.assign(in_channels * out_channels * 9, 0);
    p.bias.assign(out_channels, 0);
    return p;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for_each_tensor([&](const std::string&, std::span<const Real> t) { n += t.size(); });
    return n;
}

std::vector<Real> ParamStore::flatten() const {
    std::vector<Real> out;
    out.reserve(scalar_count());
    for_each_tensor([&](const std::string&, std::span<const Real> t) { out.insert(out.end(), t.begin(), t.end()); });
    return out;
}

void ParamStore::assign_flat(std::span<const Real> values) {
    if (values.size() != scalar_count()) {
        throw ShapeError("parameter vector has " + std::to_string(values.size()) + " values, expected " +
                         std::to_string(scalar_count()));
    }
    std::size_t pos = 0;
    for_each_tensor([&](const std::string&, std::span<Real> t) {
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(pos), t.size(), t.begin());
        pos += t.size();
    });
}

ParamStore ParamStore::zeros_like() const {
    ParamStore z = *this;
    z.for_each_tensor([](const std::string&, std::span<Real> t) { std::fill(t.begin(), t.end(), Real(0)); });
    return z;
}

// ---------------------------------------------------------------------------
// Graph construction

NodeId Graph::push(OpKind op, std::vector<NodeId> parents, Payload payload) {
    for (NodeId p : parents) {
        if (p >= nodes_.size()) throw GraphError("parent " + std::to_string(p) + " does not exist");
    }
    Node n;
    n.id = nodes_.size();
    n.op = op;
    n.parents = std::move(parents);
    n.payload = std::move(payload);
    nodes_.push_back(std::move(n));
    return nodes_.back().id;
}

NodeId Graph::add_input(std::size_t slot, std::size_t channels, std::size_t height, std::size_t width) {
    return push(OpKind::Input, {}, InputPayload{slot, channels, height, width});
}
NodeId Graph::add_conv2d(NodeId x, std::size_t param) { return push(OpKind::Conv2d, {x}, ConvPayload{param}); }
NodeId Graph::add_relu(NodeId x) { return push(OpKind::Relu, {x}, {}); }
NodeId Graph::add_add(NodeId a, NodeId b) { return push(OpKind::Add, {a, b}, {}); }
NodeId Graph::add_downsample2x(NodeId x) { return push(OpKind::Downsample2x, {x}, {}); }
NodeId Graph::add_upsample2x(NodeId x) { return push(OpKind::Upsample2x, {x}, {}); }
NodeId Graph::add_concat(std::vector<NodeId> parts) {
    if (parts.empty()) throw GraphError("concat needs at least one input");
    return push(OpKind::ConcatChannels, std::move(parts), {});
}
NodeId Graph::add_pde_layer(NodeId x, std::size_t param, BoundaryMode boundary) {
    return push(OpKind::PdeLayer, {x}, PdePayload{param, boundary});
}
NodeId Graph::add_scale(NodeId x, Real factor) { return push(OpKind::Scale, {x}, ScalePayload{factor}); }

void Graph::rewire(NodeId id, std::vector<NodeId> parents) { nodes_.at(id).parents = std::move(parents); }

void Graph::set_discretization(const pde::Discretization& disc) {
    disc.validate();
    disc_ = disc;
}

std::size_t Graph::count(OpKind op) const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [&](const Node& n) { return n.op == op; }));
}

std::vector<NodeId> Graph::topological_order() const {
    std::vector<std::size_t> indegree(nodes_.size(), 0);
    std::vector<std::vector<NodeId>> children(nodes_.size());
    for (const Node& n : nodes_) {
        for (NodeId p : n.parents) {
            if (p >= nodes_.size()) throw GraphError("node " + std::to_string(n.id) + " has dangling parent");
            ++indegree[n.id];
            children[p].push_back(n.id);
        }
    }
    std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
    for (const Node& n : nodes_) {
        if (indegree[n.id] == 0) ready.push(n.id);
    }
    std::vector<NodeId> order;
    order.reserve(nodes_.size());
    while (!ready.empty()) {
        const NodeId id = ready.top();
        ready.pop();
        order.push_back(id);
        for (NodeId c : children[id]) {
            if (--indegree[c] == 0) ready.push(c);
        }
    }
    if (order.size() != nodes_.size()) throw GraphError("cycle detected in graph");
    return order;
}

void Graph::clear_cache() {
    for (Node& n : nodes_) {
        n.cached_output.reset();
        n.trace.reset();
    }
}

// ---------------------------------------------------------------------------
// Kernels

namespace {

struct ClampTable {
    // src[k][i] = clamp(i + k - 1) for k in {0,1,2}
    std::vector<std::size_t> src[3];
    explicit ClampTable(std::size_t n) {
        for (int k = 0; k < 3; ++k) {
            src[k].resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                src[k][i] = static_cast<std::size_t>(
                    resolve_index(static_cast<std::ptrdiff_t>(i) + k - 1, static_cast<std::ptrdiff_t>(n),
                                  BoundaryMode::Replicate));
            }
        }
    }
};

template <class T>
FeatureMap conv_impl(const FeatureMap& in, const Conv2dParams& p) {
    const Shape& s = in.shape();
    if (s.channels != p.in_channels) {
        throw ShapeError("conv2d: input has " + std::to_string(s.channels) + " channels, kernel expects " +
                         std::to_string(p.in_channels));
    }
    const std::size_t H = s.height, W = s.width;
    const ClampTable ys(H), xs(W);
    FeatureMap out(Shape{s.batch, p.out_channels, H, W});
    std::vector<T> acc(H * W);
    for (std::size_t b = 0; b < s.batch; ++b) {
        for (std::size_t o = 0; o < p.out_channels; ++o) {
            std::fill(acc.begin(), acc.end(), T(p.bias[o]));
            for (std::size_t i = 0; i < p.in_channels; ++i) {
                const Real* ip = in.plane(b, i).data.data();
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        const T wv(p.w(o, i, ky, kx));
                        for (std::size_t y = 0; y < H; ++y) {
                            const Real* row = ip + ys.src[ky][y] * W;
                            T* a = acc.data() + y * W;
                            a[0] += wv * T(row[xs.src[kx][0]]);
                            for (std::size_t x = 1; x + 1 < W; ++x) a[x] += wv * T(row[x + kx - 1]);
                            if (W > 1) a[W - 1] += wv * T(row[xs.src[kx][W - 1]]);
                        }
                    }
                }
            }
            auto op = out.plane(b, o);
            for (std::size_t j = 0; j < op.size(); ++j) op[j] = metrics::value_of(acc[j]);
        }
    }
    return out;
}

void conv_backward(const FeatureMap& in, const FeatureMap& gout, const Conv2dParams& p, FeatureMap& gin,
                   Conv2dParams& gp) {
    const Shape& s = in.shape();
    const std::size_t H = s.height, W = s.width;
    const ClampTable ys(H), xs(W);
    for (std::size_t b = 0; b < s.batch; ++b) {
        for (std::size_t o = 0; o < p.out_channels; ++o) {
            const Real* g = gout.plane(b, o).data.data();
            Real bsum = 0;
            for (std::size_t j = 0; j < H * W; ++j) bsum += g[j];
            gp.bias[o] += bsum;
            for (std::size_t i = 0; i < p.in_channels; ++i) {
                const Real* ip = in.plane(b, i).data.data();
                Real* gi = gin.plane(b, i).data();
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        const Real wv = p.w(o, i, ky, kx);
                        Real wsum = 0;
                        for (std::size_t y = 0; y < H; ++y) {
                            const std::size_t sy = ys.src[ky][y] * W;
                            const Real* row = ip + sy;
                            Real* grow = gi + sy;
                            const Real* gr = g + y * W;
                            {
                                const std::size_t sx = xs.src[kx][0];
                                wsum += gr[0] * row[sx];
                                grow[sx] += wv * gr[0];
                            }
                            for (std::size_t x = 1; x + 1 < W; ++x) {
                                wsum += gr[x] * row[x + kx - 1];
                                grow[x + kx - 1] += wv * gr[x];
                            }
                            if (W > 1) {
                                const std::size_t sx = xs.src[kx][W - 1];
                                wsum += gr[W - 1] * row[sx];
                                grow[sx] += wv * gr[W - 1];
                            }
                        }
                        gp.w(o, i, ky, kx) += wsum;
                    }
                }
            }
        }
    }
}

FeatureMap downsample(const FeatureMap& in) {
    const Shape& s = in.shape();
    if (s.height % 2 || s.width % 2) {
        throw ShapeError("downsample2x: spatial size " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                         " is not even");
    }
    FeatureMap out(Shape{s.batch, s.channels, s.height / 2, s.width / 2});
    for (std::size_t b = 0; b < s.batch; ++b)
        for (std::size_t c = 0; c < s.channels; ++c)
            for (std::size_t y = 0; y < s.height / 2; ++y)
                for (std::size_t x = 0; x < s.width / 2; ++x)
                    out.at(b, c, y, x) = Real(0.25) * (in.at(b, c, 2 * y, 2 * x) + in.at(b, c, 2 * y, 2 * x + 1) +
                                                       in.at(b, c, 2 * y + 1, 2 * x) + in.at(b, c, 2 * y + 1, 2 * x + 1));
    return out;
}

FeatureMap upsample(const FeatureMap& in) {
    const Shape& s = in.shape();
    FeatureMap out(Shape{s.batch, s.channels, s.height * 2, s.width * 2});
    for (std::size_t b = 0; b < s.batch; ++b)
        for (std::size_t c = 0; c < s.channels; ++c)
            for (std::size_t y = 0; y < 2 * s.height; ++y)
                for (std::size_t x = 0; x < 2 * s.width; ++x) out.at(b, c, y, x) = in.at(b, c, y / 2, x / 2);
    return out;
}

void accumulate(std::optional<FeatureMap>& slot, const FeatureMap& g) {
    if (!slot) {
        slot = g;
        return;
    }
    require_same_shape(*slot, g, "gradient accumulation");
    auto d = slot->data();
    auto s = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

const FeatureMap& cached(const Graph& graph, NodeId id) {
    const Node& n = graph.node(id);
    if (!n.cached_output) {
        throw GraphError("node " + std::to_string(id) + " (" + to_string(n.op) + ") has no cached output; run forward first");
    }
    return *n.cached_output;
}

} // namespace

FeatureMap conv2d_forward(const FeatureMap& input, const Conv2dParams& p, bool instrumented) {
    return instrumented ? conv_impl<metrics::CountingReal>(input, p) : conv_impl<Real>(input, p);
}

// ---------------------------------------------------------------------------
// Forward / backward

std::vector<FeatureMap> forward_graph(Graph& graph, const ParamStore& params, std::span<const FeatureMap> inputs,
                                      const ForwardOptions& options) {
    const auto order = graph.topological_order();
    graph.clear_cache();
    for (NodeId id : order) {
        Node& n = graph.node(id);
        const auto parent = [&](std::size_t i) -> const FeatureMap& { return cached(graph, n.parents.at(i)); };
        FeatureMap out;
        switch (n.op) {
        case OpKind::Input: {
            const auto& ip = std::get<InputPayload>(n.payload);
            if (ip.slot >= inputs.size()) throw GraphError("missing graph input for slot " + std::to_string(ip.slot));
            const Shape& s = inputs[ip.slot].shape();
            if (s.channels != ip.channels || s.height != ip.height || s.width != ip.width) {
                throw ShapeError("graph input " + std::to_string(ip.slot) + " has shape " + to_string(s) +
                                 ", declared (*," + std::to_string(ip.channels) + "," + std::to_string(ip.height) +
                                 "," + std::to_string(ip.width) + ")");
            }
            out = inputs[ip.slot];
            break;
        }
        case OpKind::Conv2d: {
            const auto& cp = params.convs.at(std::get<ConvPayload>(n.payload).param);
            const FeatureMap& x = parent(0);
            const metrics::TallyScope tally;
            out = conv2d_forward(x, cp, options.instrumented);
            if (options.macs) {
                options.macs->add(metrics::MacCategory::Conv,
                                  options.instrumented ? tally.elapsed() : metrics::conv2d_macs(x.shape(), cp.out_channels));
            }
            break;
        }
        case OpKind::Relu: {
            out = parent(0);
            for (Real& v : out.data()) v = v > 0 ? v : Real(0);
            break;
        }
        case OpKind::Add:
            out = elementwise(parent(0), parent(1), ElementwiseOp::Add);
            break;
        case OpKind::Downsample2x:
            out = downsample(parent(0));
            if (options.macs) options.macs->add(metrics::MacCategory::Other, out.size());
            break;
        case OpKind::Upsample2x:
            out = upsample(parent(0));
            break;
        case OpKind::ConcatChannels: {
            Shape s = parent(0).shape();
            std::size_t channels = 0;
            for (std::size_t i = 0; i < n.parents.size(); ++i) {
                const Shape& ps = parent(i).shape();
                if (ps.batch != s.batch || ps.height != s.height || ps.width != s.width) {
                    throw ShapeError("concat: incompatible shapes " + to_string(s) + " and " + to_string(ps));
                }
                channels += ps.channels;
            }
            s.channels = channels;
            out = FeatureMap(s);
            for (std::size_t b = 0; b < s.batch; ++b) {
                std::size_t c0 = 0;
                for (std::size_t i = 0; i < n.parents.size(); ++i) {
                    const FeatureMap& p = parent(i);
                    for (std::size_t c = 0; c < p.shape().channels; ++c) {
                        auto src = p.plane(b, c).data;
                        std::copy(src.begin(), src.end(), out.plane(b, c0 + c).begin());
                    }
                    c0 += p.shape().channels;
                }
            }
            break;
        }
        case OpKind::PdeLayer: {
            const auto& pp = std::get<PdePayload>(n.payload);
            auto r = pde::forward(parent(0), params.pdes.at(pp.param), graph.discretization(), pp.boundary,
                                  options.macs, options.instrumented);
            out = std::move(r.output);
            n.trace = std::move(r.trace);
            break;
        }
        case OpKind::Scale: {
            const Real f = std::get<ScalePayload>(n.payload).factor;
            out = parent(0);
            for (Real& v : out.data()) v *= f;
            if (options.macs) options.macs->add(metrics::MacCategory::Other, out.size());
            break;
        }
        }
        n.cached_output = std::move(out);
    }
    std::vector<FeatureMap> outs;
    for (NodeId id : graph.outputs()) outs.push_back(cached(graph, id));
    return outs;
}

GradientStore backward_graph(const Graph& graph, const ParamStore& params, std::span<const FeatureMap> output_grads) {
    if (output_grads.size() != graph.outputs().size()) {
        throw GraphError("backward: " + std::to_string(output_grads.size()) + " output gradients for " +
                         std::to_string(graph.outputs().size()) + " outputs");
    }
    const auto order = graph.topological_order();
    GradientStore gs;
    gs.nodes.resize(graph.size());
    gs.params = params.zeros_like();
    for (std::size_t i = 0; i < output_grads.size(); ++i) {
        require_same_shape(cached(graph, graph.outputs()[i]), output_grads[i], "backward output gradient");
        accumulate(gs.nodes[graph.outputs()[i]], output_grads[i]);
    }

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const Node& n = graph.node(*it);
        const FeatureMap& out = cached(graph, n.id);
        if (!gs.nodes[n.id]) continue;
        const FeatureMap g = *gs.nodes[n.id];
        switch (n.op) {
        case OpKind::Input: {
            const auto& ip = std::get<InputPayload>(n.payload);
            if (gs.inputs.size() <= ip.slot) gs.inputs.resize(ip.slot + 1);
            if (gs.inputs[ip.slot].size() == 0) {
                gs.inputs[ip.slot] = g;
            } else {
                std::optional<FeatureMap> acc = gs.inputs[ip.slot];
                accumulate(acc, g);
                gs.inputs[ip.slot] = std::move(*acc);
            }
            break;
        }
        case OpKind::Conv2d: {
            const std::size_t pi = std::get<ConvPayload>(n.payload).param;
            const FeatureMap& x = cached(graph, n.parents[0]);
            FeatureMap gin(x.shape());
            conv_backward(x, g, params.convs.at(pi), gin, gs.params.convs[pi]);
            accumulate(gs.nodes[n.parents[0]], gin);
            break;
        }
        case OpKind::Relu: {
            const FeatureMap& x = cached(graph, n.parents[0]);
            FeatureMap gin(x.shape());
            auto gi = gin.data();
            auto xi = x.data();
            auto go = g.data();
            for (std::size_t i = 0; i < gi.size(); ++i) gi[i] = xi[i] > 0 ? go[i] : Real(0);
            accumulate(gs.nodes[n.parents[0]], gin);
            break;
        }
        case OpKind::Add:
            accumulate(gs.nodes[n.parents[0]], g);
            accumulate(gs.nodes[n.parents[1]], g);
            break;
        case OpKind::Downsample2x: {
            const FeatureMap& x = cached(graph, n.parents[0]);
            FeatureMap gin(x.shape());
            const Shape& s = g.shape();
            for (std::size_t b = 0; b < s.batch; ++b)
                for (std::size_t c = 0; c < s.channels; ++c)
                    for (std::size_t y = 0; y < s.height; ++y)
                        for (std::size_t xx = 0; xx < s.width; ++xx) {
                            const Real v = Real(0.25) * g.at(b, c, y, xx);
                            gin.at(b, c, 2 * y, 2 * xx) += v;
                            gin.at(b, c, 2 * y, 2 * xx + 1) += v;
                            gin.at(b, c, 2 * y + 1, 2 * xx) += v;
                            gin.at(b, c, 2 * y + 1, 2 * xx + 1) += v;
                        }
            accumulate(gs.nodes[n.parents[0]], gin);
            break;
        }
        case OpKind::Upsample2x: {
            const FeatureMap& x = cached(graph, n.parents[0]);
            FeatureMap gin(x.shape());
            const Shape& s = g.shape();
            for (std::size_t b = 0; b < s.batch; ++b)
                for (std::size_t c = 0; c < s.channels; ++c)
                    for (std::size_t y = 0; y < s.height; ++y)
                        for (std::size_t xx = 0; xx < s.width; ++xx) gin.at(b, c, y / 2, xx / 2) += g.at(b, c, y, xx);
            accumulate(gs.nodes[n.parents[0]], gin);
            break;
        }
        case OpKind::ConcatChannels: {
            std::size_t c0 = 0;
            for (NodeId pid : n.parents) {
                const FeatureMap& p = cached(graph, pid);
                FeatureMap gin(p.shape());
                for (std::size_t b = 0; b < p.shape().batch; ++b) {
                    for (std::size_t c = 0; c < p.shape().channels; ++c) {
                        auto src = g.plane(b, c0 + c).data;
                        std::copy(src.begin(), src.end(), gin.plane(b, c).begin());
                    }
                }
                c0 += p.shape().channels;
                accumulate(gs.nodes[pid], gin);
            }
            break;
        }
        case OpKind::PdeLayer: {
            const auto& pp = std::get<PdePayload>(n.payload);
            if (!n.trace) throw GraphError("pde node " + std::to_string(n.id) + " has no trace");
            auto r = pde::backward(*n.trace, g, params.pdes.at(pp.param));
            auto& dst = gs.params.pdes[pp.param];
            auto src = r.grad_params.flatten();
            auto cur = dst.flatten();
            for (std::size_t i = 0; i < cur.size(); ++i) cur[i] += src[i];
            dst.assign_flat(cur);
            accumulate(gs.nodes[n.parents[0]], r.grad_input);
            break;
        }
        case OpKind::Scale: {
            const Real f = std::get<ScalePayload>(n.payload).factor;
            FeatureMap gin = g;
            for (Real& v : gin.data()) v *= f;
            accumulate(gs.nodes[n.parents[0]], gin);
            break;
        }
        }
        (void)out;
    }
    return gs;
}

// ---------------------------------------------------------------------------
// Gradient checking

LossFn weighted_sum_loss(std::uint64_t seed) {
    return [seed](std::span<const FeatureMap> outputs, std::vector<FeatureMap>* grads) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<Real> dist(-1, 1);
        Real loss = 0;
        if (grads) grads->clear();
        for (const FeatureMap& o : outputs) {
            FeatureMap w(o.shape());
            for (Real& v : w.data()) v = dist(rng);
            auto ov = o.data();
            auto wv = w.data();
            for (std::size_t i = 0; i < ov.size(); ++i) loss += wv[i] * ov[i];
            if (grads) grads->push_back(std::move(w));
        }
        return loss;
    };
}

LossFn sum_of_squares_loss() {
    return [](std::span<const FeatureMap> outputs, std::vector<FeatureMap>* grads) {
        Real loss = 0;
        if (grads) grads->clear();
        for (const FeatureMap& o : outputs) {
            FeatureMap g(o.shape());
            auto ov = o.data();
            auto gv = g.data();
            for (std::size_t i = 0; i < ov.size(); ++i) {
                loss += ov[i] * ov[i];
                gv[i] = 2 * ov[i];
            }
            if (grads) grads->push_back(std::move(g));
        }
        return loss;
    };
}

GradientStore analytic_gradients(Graph& graph, const ParamStore& params, std::span<const FeatureMap> inputs,
                                 const LossFn& loss) {
    const auto outs = forward_graph(graph, params, inputs);
    std::vector<FeatureMap> og;
    loss(outs, &og);
    return backward_graph(graph, params, og);
}

Real relu_margin(const Graph& graph) {
    Real m = std::numeric_limits<Real>::infinity();
    for (std::size_t id = 0; id < graph.size(); ++id) {
        const Node& n = graph.node(id);
        if (n.op != OpKind::Relu) continue;
        for (Real v : cached(graph, n.parents[0]).data()) m = std::min(m, std::abs(v));
    }
    return m;
}

const GradCheckEntry* GradCheckReport::worst() const {
    const GradCheckEntry* w = nullptr;
    for (const auto& e : entries) {
        if (!w || e.worst_rel_error > w->worst_rel_error) w = &e;
    }
    return w;
}

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << (passed ? "PASS" : "FAIL") << " (eps=" << epsilon << ", tol=" << tolerance << ")";
    if (near_kink) os << " [relu input near kink]";
    os << "\n";
    for (const auto& e : entries) {
        os << "  " << (e.passed ? "ok  " : "FAIL") << " " << e.name << " n=" << e.count
           << " worst_rel=" << e.worst_rel_error << " max_abs=" << e.max_abs_error << "\n";
    }
    return os.str();
}

GradCheckReport grad_check(Graph& graph, const ParamStore& params, std::span<const FeatureMap> inputs, Real epsilon,
                           Real tolerance, const LossFn& loss, bool check_inputs, const GradientFn& analytic) {
    GradCheckReport report;
    report.epsilon = epsilon;
    report.tolerance = tolerance;

    const GradientStore grads = analytic(graph, params, inputs, loss);
    report.near_kink = relu_margin(graph) < 10 * epsilon;

    std::map<std::string, std::size_t> index;
    const auto record = [&](const std::string& name, Real a, Real n) {
        auto [it, inserted] = index.try_emplace(name, report.entries.size());
        if (inserted) report.entries.push_back(GradCheckEntry{name});
        GradCheckEntry& e = report.entries[it->second];
        const Real abs_err = std::abs(a - n);
        const Real rel = abs_err / std::max({std::abs(a), std::abs(n), kGradFloor});
        ++e.count;
        e.max_abs_error = std::max(e.max_abs_error, abs_err);
        e.worst_rel_error = std::max(e.worst_rel_error, rel);
        if (!(rel <= tolerance)) e.passed = false;
    };

    ParamStore work = params;
    const auto eval = [&](const ParamStore& p, std::span<const FeatureMap> in) {
        return loss(forward_graph(graph, p, in), nullptr);
    };

    // Parameters, tensor by tensor in canonical order.
    const std::vector<Real> analytic_flat = grads.params.flatten();
    std::vector<Real> flat = params.flatten();
    std::vector<std::string> names;
    params.for_each_tensor([&](const std::string& name, std::span<const Real> t) {
        names.insert(names.end(), t.size(), name);
    });
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const Real orig = flat[i];
        flat[i] = orig + epsilon;
        work.assign_flat(flat);
        const Real up = eval(work, inputs);
        flat[i] = orig - epsilon;
        work.assign_flat(flat);
        const Real down = eval(work, inputs);
        flat[i] = orig;
        const Real numeric = (up - down) / (2 * epsilon);
        record(names[i], analytic_flat[i], numeric);
    }
    work.assign_flat(flat);

    if (check_inputs) {
        std::vector<FeatureMap> in(inputs.begin(), inputs.end());
        for (std::size_t s = 0; s < in.size(); ++s) {
            const FeatureMap zero(in[s].shape());
            const FeatureMap& ga = s < grads.inputs.size() && grads.inputs[s].size() ? grads.inputs[s] : zero;
            auto d = in[s].data();
            for (std::size_t i = 0; i < d.size(); ++i) {
                const Real orig = d[i];
                d[i] = orig + epsilon;
                const Real up = eval(params, in);
                d[i] = orig - epsilon;
                const Real down = eval(params, in);
                d[i] = orig;
                record("input[" + std::to_string(s) + "]", ga.data()[i], (up - down) / (2 * epsilon));
            }
        }
    }

    // Leave the cache consistent with the unperturbed point.
    forward_graph(graph, params, inputs);
    report.passed = std::all_of(report.entries.begin(), report.entries.end(), [](const auto& e) { return e.passed; });
    return report;
}

} // namespace pdeblur::autograd
