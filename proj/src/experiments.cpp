// SPDX-License-Identifier: Apache-2.0

#include "pdeblur/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include "pdeblur/metrics.hpp"
#include "pdeblur/rng.hpp"
#include "pdeblur/serialization.hpp"

namespace pdeblur::exp {

namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

pde::PdeLayerParams random_layer_params(std::size_t channels, std::size_t height, std::size_t width,
                                        pde::VelocityMode mode, std::uint64_t seed) {
    pde::PdeLayerParams p = pde::init_params(channels, height, width, mode, seed);
    std::mt19937_64 rng(derive_seed(seed, 77));
    std::uniform_real_distribution<Real> vel(-0.4, 0.4);
    std::uniform_real_distribution<Real> raw(-3.0, -1.0);
    std::uniform_real_distribution<Real> scale(-0.5, 0.5);
    for (auto& f : p.u) for (Real& x : f.data()) x = vel(rng);
    for (auto& f : p.v) for (Real& x : f.data()) x = vel(rng);
    for (Real& x : p.dx_raw) x = raw(rng);
    for (Real& x : p.dy_raw) x = raw(rng);
    for (Real& x : p.source_scale) x = scale(rng);
    for (Real& x : p.source_bias) x = scale(rng);
    return p;
}

GradCheckResult run_gradcheck(const GradCheckConfig& cfg) {
    if (cfg.k == 0) throw ContractError("gradcheck: K must be >= 1");
    if (cfg.seeds == 0) throw ContractError("gradcheck: need at least one seed");
    if (cfg.height == 0 || cfg.width == 0 || cfg.channels == 0) throw ContractError("gradcheck: empty field");
    const auto t0 = clock_type::now();
    GradCheckResult result;
    for (std::size_t i = 0; i < cfg.seeds; ++i) {
        const std::uint64_t seed = cfg.first_seed + i;
        autograd::Graph g;
        const auto in = g.add_input(0, cfg.channels, cfg.height, cfg.width);
        g.set_outputs({g.add_pde_layer(in, 0, cfg.boundary)});
        g.set_discretization(pde::Discretization{.delta_t = Real(1) / static_cast<Real>(cfg.k), .K = cfg.k});
        autograd::ParamStore params;
        params.pdes.push_back(random_layer_params(cfg.channels, cfg.height, cfg.width, cfg.velocity_mode, seed));
        FeatureMap x(Shape{1, cfg.channels, cfg.height, cfg.width});
        std::mt19937_64 rng(derive_seed(seed, 5));
        std::uniform_real_distribution<Real> unit(0, 1);
        for (Real& v : x.data()) v = unit(rng);
        const FeatureMap inputs[] = {x};
        GradCheckSeedResult r;
        r.seed = seed;
        r.report = autograd::grad_check(g, params, inputs, cfg.epsilon, cfg.tolerance,
                                        autograd::weighted_sum_loss(derive_seed(seed, 9)));
        result.passed = result.passed && r.report.passed;
        result.runs.push_back(std::move(r));
    }
    result.wall_ms = std::chrono::duration<double, std::milli>(clock_type::now() - t0).count();
    return result;
}

MacBreakdown network_macs(const net::NetConfig& config, std::size_t height, std::size_t width, std::size_t k,
                          bool instrumented) {
    auto built = net::build(config, height, width, 0);
    built.network.set_discretization(pde::Discretization{.delta_t = Real(1) / static_cast<Real>(k), .K = k});
    metrics::MacCounter counter;
    autograd::ForwardOptions opts;
    opts.macs = &counter;
    opts.instrumented = instrumented;
    const FeatureMap inputs[] = {FeatureMap(Shape{1, config.image_channels, height, width}, Real(0.5))};
    autograd::forward_graph(built.network.graph, built.params, inputs, opts);
    return {counter.get(metrics::MacCategory::Conv), counter.get(metrics::MacCategory::PdeLayer),
            counter.get(metrics::MacCategory::Other)};
}

MacBreakdown predicted_network_macs(const net::NetConfig& cfg, std::size_t height, std::size_t width, std::size_t k) {
    cfg.validate();
    cfg.check_image_size(height, width);
    MacBreakdown m;
    const auto conv = [&](std::size_t in, std::size_t out, std::size_t h, std::size_t w) {
        m.conv += metrics::conv2d_macs(Shape{1, in, h, w}, out);
    };
    std::size_t h = height, w = width, ch_in = cfg.image_channels;
    std::vector<std::size_t> skip_ch;
    for (std::size_t level = 0; level < cfg.depth; ++level) {
        const std::size_t ch = cfg.base_channels << level;
        conv(ch_in, ch, h, w);
        conv(ch, ch, h, w);
        skip_ch.push_back(ch);
        h /= 2;
        w /= 2;
        m.other += ch * h * w;
        ch_in = ch;
    }
    const std::size_t bott = cfg.bottleneck_channels();
    conv(ch_in, bott, h, w);
    m.pde += cfg.pde_layers * metrics::pde_layer_macs(Shape{1, bott, h, w}, k, cfg.velocity_mode);
    conv(bott, bott, h, w);
    ch_in = bott;
    for (std::size_t level = cfg.depth; level-- > 0;) {
        h *= 2;
        w *= 2;
        const std::size_t ch = cfg.base_channels << level;
        conv(ch_in + (cfg.skip_connections ? skip_ch[level] : 0), ch, h, w);
        conv(ch, ch, h, w);
        ch_in = ch;
    }
    conv(ch_in, cfg.image_channels, h, w);
    return m;
}

std::vector<BenchRow> run_bench(const std::vector<std::size_t>& k_list, const Shape& shape, pde::VelocityMode mode,
                                std::size_t repeats, std::uint64_t seed) {
    if (k_list.empty()) throw ContractError("bench: empty K list");
    if (repeats == 0) throw ContractError("bench: repeats must be >= 1");
    const pde::PdeLayerParams params = pde::init_params(shape.channels, shape.height, shape.width, mode, seed);
    FeatureMap x(shape);
    std::mt19937_64 rng(derive_seed(seed, 3));
    std::uniform_real_distribution<Real> unit(0, 1);
    for (Real& v : x.data()) v = unit(rng);
    std::vector<BenchRow> rows;
    for (std::size_t k : k_list) {
        if (k == 0) throw ContractError("bench: K must be >= 1");
        const pde::Discretization disc{.delta_t = Real(1) / static_cast<Real>(k), .K = k};
        BenchRow row;
        row.k = k;
        row.shape = shape;
        metrics::MacCounter counted;
        pde::forward(x, params, disc, BoundaryMode::Replicate, &counted, true);
        row.macs_instrumented = counted.total();
        row.macs_closed_form = metrics::pde_layer_macs(shape, k, mode);
        row.wall_ms = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < repeats; ++r) {
            const auto t0 = clock_type::now();
            pde::forward(x, params, disc, BoundaryMode::Replicate);
            row.wall_ms = std::min(row.wall_ms, std::chrono::duration<double, std::milli>(clock_type::now() - t0).count());
        }
        rows.push_back(row);
    }
    return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::ostringstream os;
    os << "k,batch,channels,height,width,macs_instrumented,macs_closed_form,gmacs,wall_ms\n";
    for (const auto& r : rows) {
        char ms[32];
        std::snprintf(ms, sizeof ms, "%.4f", r.wall_ms);
        os << r.k << "," << r.shape.batch << "," << r.shape.channels << "," << r.shape.height << "," << r.shape.width
           << "," << r.macs_instrumented << "," << r.macs_closed_form << "," << metrics::format_gmacs(r.macs_closed_form)
           << "," << ms << "\n";
    }
    return os.str();
}

std::string metrics_csv_header() { return "run_id,epoch,split,psnr_db,ssim,ssim_mode,gmacs"; }

std::string metrics_csv_row(const std::string& run_id, std::size_t epoch, const std::string& split, Real psnr,
                            Real ssim, metrics::SsimMode mode, std::uint64_t macs) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f,%.5f", static_cast<double>(psnr), static_cast<double>(ssim));
    return run_id + "," + std::to_string(epoch) + "," + split + "," + buf + "," + metrics::to_string(mode) + "," +
           metrics::format_gmacs(macs);
}

std::string to_string(AblationAxis a) { return a == AblationAxis::K ? "k" : "layers"; }

AblationAxis ablation_axis_from_string(const std::string& s) {
    if (s == "k") return AblationAxis::K;
    if (s == "layers") return AblationAxis::Layers;
    throw ContractError("unknown ablation axis '" + s + "' (expected k or layers)");
}

RunConfig ablation_config(const RunConfig& base, AblationAxis axis, std::size_t value) {
    RunConfig cfg = base;
    if (axis == AblationAxis::K) {
        if (value == 0) {
            cfg.net.pde_layers = 0;
        } else {
            cfg.phases.clear();
            cfg.schedule_spec = "progressive:" + std::to_string(value);
        }
    } else {
        cfg.net.pde_layers = value;
    }
    cfg.train.run_id = base.train.run_id + "_" + to_string(axis) + std::to_string(value);
    cfg.resolve();
    return cfg;
}

AblationResult run_ablation_setting(const synth::Dataset& data, const RunConfig& base, AblationAxis axis,
                                    std::size_t value, const std::optional<fs::path>& out_dir) {
    if (data.train.empty()) throw ContractError("ablate: training split is empty");
    const RunConfig cfg = ablation_config(base, axis, value);
    const Shape s = data.train.front().sharp.shape();
    auto built = net::build(cfg.net, s.height, s.width, cfg.train.seed);
    train::TrainState st = train::train(built.network, std::move(built.params), data, cfg.train);
    AblationResult r;
    r.axis = axis;
    r.value = value;
    r.run_id = cfg.train.run_id;
    r.status = st.log.status;
    if (!st.epochs.empty()) r.final_metrics = st.epochs.back();
    r.max_grad_norm = st.log.max_grad_norm();
    r.ssim_mode = cfg.train.ssim_mode;
    const std::size_t last_k =
        cfg.train.epochs == 0 ? 1 : cfg.train.schedule.phase_for_epoch(cfg.train.epochs - 1).k;
    r.macs = predicted_network_macs(cfg.net, s.height, s.width, last_k);
    if (out_dir) {
        const fs::path dir = *out_dir / r.run_id;
        fs::create_directories(dir);
        write_text_file(dir / "runlog.csv", st.log.to_csv());
        std::string m = metrics_csv_header() + "\n";
        for (const auto& e : st.epochs) {
            m += metrics_csv_row(r.run_id, e.epoch, "val", e.val_psnr, e.val_ssim, cfg.train.ssim_mode,
                                 predicted_network_macs(cfg.net, s.height, s.width, e.k).total()) +
                 "\n";
        }
        write_text_file(dir / "metrics.csv", m);
    }
    return r;
}

std::string ablation_csv(const std::vector<AblationResult>& results) {
    std::ostringstream os;
    os << "axis,value,run_id,status,val_psnr_db,val_ssim,ssim_mode,blurred_psnr_db,gain_db,pde_gmacs,total_gmacs,"
          "max_grad_norm\n";
    for (const auto& r : results) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%.4f,%.5f,%s,%.4f,%.4f", static_cast<double>(r.final_metrics.val_psnr),
                      static_cast<double>(r.final_metrics.val_ssim), metrics::to_string(r.ssim_mode).c_str(),
                      static_cast<double>(r.final_metrics.blurred_psnr),
                      static_cast<double>(r.final_metrics.val_psnr - r.final_metrics.blurred_psnr));
        char norm[32];
        std::snprintf(norm, sizeof norm, "%.6g", static_cast<double>(r.max_grad_norm));
        os << to_string(r.axis) << "," << r.value << "," << r.run_id << "," << train::to_string(r.status) << ","
           << buf << "," << metrics::format_gmacs(r.macs.pde) << "," << metrics::format_gmacs(r.macs.total()) << ","
           << norm << "\n";
    }
    return os.str();
}

bool non_decreasing(const std::vector<AblationResult>& ordered) {
    for (std::size_t i = 1; i < ordered.size(); ++i) {
        if (ordered[i].final_metrics.val_psnr < ordered[i - 1].final_metrics.val_psnr) return false;
    }
    return true;
}

} // namespace pdeblur::exp
