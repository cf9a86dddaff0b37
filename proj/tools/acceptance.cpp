// SPDX-License-Identifier: Apache-2.0
//
// Acceptance harness: one PASS/FAIL line per criterion AC1..AC10. Pinned
// calibration values come from the fixture file; everything else is computed
// here from independent arithmetic or round trips.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pdeblur/experiments.hpp"
#include "pdeblur/image_io.hpp"
#include "pdeblur/metrics.hpp"
#include "pdeblur/run_config.hpp"
#include "pdeblur/serialization.hpp"
#include "pdeblur/trainer.hpp"

#ifndef PDEBLUR_FIXTURE_DIR
#define PDEBLUR_FIXTURE_DIR "tests/fixtures"
#endif

using namespace pdeblur;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fixed(double v, int decimals) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(decimals) << v;
    return os.str();
}

std::string signed_db(double v) { return (v >= 0 ? "+" : "") + fixed(v, 4) + " dB"; }

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

FeatureMap uniform_map(Shape s, std::uint64_t seed, Real lo = 0, Real hi = 1) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Real> dist(lo, hi);
    FeatureMap m(s);
    for (Real& v : m.data()) v = dist(rng);
    return m;
}

struct TrainedRun {
    train::RunStatus status = train::RunStatus::Completed;
    train::EpochMetrics last;
    Real max_grad_norm = 0;
    double cpu_s = 0;
};

/// Lazily trains and caches the pinned-dataset runs shared by AC7, AC8 and AC9.
class Runs {
public:
    Runs(const json& fixture) : fixture_(fixture) {}

    const synth::Dataset& data() {
        if (!data_) {
            synth::DatasetConfig cfg;
            cfg.seed = fixture_["dataset"]["seed"].get<std::uint64_t>();
            data_ = synth::generate_dataset(cfg);
        }
        return *data_;
    }

    RunConfig base(std::uint64_t seed) const {
        RunConfig cfg = parse_run_config("");
        apply_overrides(cfg, {"seed=" + std::to_string(seed), "run_id=acceptance"});
        return cfg;
    }

    /// Progressive (K=5) and direct fixed K=5 runs from the stability experiment.
    const train::StabilityReport& stability() {
        if (!stability_) {
            const RunConfig cfg = base(fixture_["train_seed"].get<std::uint64_t>());
            const double t0 = cpu_seconds();
            stability_ = train::stability_experiment(data(), cfg.net, cfg.train);
            stability_cpu_s_ = cpu_seconds() - t0;
            TrainedRun p;
            p.status = stability_->progressive.log.status;
            if (!stability_->progressive.epochs.empty()) p.last = stability_->progressive.epochs.back();
            p.max_grad_norm = stability_->progressive.max_grad_norm;
            p.cpu_s = stability_cpu_s_;
            cache_[{cfg.train.seed, 5}] = p;
        }
        return *stability_;
    }
    double stability_cpu_s() const { return stability_cpu_s_; }

    /// K-axis setting (0 = no PDE layers) for a training seed.
    const TrainedRun& k_run(std::uint64_t seed, std::size_t k) {
        if (k == 5 && seed == fixture_["train_seed"].get<std::uint64_t>()) stability();
        auto it = cache_.find({seed, k});
        if (it == cache_.end()) {
            const double t0 = cpu_seconds();
            const auto r = exp::run_ablation_setting(data(), base(seed), exp::AblationAxis::K, k, std::nullopt);
            TrainedRun t;
            t.status = r.status;
            t.last = r.final_metrics;
            t.max_grad_norm = r.max_grad_norm;
            t.cpu_s = cpu_seconds() - t0;
            it = cache_.emplace(std::pair{seed, k}, t).first;
        }
        return it->second;
    }

private:
    const json& fixture_;
    std::optional<synth::Dataset> data_;
    std::optional<train::StabilityReport> stability_;
    double stability_cpu_s_ = 0;
    std::map<std::pair<std::uint64_t, std::size_t>, TrainedRun> cache_;
};

// ------------------------------------------------------------------ AC1

Verdict gradient_exactness() {
    const double t0 = cpu_seconds();
    Verdict v{true, ""};
    Real worst = 0;
    for (std::size_t k : {1, 3, 5}) {
        exp::GradCheckConfig cfg;
        cfg.k = k;
        const auto r = exp::run_gradcheck(cfg);
        for (const auto& run : r.runs) {
            if (const auto* w = run.report.worst()) worst = std::max(worst, w->worst_rel_error);
        }
        if (!r.passed) {
            v.pass = false;
            v.detail += "K=" + std::to_string(k) + " failed; ";
        }
    }
    const double elapsed = cpu_seconds() - t0;
    if (elapsed >= 60) v.pass = false;
    std::ostringstream os;
    os << "K=1,3,5 8x8 C=2 5 seeds tol 1e-5: worst rel error " << std::setprecision(3) << worst << ", "
       << fixed(elapsed, 1) << " s (limit 60 s)";
    v.detail += os.str();
    return v;
}

// ------------------------------------------------------------------ AC2

Verdict identity_invariants() {
    const double t0 = cpu_seconds();
    bool ok = true;
    std::size_t cases = 0;
    for (auto vm : {pde::VelocityMode::Spatial, pde::VelocityMode::Uniform}) {
        for (auto mode : {BoundaryMode::Replicate, BoundaryMode::Periodic, BoundaryMode::ZeroPad}) {
            for (std::size_t k : {1, 5}) {
                const auto x = uniform_map(Shape{2, 3, 8, 8}, cases, -2, 2);
                const auto p = pde::PdeLayerParams::zeros(3, 8, 8, vm);
                const auto r = pde::forward(x, p, pde::Discretization{.delta_t = 1.0 / k, .K = k}, mode);
                ok = ok && r.output == x;
                ++cases;
            }
        }
    }
    for (auto mode : {BoundaryMode::Replicate, BoundaryMode::Periodic}) {
        for (std::uint64_t seed = 0; seed < 4; ++seed) {
            auto p = exp::random_layer_params(2, 8, 8, pde::VelocityMode::Spatial, seed);
            for (auto& f : p.u) std::fill(f.data().begin(), f.data().end(), Real(0));
            for (auto& f : p.v) std::fill(f.data().begin(), f.data().end(), Real(0));
            std::fill(p.source_scale.begin(), p.source_scale.end(), Real(0));
            std::fill(p.source_bias.begin(), p.source_bias.end(), Real(0));
            const FeatureMap c(Shape{1, 2, 8, 8}, 0.3 + 0.1 * static_cast<Real>(seed));
            const auto r = pde::forward(c, p, pde::Discretization{.delta_t = 0.2, .K = 5}, mode);
            ok = ok && r.output == c;
            ++cases;
        }
    }
    const double elapsed = cpu_seconds() - t0;
    return {ok && elapsed < 1.0, std::to_string(cases) + " cases exact, " + fixed(elapsed, 3) + " s (limit 1 s)"};
}

// ------------------------------------------------------------------ AC3

Verdict conservation() {
    const double t0 = cpu_seconds();
    Real worst = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto p = exp::random_layer_params(1, 8, 8, pde::VelocityMode::Uniform, 100 + seed);
        p.source_scale[0] = 0;
        p.source_bias[0] = 0;
        const auto x = uniform_map(Shape{1, 1, 8, 8}, seed);
        const auto r = pde::forward(x, p, pde::Discretization{.delta_t = 0.01, .K = 100}, BoundaryMode::Periodic);
        worst = std::max(worst, std::abs(reduce_sum(r.output) - reduce_sum(x)) / std::abs(reduce_sum(x)));
    }
    const double elapsed = cpu_seconds() - t0;
    std::ostringstream os;
    os << "10 seeds, 100 iterations: worst relative drift " << std::setprecision(3) << worst << " (limit 1e-10), "
       << fixed(elapsed, 2) << " s";
    return {worst <= 1e-10 && elapsed < 10, os.str()};
}

// ------------------------------------------------------------------ AC4

Verdict schedule_invariant(Runs& runs) {
    const double t0 = cpu_seconds();
    const auto sched = schedule::default_schedule(0.2);
    bool ok = schedule::validate(sched.total_time(), sched.phases()).empty();
    RunConfig cfg = runs.base(0);
    cfg.train.epochs = 6;
    auto built = net::build(cfg.net, 32, 32, cfg.train.seed);
    const auto st = train::train(built.network, built.params, runs.data(), cfg.train);
    std::vector<std::pair<std::size_t, std::size_t>> transitions;  // (epoch, k)
    Real worst = 0;
    for (const auto& row : st.log.rows) {
        const auto& phase = sched.phase_for_epoch(row.epoch);
        ok = ok && row.k == phase.k && row.delta_t == phase.delta_t;
        worst = std::max(worst, std::abs(static_cast<Real>(row.k) * row.delta_t - 1) / 1);
        if (transitions.empty() || transitions.back().second != row.k) transitions.emplace_back(row.epoch, row.k);
    }
    const bool steps = transitions == std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}, {2, 3}, {4, 5}};
    const double elapsed = cpu_seconds() - t0;
    ok = ok && steps && worst <= 1e-3 && st.log.status == train::RunStatus::Completed && !st.log.rows.empty() &&
         elapsed < 300;
    std::ostringstream os;
    os << st.log.rows.size() << " rows, max |K*dt - 1| " << std::setprecision(3) << worst << ", K steps ";
    for (std::size_t i = 0; i < transitions.size(); ++i) {
        os << (i ? "->" : "") << transitions[i].second << "@e" << transitions[i].first;
    }
    os << ", " << fixed(elapsed, 1) << " s (limit 300 s)";
    return {ok, os.str()};
}

// ------------------------------------------------------------------ AC5

Verdict complexity_linearity() {
    const auto counted = [](std::size_t k, std::size_t h, pde::VelocityMode vm) {
        const auto p = exp::random_layer_params(4, h, 8, vm, 1);
        const auto x = uniform_map(Shape{1, 4, h, 8}, 2);
        metrics::MacCounter c;
        pde::forward(x, p, pde::Discretization{.delta_t = 1.0 / k, .K = k}, BoundaryMode::Replicate, &c, true);
        return c.get(metrics::MacCategory::PdeLayer);
    };
    bool ok = true;
    std::ostringstream os;
    for (auto vm : {pde::VelocityMode::Spatial, pde::VelocityMode::Uniform}) {
        std::vector<std::uint64_t> c8, c16;
        for (std::size_t k : {1, 3, 5, 7}) {
            c8.push_back(counted(k, 8, vm));
            c16.push_back(counted(k, 16, vm));
            ok = ok && c8.back() == metrics::pde_layer_macs(Shape{1, 4, 8, 8}, k, vm);
            ok = ok && c16.back() == metrics::pde_layer_macs(Shape{1, 4, 16, 8}, k, vm);
        }
        const std::uint64_t d8 = c8[1] - c8[0], d16 = c16[1] - c16[0];
        for (std::size_t i = 1; i < 4; ++i) {
            ok = ok && c8[i] - c8[i - 1] == d8 && c16[i] - c16[i - 1] == d16;
        }
        ok = ok && d16 == 2 * d8 && c16[0] - d16 / 2 == 2 * (c8[0] - d8 / 2);
        os << pde::to_string(vm) << ": +" << d8 / 2 << " per K at 8x8, +" << d16 / 2 << " at 16x8; ";
    }
    const net::NetConfig net_cfg;
    for (std::size_t k : {1, 3, 5, 7}) {
        ok = ok && exp::network_macs(net_cfg, 32, 32, k, true).total() ==
                       exp::predicted_network_macs(net_cfg, 32, 32, k).total();
    }
    os << "closed form == instrumented";
    return {ok, os.str()};
}

// ------------------------------------------------------------------ AC6

Verdict overhead_structure() {
    const net::NetConfig cfg;
    const auto m1 = exp::network_macs(cfg, 32, 32, 1, true);
    const auto m5 = exp::network_macs(cfg, 32, 32, 5, true);
    const auto p1 = exp::predicted_network_macs(cfg, 32, 32, 1);
    const auto p5 = exp::predicted_network_macs(cfg, 32, 32, 5);
    const std::uint64_t c = cfg.bottleneck_channels(), hw = (32 >> cfg.depth) * (32 >> cfg.depth);
    const std::uint64_t per_pixel = metrics::pde_macs_per_pixel(cfg.velocity_mode);
    const std::uint64_t expected_delta = cfg.pde_layers * c * hw * per_pixel * 4;
    const bool sums = m1.conv + m1.pde + m1.other == m1.total() && m5.conv + m5.pde + m5.other == m5.total();
    const bool match = m1.conv == p1.conv && m1.pde == p1.pde && m1.other == p1.other && m5.conv == p5.conv &&
                       m5.pde == p5.pde && m5.other == p5.other;
    const bool delta = m5.pde - m1.pde == expected_delta && m5.conv == m1.conv && m5.other == m1.other;
    const double s1 = static_cast<double>(m1.pde) / static_cast<double>(m1.total());
    const double s5 = static_cast<double>(m5.pde) / static_cast<double>(m5.total());
    const double predicted_s5 =
        static_cast<double>(p1.pde + expected_delta) / static_cast<double>(p1.total() + expected_delta);
    std::ostringstream os;
    os << "K=1 conv " << m1.conv << " pde " << m1.pde << " other " << m1.other << " MACs, pde share "
       << fixed(100 * s1, 3) << "% -> K=5 share " << fixed(100 * s5, 3) << "% (predicted " << fixed(100 * predicted_s5, 3)
       << "%, +" << expected_delta << " MACs)";
    return {sums && match && delta && s5 == predicted_s5, os.str()};
}

// ------------------------------------------------------------------ AC7

Verdict efficacy(Runs& runs, const json& fx) {
    const auto& ds = runs.data();
    const Real blurred = synth::mean_blurred_psnr(ds.val);
    const Real pinned_blurred = fx["dataset"]["blurred_val_psnr_db"].get<Real>();
    const Real band = fx["dataset"]["band_db"].get<Real>();
    const bool data_ok = ds.train.size() == 512 && ds.val.size() == 64 && std::abs(blurred - pinned_blurred) <= band &&
                         ds.train.front().sharp.shape() == Shape{1, 3, 32, 32};
    runs.stability();
    const auto& run = runs.k_run(fx["train_seed"].get<std::uint64_t>(), 5);
    const Real gain = run.last.val_psnr - run.last.blurred_psnr;
    const Real margin = fx["efficacy"]["required_margin_db"].get<Real>();
    const Real expected = fx["efficacy"]["expected_order_db"].get<Real>();
    const double minutes = runs.stability_cpu_s() / 60;
    std::ostringstream os;
    os << "blurred val " << fixed(blurred, 3) << " dB (pinned " << fixed(pinned_blurred, 3) << " +/- " << band
       << "), status " << train::to_string(run.status) << ", restored " << fixed(run.last.val_psnr, 3)
       << " dB, gain " << signed_db(gain) << " vs pinned margin " << signed_db(margin) << " (expected order "
       << signed_db(expected) << (gain >= expected ? " reached" : " not reached") << "), SSIM "
       << fixed(run.last.val_ssim, 4) << ", <= " << fixed(minutes, 1) << " CPU-min";
    return {data_ok && run.status == train::RunStatus::Completed && gain >= margin && minutes <= 30, os.str()};
}

// ------------------------------------------------------------------ AC8

struct Ordering {
    Real k0 = 0, k1 = 0, k5 = 0;
    bool k_ok() const { return k0 <= k1 && k1 <= k5; }
    bool layers_ok() const { return k5 >= k0; }
    bool ok() const { return k_ok() && layers_ok(); }
};

Verdict ablation_trend(Runs& runs, const json& fx) {
    const auto& ab = fx["ablation"];
    const auto measure = [&](std::uint64_t seed) {
        Ordering o;
        o.k0 = runs.k_run(seed, 0).last.val_psnr;
        o.k1 = runs.k_run(seed, 1).last.val_psnr;
        o.k5 = runs.k_run(seed, 5).last.val_psnr;
        return o;
    };
    const auto describe = [](std::uint64_t seed, const Ordering& o) {
        std::ostringstream os;
        os << "seed " << seed << ": K0 " << fixed(o.k0, 4) << " K1 " << fixed(o.k1, 4) << " K5 " << fixed(o.k5, 4)
           << (o.ok() ? " ok" : " violated");
        return os.str();
    };
    const std::uint64_t pinned = ab["pinned_seed"].get<std::uint64_t>();
    const Ordering first = measure(pinned);
    std::string detail = describe(pinned, first);
    if (first.ok()) return {true, detail + " (layers 0/5 reuse K0/K5)"};

    // The pinned seed violates the trend: fall back to the three-seed majority.
    std::size_t votes = first.ok() ? 1 : 0;
    const auto seeds = ab["majority_seeds"].get<std::vector<std::uint64_t>>();
    for (std::uint64_t seed : seeds) {
        if (seed == pinned) continue;
        const Ordering o = measure(seed);
        votes += o.ok() ? 1 : 0;
        detail += "; " + describe(seed, o);
    }
    const bool pass = 2 * votes > seeds.size();
    detail += "; majority " + std::to_string(votes) + "/" + std::to_string(seeds.size()) + " (layers 0/5 reuse K0/K5)";
    return {pass, detail};
}

// ------------------------------------------------------------------ AC9

Verdict stability_harness(Runs& runs, const json& fx) {
    synth::DatasetConfig small;
    small.count = 10;
    small.size = 8;
    small.val_fraction = 0.2;
    small.test_fraction = 0.2;
    const auto tiny = synth::generate_dataset(small);
    net::NetConfig net_cfg;
    net_cfg.base_channels = 2;
    net_cfg.pde_layers = 2;
    net_cfg.zero_init_output = false;
    train::TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.ssim_mode = metrics::SsimMode::Block8;
    tc.epochs = 1;
    auto a = net::build(net_cfg, 8, 8, 0);
    const auto clean = train::train(a.network, a.params, tiny, tc);
    const std::size_t inject = clean.log.rows.size();
    train::TrainHooks hooks;
    hooks.on_gradients = [&](std::size_t, std::size_t step, autograd::GradientStore& g) {
        if (step == inject) {
            g.params.for_each_tensor([](const std::string&, std::span<Real> t) {
                for (Real& v : t) v *= 1e9;
            });
        }
    };
    tc.epochs = 4;
    const auto blown = train::train(a.network, a.params, tiny, tc, hooks);
    const bool halted = blown.log.status == train::RunStatus::Diverged && blown.log.diverged_step == inject &&
                        blown.log.rows.size() == inject + 1 && blown.log.rows.back().grad_norm > 1e3 &&
                        blown.log.rows.back().status == "diverged" && blown.params == clean.params;

    const auto& rep = runs.stability();
    const std::string summary = rep.summary();
    bool format = rep.same_epoch0_order && summary.find("max_grad_norm") != std::string::npos &&
                  summary.find("direct") != std::string::npos && summary.find("progressive") != std::string::npos;
    for (const auto& row : rep.direct.log.rows) format = format && row.k == 5;
    for (const auto& row : rep.progressive.log.rows) {
        format = format && row.k == (row.epoch < 2 ? 1u : row.epoch < 4 ? 3u : 5u);
    }
    const Real pinned_direct = fx["stability"]["direct_max_grad_norm"].get<Real>();
    const Real pinned_prog = fx["stability"]["progressive_max_grad_norm"].get<Real>();
    const bool ordering = rep.direct.max_grad_norm >= rep.progressive.max_grad_norm;
    std::ostringstream os;
    os << "injected x1e9 at step " << inject << ": " << (halted ? "halted at that step, no update" : "NOT halted")
       << "; direct " << train::to_string(rep.direct.log.status) << " max grad norm " << std::setprecision(4)
       << rep.direct.max_grad_norm << " (pinned " << pinned_direct << ") vs progressive " << rep.progressive.max_grad_norm
       << " (pinned " << pinned_prog << ")" << (rep.direct.log.status == train::RunStatus::Diverged
                                                     ? ", direct diverged"
                                                     : ", direct did not diverge at toy scale");
    return {halted && format && ordering, os.str()};
}

// ------------------------------------------------------------------ AC10

Verdict round_trips(Runs& runs, const fs::path& work) {
    const double t0 = cpu_seconds();
    fs::create_directories(work);
    bool io_ok = true;
    for (std::size_t c : {1, 3}) {
        const auto img = synth::render_sharp_image(16, c, 40 + c);
        const auto path = work / (c == 1 ? "img.pgm" : "img.ppm");
        io::write_image(path, img);
        io_ok = io_ok && io::read_image(path) == img;
    }

    synth::DatasetConfig dc;
    const auto again = synth::generate_dataset(dc);
    const auto& ds = runs.data();
    bool regen = again.total() == ds.total();
    for (std::size_t i = 0; regen && i < ds.train.size(); ++i) {
        regen = again.train[i].sharp == ds.train[i].sharp && again.train[i].blurred == ds.train[i].blurred;
    }
    synth::save_dataset(again, work / "data");
    const auto loaded = synth::load_dataset(work / "data");
    bool disk = loaded.total() == ds.total();
    for (std::size_t i = 0; disk && i < ds.val.size(); ++i) {
        disk = loaded.val[i].sharp == ds.val[i].sharp && loaded.val[i].blurred == ds.val[i].blurred;
    }

    synth::DatasetConfig small;
    small.count = 10;
    small.size = 8;
    small.val_fraction = 0.2;
    small.test_fraction = 0.2;
    const auto tiny = synth::generate_dataset(small);
    net::NetConfig nc;
    nc.base_channels = 2;
    nc.pde_layers = 2;
    train::TrainConfig tc;
    tc.epochs = 6;
    tc.ssim_mode = metrics::SsimMode::Block8;
    auto b = net::build(nc, 8, 8, 1);
    const auto full = train::train(b.network, b.params, tiny, tc);
    train::TrainHooks halt;
    halt.halt_before_epoch = [](std::size_t e) { return e == 3; };
    const auto half = train::train(b.network, b.params, tiny, tc, halt);
    train::Checkpoint ck{nc, 8, 8, tc, tc.schedule.phase_index(half.next_epoch), half};
    train::save_checkpoint(work / "half.ckpt", ck);
    const auto back = train::load_checkpoint(work / "half.ckpt");
    const bool saved = back.state.params == half.params && back.state.optimizer == half.optimizer &&
                       back.state.next_epoch == 3 && back.schedule_position == ck.schedule_position;
    auto network = net::build_graph(back.net, 8, 8);
    const auto resumed = train::resume(network, back.state, tiny, back.train);
    const bool resume_ok = resumed.params == full.params && resumed.optimizer == full.optimizer;
    const double elapsed = cpu_seconds() - t0;
    std::ostringstream os;
    os << "image io " << (io_ok ? "exact" : "MISMATCH") << ", dataset regeneration " << (regen ? "exact" : "MISMATCH")
       << ", dataset disk " << (disk ? "exact" : "MISMATCH") << ", checkpoint " << (saved ? "exact" : "MISMATCH")
       << ", resume at epoch 3 of 6 " << (resume_ok ? "bit-identical" : "DIFFERS") << ", " << fixed(elapsed, 1)
       << " s (limit 60 s)";
    fs::remove_all(work);
    return {io_ok && regen && disk && saved && resume_ok && elapsed < 60, os.str()};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria AC1..AC10"};
    std::string fixture_path = std::string(PDEBLUR_FIXTURE_DIR) + "/calibration.json";
    std::vector<std::string> only;
    std::vector<std::string> allow_fail;
    std::string work = (fs::temp_directory_path() / "pdeblur_acceptance").string();
    app.add_option("--fixture", fixture_path, "Pinned calibration values")->capture_default_str();
    app.add_option("--only", only, "Run only these criteria (e.g. AC1 AC5)")->delimiter(',');
    app.add_option("--allow-fail", allow_fail,
                   "Criteria whose FAIL does not change the exit code (documented known failures)")
        ->delimiter(',');
    app.add_option("--work", work, "Scratch directory")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    json fx;
    try {
        fx = json::parse(read_text_file(fixture_path));
    } catch (const std::exception& e) {
        std::cerr << "cannot load fixture: " << e.what() << "\n";
        return 2;
    }
    Runs runs(fx);

    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"AC1", [] { return gradient_exactness(); }},
        {"AC2", [] { return identity_invariants(); }},
        {"AC3", [] { return conservation(); }},
        {"AC4", [&] { return schedule_invariant(runs); }},
        {"AC5", [] { return complexity_linearity(); }},
        {"AC6", [] { return overhead_structure(); }},
        {"AC7", [&] { return efficacy(runs, fx); }},
        {"AC8", [&] { return ablation_trend(runs, fx); }},
        {"AC9", [&] { return stability_harness(runs, fx); }},
        {"AC10", [&] { return round_trips(runs, fs::path(work)); }},
    };
    const std::set<std::string> selected(only.begin(), only.end());
    const std::set<std::string> tolerated(allow_fail.begin(), allow_fail.end());
    bool blocking = false;
    std::size_t passed = 0, ran = 0;
    for (const auto& [id, fn] : criteria) {
        if (!selected.empty() && !selected.count(id)) continue;
        ++ran;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        passed += v.pass ? 1 : 0;
        if (!v.pass && !tolerated.count(id)) blocking = true;
        std::cout << std::left << std::setw(5) << id << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << " ["
                  << fixed(s, 1) << " s wall]" << (v.pass || !tolerated.count(id) ? "" : " (known failure)") << "\n"
                  << std::flush;
    }
    std::cout << passed << "/" << ran << " criteria passed\n";
    return blocking ? 1 : 0;
}
