// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <iomanip>
#include <sstream>

#include "pdeblur/serialization.hpp"
#include "pdeblur/trainer.hpp"

using namespace pdeblur;
using namespace pdeblur::train;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("pdeblur_test_" + name);
    fs::remove_all(p);
    return p;
}

const synth::Dataset& tiny_data() {
    static const synth::Dataset ds = [] {
        synth::DatasetConfig cfg;
        cfg.count = 10;
        cfg.size = 8;
        cfg.val_fraction = 0.2;
        cfg.test_fraction = 0.2;
        return synth::generate_dataset(cfg);
    }();
    return ds;
}

net::NetConfig tiny_net() {
    net::NetConfig n;
    n.base_channels = 2;
    n.pde_layers = 2;
    n.zero_init_output = false;
    return n;
}

TrainConfig tiny_train(std::size_t epochs) {
    TrainConfig t;
    t.epochs = epochs;
    t.learning_rate = 1e-3;
    t.seed = 3;
    t.ssim_mode = metrics::SsimMode::Block8;
    return t;
}

// Log rows with the wall-clock column dropped.
std::string timeless(const RunLog& log) {
    std::ostringstream os;
    for (const auto& r : log.rows) {
        os << r.epoch << ',' << r.step << ',' << r.k << ',' << r.delta_t << ',' << r.loss << ',' << r.grad_norm << ','
           << r.status << '\n';
    }
    return os.str();
}

TrainState run(const TrainConfig& t, const TrainHooks& hooks = {}) {
    auto b = net::build(tiny_net(), 8, 8, t.seed);
    return train::train(b.network, b.params, tiny_data(), t, hooks);
}

} // namespace

TEST_CASE("losses and their gradients") {
    const Shape s{1, 1, 1, 4};
    const FeatureMap pred(s, {0.1, 0.5, 0.9, 0.4});
    const FeatureMap target(s, {0.1, 0.2, 1.0, 0.7});
    FeatureMap g;
    CHECK(compute_loss(LossKind::L1, 0, pred, target, &g) == doctest::Approx((0 + 0.3 + 0.1 + 0.3) / 4));
    CHECK(g.at(0, 0, 0, 1) == doctest::Approx(0.25));
    CHECK(g.at(0, 0, 0, 2) == doctest::Approx(-0.25));

    const Real eps = 1e-3;
    Real expect = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        const Real d = pred.data()[i] - target.data()[i];
        expect += std::sqrt(d * d + eps * eps);
    }
    CHECK(compute_loss(LossKind::Charbonnier, eps, pred, target, &g) == doctest::Approx(expect / 4));
    for (std::size_t i = 0; i < 4; ++i) {
        FeatureMap up = pred, down = pred;
        up.data()[i] += 1e-6;
        down.data()[i] -= 1e-6;
        const Real fd = (compute_loss(LossKind::Charbonnier, eps, up, target, nullptr) -
                         compute_loss(LossKind::Charbonnier, eps, down, target, nullptr)) /
                        2e-6;
        CHECK(g.data()[i] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("divergence detector") {
    metrics::GradNormRecord r;
    r.global_norm = 999;
    CHECK_FALSE(detect_divergence(r, 0.5, 1000).diverged);
    r.global_norm = 1001;
    const auto d = detect_divergence(r, 0.5, 1000);
    CHECK(d.diverged);
    CHECK(d.reason == "grad_norm 1001 > 1000");
    r.global_norm = 1;
    const auto nan = detect_divergence(r, std::numeric_limits<Real>::quiet_NaN(), 1000);
    CHECK(nan.diverged);
    CHECK(nan.reason == "non-finite loss");
    r.finite = false;
    CHECK(detect_divergence(r, 0.5, 1000).reason == "non-finite grad_norm");
}

TEST_CASE("optimizer first steps") {
    autograd::ParamStore p;
    p.convs = {autograd::Conv2dParams::zeros(1, 1)};
    auto g = p.zeros_like();
    g.convs[0].weight[0] = 0.5;
    g.convs[0].bias[0] = -2;
    TrainConfig adam;
    adam.learning_rate = 0.1;
    OptimizerState st;
    auto q = p;
    optimizer_step(adam, q, g, st);
    CHECK(st.steps == 1);
    CHECK(q.convs[0].weight[0] == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(q.convs[0].bias[0] == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(q.convs[0].weight[1] == 0);

    TrainConfig sgd = adam;
    sgd.optimizer = OptimizerKind::Sgd;
    OptimizerState s2;
    auto r = p;
    optimizer_step(sgd, r, g, s2);
    optimizer_step(sgd, r, g, s2);
    CHECK(r.convs[0].weight[0] == doctest::Approx(-0.1 * 0.5 * (1 + 1.9)));
}

TEST_CASE("zero epochs and zero learning rate leave parameters alone") {
    auto b = net::build(tiny_net(), 8, 8, 3);
    const auto initial = b.params;
    const auto none = train::train(b.network, b.params, tiny_data(), tiny_train(0));
    CHECK(none.params == initial);
    CHECK(none.log.rows.empty());
    CHECK(none.log.status == RunStatus::Completed);

    auto frozen = tiny_train(2);
    frozen.learning_rate = 0;
    const auto r = train::train(b.network, b.params, tiny_data(), frozen);
    CHECK(r.params == initial);
    CHECK(r.log.rows.size() == 6);
}

TEST_CASE("training is deterministic and follows the schedule") {
    const auto t = tiny_train(6);
    const auto a = run(t);
    const auto b = run(t);
    CHECK(a.params == b.params);
    CHECK(timeless(a.log) == timeless(b.log));
    CHECK(a.log.status == RunStatus::Completed);
    REQUIRE(a.log.rows.size() == 18);
    for (std::size_t i = 0; i < a.log.rows.size(); ++i) {
        const auto& row = a.log.rows[i];
        CHECK(row.step == i);
        CHECK(row.k == t.schedule.phase_for_epoch(row.epoch).k);
        CHECK(static_cast<Real>(row.k) * row.delta_t == doctest::Approx(1.0).epsilon(1e-3));
        CHECK(row.status == "ok");
    }
    CHECK(a.log.rows[5].k == 1);
    CHECK(a.log.rows[6].k == 3);
    CHECK(a.log.rows[12].k == 5);
    CHECK(a.epochs.size() == 6);
    CHECK(a.optimizer.steps == 18);
}

TEST_CASE("epoch order is a seeded permutation") {
    const auto a = epoch_order(1, 0, 10);
    CHECK(a == epoch_order(1, 0, 10));
    CHECK_FALSE(a == epoch_order(1, 1, 10));
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 10; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("amplified gradients halt the run before the update") {
    const auto clean = run(tiny_train(1));
    REQUIRE(clean.log.rows.size() == 3);
    TrainHooks hooks;
    hooks.on_gradients = [](std::size_t, std::size_t step, autograd::GradientStore& g) {
        if (step == 3) {
            g.params.for_each_tensor([](const std::string&, std::span<Real> t) {
                for (Real& v : t) v *= 1e9;
            });
        }
    };
    const auto blown = run(tiny_train(4), hooks);
    CHECK(blown.log.status == RunStatus::Diverged);
    CHECK(blown.log.diverged_step == 3);
    CHECK(blown.log.diverged_epoch == 1);
    REQUIRE(blown.log.rows.size() == 4);
    CHECK(blown.log.rows.back().status == "diverged");
    CHECK(blown.log.rows.back().grad_norm > 1000);
    CHECK(blown.log.reason.rfind("grad_norm ", 0) == 0);
    CHECK(blown.params == clean.params);
}

TEST_CASE("checkpoints round-trip and resume bit-exactly") {
    const auto dir = scratch("ckpt");
    const auto t = tiny_train(6);
    TrainHooks hooks;
    hooks.checkpoint_dir = dir;
    const auto full = run(t, hooks);
    CHECK(fs::exists(dir / "final.ckpt"));
    CHECK(fs::exists(dir / "epoch_002.ckpt"));
    CHECK(fs::exists(dir / "epoch_004.ckpt"));

    Checkpoint ck;
    ck.net = tiny_net();
    ck.height = ck.width = 8;
    ck.train = t;
    ck.state = full;
    ck.schedule_position = 2;
    const auto path = dir / "manual.ckpt";
    save_checkpoint(path, ck);
    const auto back = load_checkpoint(path);
    CHECK(back.state.params == full.params);
    CHECK(back.state.optimizer == full.optimizer);
    CHECK(back.state.next_epoch == 6);
    CHECK(back.state.global_step == full.global_step);
    CHECK(back.state.log.to_csv() == full.log.to_csv());
    CHECK(back.state.epochs == full.epochs);
    CHECK(back.net == ck.net);
    CHECK(back.train.to_json() == t.to_json());
    CHECK(back.schedule_position == 2);

    TrainHooks halt;
    halt.halt_before_epoch = [](std::size_t e) { return e == 3; };
    const auto half = run(t, halt);
    CHECK(half.log.status == RunStatus::Halted);
    CHECK(half.next_epoch == 3);
    ck.state = half;
    save_checkpoint(path, ck);
    auto restored = load_checkpoint(path);
    auto network = net::build_graph(restored.net, 8, 8);
    const auto resumed = resume(network, restored.state, tiny_data(), restored.train);
    CHECK(resumed.params == full.params);
    CHECK(resumed.optimizer == full.optimizer);
    CHECK(timeless(resumed.log) == timeless(full.log));
    CHECK(resumed.log.status == RunStatus::Completed);

    std::string bytes = read_text_file(path);
    const auto pos = bytes.find("\"version\":1");
    REQUIRE(pos != std::string::npos);
    bytes.replace(pos, 11, "\"version\":2");
    std::ofstream(path, std::ios::binary) << bytes;
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version"), FormatError);

    std::ofstream(path, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    fs::remove_all(dir);
}

TEST_CASE("run log serialization") {
    RunLog log;
    log.run_id = "r";
    log.rows.push_back({0, 0, 1, 1.0, 0.5, std::numeric_limits<Real>::quiet_NaN(), 1.5, "diverged"});
    log.status = RunStatus::Diverged;
    log.diverged_epoch = 0;
    log.diverged_step = 0;
    log.reason = "non-finite grad_norm";
    CHECK(RunLog::csv_header() == "run_id,epoch,step,k,delta_t,loss,grad_norm,wall_ms,status");
    const auto back = RunLog::from_json(log.to_json());
    CHECK(back.to_csv() == log.to_csv());
    CHECK(std::isnan(back.rows[0].grad_norm));
    CHECK(back.reason == log.reason);
    CHECK(std::isinf(log.max_grad_norm()));
}

TEST_CASE("train config json and validation") {
    TrainConfig t;
    t.optimizer = OptimizerKind::Sgd;
    t.loss = LossKind::L1;
    t.clip_grad_norm = 5;
    t.schedule = schedule::progressive_to(3, 0.2);
    t.ssim_mode = metrics::SsimMode::Block8;
    const auto back = TrainConfig::from_json(t.to_json());
    CHECK(back.to_json() == t.to_json());
    CHECK(back.schedule == t.schedule);
    TrainConfig bad;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = TrainConfig{};
    bad.learning_rate = -1;
    CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("stability comparison on a toy run") {
    const auto rep = stability_experiment(tiny_data(), tiny_net(), tiny_train(6));
    CHECK(rep.same_epoch0_order);
    CHECK(rep.moments_carried_over);
    CHECK(rep.direct.schedule == "fixed:5,0.2");
    CHECK(rep.progressive.schedule == "1->3->5");
    for (const auto& row : rep.direct.log.rows) CHECK(row.k == 5);
    std::vector<std::size_t> ks;
    for (const auto& row : rep.progressive.log.rows) {
        if (ks.empty() || ks.back() != row.k) ks.push_back(row.k);
    }
    CHECK(ks == std::vector<std::size_t>{1, 3, 5});
    CHECK(rep.progressive.log.rows[6].k == 3);
    CHECK(rep.progressive.log.rows[12].k == 5);
    CHECK(rep.csv().find("\ndirect,") != std::string::npos);
    CHECK(rep.csv().find("\nprogressive,") != std::string::npos);
    CHECK(rep.summary().find("max_grad_norm") != std::string::npos);
    CHECK(rep.summary().find("direct") != std::string::npos);
}
