// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "pdeblur/experiments.hpp"
#include "pdeblur/run_config.hpp"

using namespace pdeblur;

TEST_CASE("defaults") {
    const auto c = parse_run_config("");
    CHECK(c.net == net::NetConfig{});
    CHECK(c.train.schedule == schedule::default_schedule(0.2));
    CHECK(c.train.epochs == 12);
}

TEST_CASE("keys, comments and schedules") {
    const auto c = parse_run_config(R"(# toy run
depth = 3
pde_layers=2   # fewer layers
velocity_mode = uniform
optimizer = sgd
loss = l1
learning_rate = 0.01
schedule = progressive:3
epoch_scale = 1
clip_grad_norm = 10
ssim_mode = block8
)");
    CHECK(c.net.depth == 3);
    CHECK(c.net.pde_layers == 2);
    CHECK(c.net.velocity_mode == pde::VelocityMode::Uniform);
    CHECK(c.train.optimizer == train::OptimizerKind::Sgd);
    CHECK(c.train.loss == train::LossKind::L1);
    CHECK(c.train.learning_rate == doctest::Approx(0.01));
    CHECK(c.train.schedule == schedule::progressive_to(3, 1.0));
    CHECK(c.train.clip_grad_norm == 10);
    CHECK(c.train.ssim_mode == metrics::SsimMode::Block8);
}

TEST_CASE("explicit phases replace the schedule spec") {
    const auto c = parse_run_config("phase = 0, 1\nphase = 2, 2\nphase = 5, 4, 0.25\n");
    const auto& p = c.train.schedule.phases();
    REQUIRE(p.size() == 3);
    CHECK(p[1].delta_t == 0.5);
    CHECK(p[2].start_epoch == 5);
    CHECK_THROWS_AS(parse_run_config("phase = 0, 1\nphase = 3, 5, 1.0\n"), std::exception);
}

TEST_CASE("errors name the line") {
    CHECK_THROWS_WITH_AS(parse_run_config("depth = 2\nwidth = 9\n", "toy.cfg"), doctest::Contains("toy.cfg:2"),
                         ConfigError);
    CHECK_THROWS_AS(parse_run_config("depth = two\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("depth\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("optimizer = rmsprop\n"), ConfigError);
}

TEST_CASE("overrides apply in order") {
    auto c = parse_run_config("seed = 1\n");
    apply_overrides(c, {"seed=4", "clip_grad_norm=3", "clip_grad_norm=off", "schedule=fixed:1,1.0"});
    CHECK(c.train.seed == 4);
    CHECK_FALSE(c.train.clip_grad_norm.has_value());
    CHECK(c.train.schedule == schedule::PhaseSchedule::fixed(1, 1.0));
    CHECK_THROWS_AS(apply_overrides(c, {"seed"}), ConfigError);
    for (const auto& key : run_config_keys()) CHECK_FALSE(key.empty());
}

TEST_CASE("ablation settings") {
    RunConfig base = parse_run_config("run_id = abl\n");
    const auto k0 = exp::ablation_config(base, exp::AblationAxis::K, 0);
    CHECK(k0.net.pde_layers == 0);
    const auto k3 = exp::ablation_config(base, exp::AblationAxis::K, 3);
    CHECK(k3.net.pde_layers == 5);
    CHECK(k3.train.schedule == schedule::progressive_to(3, 0.2));
    CHECK(k3.train.seed == base.train.seed);
    CHECK(k3.train.run_id != k0.train.run_id);
    const auto l1 = exp::ablation_config(base, exp::AblationAxis::Layers, 1);
    CHECK(l1.net.pde_layers == 1);
    CHECK(l1.train.schedule == base.train.schedule);
    CHECK(exp::ablation_axis_from_string("layers") == exp::AblationAxis::Layers);
    CHECK_THROWS(exp::ablation_axis_from_string("width"));
}
