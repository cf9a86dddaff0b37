// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "pdeblur/schedule.hpp"

using namespace pdeblur;
using namespace pdeblur::schedule;

TEST_CASE("default schedule phases") {
    const auto s = default_schedule();
    CHECK(s.total_time() == 1.0);
    CHECK(s.phase_for_epoch(0).k == 1);
    CHECK(s.phase_for_epoch(0).delta_t == 1.0);
    CHECK(s.phase_for_epoch(9).k == 1);
    CHECK(s.phase_for_epoch(10).k == 3);
    CHECK(s.phase_for_epoch(15).delta_t == doctest::Approx(1.0 / 3));
    CHECK(s.phase_for_epoch(19).k == 3);
    CHECK(s.phase_for_epoch(20).k == 5);
    CHECK(s.phase_for_epoch(25).delta_t == doctest::Approx(0.2));
    CHECK(s.phase_index(10) == 1);
    CHECK(validate(s.total_time(), s.phases()).empty());
}

TEST_CASE("scaled schedule moves the boundaries") {
    const auto s = default_schedule(0.2);
    CHECK(s.phase_for_epoch(1).k == 1);
    CHECK(s.phase_for_epoch(2).k == 3);
    CHECK(s.phase_for_epoch(3).k == 3);
    CHECK(s.phase_for_epoch(4).k == 5);
    CHECK(s.phase_for_epoch(11).k == 5);
}

TEST_CASE("every phase keeps K * dt at T") {
    for (Real scale : {1.0, 0.2, 0.5}) {
        const auto s = default_schedule(scale);
        for (std::size_t e = 0; e < 40; ++e) {
            const auto& p = s.phase_for_epoch(e);
            CHECK(static_cast<Real>(p.k) * p.delta_t == doctest::Approx(1.0).epsilon(1e-3));
        }
    }
}

TEST_CASE("open-ended single phase covers any epoch") {
    const auto s = PhaseSchedule::fixed(1, 1.0);
    CHECK(s.phase_for_epoch(1000000).k == 1);
    CHECK(PhaseSchedule::fixed(5, 0.2).total_time() == doctest::Approx(1.0));
}

TEST_CASE("validation reports each violation") {
    const std::vector<Phase> wrong_time{{0, 10, 1, 1.0}, {10, std::nullopt, 5, 1.0}};
    const auto v = validate(1.0, wrong_time);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("total time") != std::string::npos);

    const std::vector<Phase> gap{{0, 9, 1, 1.0}, {10, std::nullopt, 5, 0.2}};
    const auto g = validate(1.0, gap);
    REQUIRE_FALSE(g.empty());
    CHECK(g[0].find("gap") != std::string::npos);

    CHECK_FALSE(validate(1.0, {}).empty());
    CHECK_FALSE(validate(1.0, {{0, 5, 1, 1.0}}).empty());
    CHECK_FALSE(validate(1.0, {{1, std::nullopt, 1, 1.0}}).empty());
    CHECK_THROWS_AS(PhaseSchedule(1.0, wrong_time), ScheduleError);
    try {
        PhaseSchedule(1.0, gap);
    } catch (const ScheduleError& e) {
        CHECK(e.violations() == g);
    }
}

TEST_CASE("printed one third is within tolerance") {
    CHECK(validate(1.0, {{0, std::nullopt, 3, 0.333}}).empty());
    CHECK_FALSE(validate(1.0, {{0, std::nullopt, 3, 0.33}}).empty());
}

TEST_CASE("capped progressive schedules") {
    const auto one = progressive_to(1, 0.2);
    CHECK(one.phases().size() == 1);
    CHECK(one.phase_for_epoch(10).k == 1);
    const auto three = progressive_to(3, 0.2);
    CHECK(three.phase_for_epoch(1).k == 1);
    CHECK(three.phase_for_epoch(5).k == 3);
    const auto seven = progressive_to(7, 0.2);
    CHECK(seven.phase_for_epoch(3).k == 3);
    CHECK(seven.phase_for_epoch(4).k == 7);
    CHECK(progressive_to(5, 0.2) == default_schedule(0.2));
}

TEST_CASE("schedule specs") {
    CHECK(parse_schedule_spec("progressive", 0.2) == default_schedule(0.2));
    CHECK(parse_schedule_spec("progressive:3", 1.0) == progressive_to(3, 1.0));
    const auto f = parse_schedule_spec("fixed:5,0.2", 0.2);
    CHECK(f.phases().size() == 1);
    CHECK(f.phase_for_epoch(0).k == 5);
    CHECK(parse_schedule_spec("fixed:5", 0.2) == PhaseSchedule::fixed(5, 0.2));
    CHECK_THROWS_AS(parse_schedule_spec("fixed:five", 0.2), ContractError);
    CHECK_THROWS_AS(parse_schedule_spec("progressive:2.5", 0.2), ContractError);
    CHECK_THROWS_AS(parse_schedule_spec("geometric", 0.2), ContractError);
}

TEST_CASE("entries fill in dt from T") {
    const auto s = from_entries(1.0, {{0, 1, std::nullopt}, {3, 4, std::nullopt}});
    CHECK(s.phase_for_epoch(2).delta_t == 1.0);
    CHECK(s.phase_for_epoch(3).delta_t == 0.25);
    CHECK(s.phases()[0].end_epoch == 3);
}
