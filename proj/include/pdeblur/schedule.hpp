// SPDX-License-Identifier: Apache-2.0
//
// Progressive iteration schedule: epochs map to (K, dt) phases that keep the
// total integration time T = K * dt fixed.

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdeblur/tensor.hpp"

namespace pdeblur::schedule {

/// Relative tolerance on K * dt == T; admits the printed 0.333 for 1/3.
inline constexpr Real kTotalTimeTolerance = 1e-3;

struct Phase {
    std::size_t start_epoch = 0;
    std::optional<std::size_t> end_epoch; ///< exclusive; nullopt = open-ended
    std::size_t k = 1;
    Real delta_t = 1.0;

    bool covers(std::size_t epoch) const { return epoch >= start_epoch && (!end_epoch || epoch < *end_epoch); }
    friend bool operator==(const Phase&, const Phase&) = default;
};

/// Returns every violated rule (empty when the schedule is valid).
std::vector<std::string> validate(Real total_time, const std::vector<Phase>& phases);

class ScheduleError : public std::invalid_argument {
public:
    explicit ScheduleError(std::vector<std::string> violations);
    const std::vector<std::string>& violations() const { return violations_; }

private:
    std::vector<std::string> violations_;
};

class PhaseSchedule {
public:
    /// Throws ScheduleError listing all violations.
    PhaseSchedule(Real total_time, std::vector<Phase> phases);

    Real total_time() const { return total_time_; }
    const std::vector<Phase>& phases() const { return phases_; }

    const Phase& phase_for_epoch(std::size_t epoch) const;
    std::size_t phase_index(std::size_t epoch) const;

    /// Single open-ended phase at (k, delta_t); T = k * delta_t.
    static PhaseSchedule fixed(std::size_t k, Real delta_t);

    friend bool operator==(const PhaseSchedule&, const PhaseSchedule&) = default;

private:
    Real total_time_;
    std::vector<Phase> phases_;
};

/// K=1 for epochs [0,10), K=3 for [10,20), K=5 from 20 on, T = 1. `epoch_scale`
/// compresses the boundaries (0.2 puts them at epochs 2 and 4).
PhaseSchedule default_schedule(Real epoch_scale = 1.0);

/// Progressive schedule capped at `final_k`: K steps through 1, min(3, final_k),
/// final_k at the default (scaled) boundaries, merging repeated K values.
PhaseSchedule progressive_to(std::size_t final_k, Real epoch_scale = 1.0, Real total_time = 1.0);

/// Builds phases from (start_epoch, k, optional delta_t) entries; a missing
/// delta_t is T / k. Each phase ends where the next begins.
struct PhaseEntry {
    std::size_t start_epoch = 0;
    std::size_t k = 1;
    std::optional<Real> delta_t;
};
PhaseSchedule from_entries(Real total_time, const std::vector<PhaseEntry>& entries);

/// "progressive", "progressive:K" or "fixed:K,DT".
PhaseSchedule parse_schedule_spec(const std::string& spec, Real epoch_scale);

} // namespace pdeblur::schedule
