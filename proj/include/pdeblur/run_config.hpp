// SPDX-License-Identifier: Apache-2.0
//
// Flat key-value run configuration.
//
//   # comment to end of line
//   key = value
//   phase = start_epoch, k [, delta_t]
//
// Keys are listed in run_config_keys(). Repeated keys override earlier ones;
// `phase` lines accumulate into an explicit schedule that replaces `schedule`.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdeblur/schedule.hpp"
#include "pdeblur/toy_net.hpp"
#include "pdeblur/trainer.hpp"

namespace pdeblur {

class ConfigError : public ContractError {
public:
    using ContractError::ContractError;
};

struct RunConfig {
    net::NetConfig net;
    train::TrainConfig train;
    /// "progressive", "progressive:K" or "fixed:K,DT"; ignored when phases are given.
    std::string schedule_spec = "progressive";
    Real epoch_scale = 0.2;
    Real total_time = 1.0;
    std::vector<schedule::PhaseEntry> phases;

    /// Applies one key; throws ConfigError for unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    /// Rebuilds train.schedule from the schedule fields.
    void resolve();
    nlohmann::json to_json() const;
};

const std::vector<std::string>& run_config_keys();

/// Parses text into defaults + overrides; `origin` names the source in errors.
RunConfig parse_run_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies "key=value" overrides in order, then resolves the schedule.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments);

} // namespace pdeblur
