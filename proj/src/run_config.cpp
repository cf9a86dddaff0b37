// SPDX-License-Identifier: Apache-2.0

#include "pdeblur/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "pdeblur/serialization.hpp"

namespace pdeblur {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t parse_count(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
    }
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
    }
    return out;
}

Real parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return static_cast<Real>(d);
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

schedule::PhaseEntry parse_phase(const std::string& v) {
    std::vector<std::string> parts;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(trim(item));
    if (parts.size() != 2 && parts.size() != 3) {
        throw ConfigError("phase: expected 'start_epoch, k[, delta_t]', got '" + v + "'");
    }
    schedule::PhaseEntry e;
    e.start_epoch = parse_count("phase start_epoch", parts[0]);
    e.k = parse_count("phase k", parts[1]);
    if (parts.size() == 3) e.delta_t = parse_real("phase delta_t", parts[2]);
    return e;
}

} // namespace

const std::vector<std::string>& run_config_keys() {
    static const std::vector<std::string> keys{
        "depth",          "base_channels",        "pde_layers",     "velocity_mode",   "boundary",
        "skip_connections", "global_residual", "zero_init_output",    "epochs",         "batch_size",      "learning_rate",
        "optimizer",      "beta1",                "beta2",          "adam_epsilon",    "momentum",
        "loss",           "charbonnier_epsilon",  "schedule",       "epoch_scale",     "total_time",
        "phase",          "divergence_threshold", "clip_grad_norm", "seed",            "run_id",
        "ssim_mode",      "validate_each_epoch"};
    return keys;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    auto& n = net;
    auto& t = train;
    try {
        if (key == "depth") n.depth = parse_count(key, v);
        else if (key == "base_channels") n.base_channels = parse_count(key, v);
        else if (key == "pde_layers") n.pde_layers = parse_count(key, v);
        else if (key == "velocity_mode") n.velocity_mode = pde::velocity_mode_from_string(v);
        else if (key == "boundary") n.boundary = boundary_from_string(v);
        else if (key == "skip_connections") n.skip_connections = parse_bool(key, v);
        else if (key == "global_residual") n.global_residual = parse_bool(key, v);
        else if (key == "zero_init_output") n.zero_init_output = parse_bool(key, v);
        else if (key == "epochs") t.epochs = parse_count(key, v);
        else if (key == "batch_size") t.batch_size = parse_count(key, v);
        else if (key == "learning_rate") t.learning_rate = parse_real(key, v);
        else if (key == "optimizer") t.optimizer = train::optimizer_from_string(v);
        else if (key == "beta1") t.beta1 = parse_real(key, v);
        else if (key == "beta2") t.beta2 = parse_real(key, v);
        else if (key == "adam_epsilon") t.adam_epsilon = parse_real(key, v);
        else if (key == "momentum") t.momentum = parse_real(key, v);
        else if (key == "loss") t.loss = train::loss_from_string(v);
        else if (key == "charbonnier_epsilon") t.charbonnier_epsilon = parse_real(key, v);
        else if (key == "schedule") {
            schedule_spec = v;
            phases.clear();
        }
        else if (key == "epoch_scale") epoch_scale = parse_real(key, v);
        else if (key == "total_time") total_time = parse_real(key, v);
        else if (key == "phase") phases.push_back(parse_phase(v));
        else if (key == "divergence_threshold") t.divergence_threshold = parse_real(key, v);
        else if (key == "clip_grad_norm") {
            if (v == "off" || v == "none") t.clip_grad_norm.reset();
            else t.clip_grad_norm = parse_real(key, v);
        }
        else if (key == "seed") t.seed = parse_u64(key, v);
        else if (key == "run_id") t.run_id = v;
        else if (key == "ssim_mode") t.ssim_mode = metrics::ssim_mode_from_string(v);
        else if (key == "validate_each_epoch") t.validate_each_epoch = parse_bool(key, v);
        else throw ConfigError("unknown key '" + key + "'");
    } catch (const ConfigError&) {
        throw;
    } catch (const ContractError& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

void RunConfig::resolve() {
    try {
        train.schedule = phases.empty() ? schedule::parse_schedule_spec(schedule_spec, epoch_scale)
                                        : schedule::from_entries(total_time, phases);
    } catch (const schedule::ScheduleError& e) {
        std::string msg = "invalid schedule:";
        for (const auto& v : e.violations()) msg += " " + v + ";";
        throw ConfigError(msg);
    }
    net.validate();
    train.validate();
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json phases_json = nlohmann::json::array();
    for (const auto& p : phases) {
        phases_json.push_back({{"start_epoch", p.start_epoch},
                               {"k", p.k},
                               {"delta_t", p.delta_t ? nlohmann::json(*p.delta_t) : nlohmann::json(nullptr)}});
    }
    return {{"net", net.to_json()},
            {"train", train.to_json()},
            {"schedule_spec", schedule_spec},
            {"epoch_scale", epoch_scale},
            {"total_time", total_time},
            {"phases", phases_json}};
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = origin + ":" + std::to_string(lineno) + ": ";
        if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        try {
            cfg.set(key, line.substr(eq + 1));
        } catch (const ContractError& e) {
            throw ConfigError(where + e.what());
        }
    }
    try {
        cfg.resolve();
    } catch (const ContractError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    return parse_run_config(read_text_file(path), path.string());
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments) {
    for (const auto& a : assignments) {
        const auto eq = a.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + a + "' is not key=value");
        cfg.set(trim(a.substr(0, eq)), a.substr(eq + 1));
    }
    cfg.resolve();
}

} // namespace pdeblur
