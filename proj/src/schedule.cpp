// SPDX-License-Identifier: Apache-2.0

#include "pdeblur/schedule.hpp"

#include <cmath>
#include <sstream>

namespace pdeblur::schedule {

namespace {

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) {
        if (!out.empty()) out += "; ";
        out += s;
    }
    return out;
}

std::size_t scaled_epoch(std::size_t epoch, Real scale) {
    return static_cast<std::size_t>(std::lround(static_cast<Real>(epoch) * scale));
}

} // namespace

std::vector<std::string> validate(Real total_time, const std::vector<Phase>& phases) {
    std::vector<std::string> v;
    if (!(total_time > 0)) v.push_back("total time must be positive");
    if (phases.empty()) {
        v.push_back("schedule has no phases");
        return v;
    }
    if (phases.front().start_epoch != 0) {
        v.push_back("coverage gap: epoch 0 is not covered (first phase starts at " +
                    std::to_string(phases.front().start_epoch) + ")");
    }
    for (std::size_t i = 0; i < phases.size(); ++i) {
        const Phase& p = phases[i];
        const std::string tag = "phase " + std::to_string(i + 1);
        if (p.k < 1) v.push_back(tag + ": k must be >= 1");
        if (!(p.delta_t > 0)) v.push_back(tag + ": delta_t must be positive");
        if (p.end_epoch && *p.end_epoch <= p.start_epoch) v.push_back(tag + ": empty epoch range");
        if (total_time > 0) {
            const Real t = static_cast<Real>(p.k) * p.delta_t;
            if (std::abs(t - total_time) / total_time > kTotalTimeTolerance) {
                std::ostringstream os;
                os << tag << ": total time " << t << " != " << total_time;
                v.push_back(os.str());
            }
        }
        if (i + 1 < phases.size()) {
            const Phase& n = phases[i + 1];
            if (!p.end_epoch) {
                v.push_back(tag + ": open-ended phase is not last");
            } else if (*p.end_epoch < n.start_epoch) {
                v.push_back("coverage gap: epochs [" + std::to_string(*p.end_epoch) + "," +
                            std::to_string(n.start_epoch) + ") are not covered");
            } else if (*p.end_epoch > n.start_epoch) {
                v.push_back("overlap: phase " + std::to_string(i + 1) + " and phase " + std::to_string(i + 2) +
                            " both cover epoch " + std::to_string(n.start_epoch));
            }
            if (n.k < p.k) v.push_back("phase " + std::to_string(i + 2) + ": k decreases");
        } else if (p.end_epoch) {
            v.push_back("coverage gap: last phase ends at epoch " + std::to_string(*p.end_epoch) +
                        " instead of being open-ended");
        }
    }
    return v;
}

ScheduleError::ScheduleError(std::vector<std::string> violations)
    : std::invalid_argument("invalid schedule: " + join(violations)), violations_(std::move(violations)) {}

PhaseSchedule::PhaseSchedule(Real total_time, std::vector<Phase> phases)
    : total_time_(total_time), phases_(std::move(phases)) {
    auto violations = validate(total_time_, phases_);
    if (!violations.empty()) throw ScheduleError(std::move(violations));
}

const Phase& PhaseSchedule::phase_for_epoch(std::size_t epoch) const { return phases_[phase_index(epoch)]; }

std::size_t PhaseSchedule::phase_index(std::size_t epoch) const {
    for (std::size_t i = 0; i < phases_.size(); ++i) {
        if (phases_[i].covers(epoch)) return i;
    }
    // Unreachable for a validated schedule: phases cover [0, inf).
    return phases_.size() - 1;
}

PhaseSchedule PhaseSchedule::fixed(std::size_t k, Real delta_t) {
    return PhaseSchedule(static_cast<Real>(k) * delta_t, {Phase{0, std::nullopt, k, delta_t}});
}

PhaseSchedule default_schedule(Real epoch_scale) { return progressive_to(5, epoch_scale, 1.0); }

PhaseSchedule progressive_to(std::size_t final_k, Real epoch_scale, Real total_time) {
    if (final_k < 1) throw ContractError("progressive schedule: final K must be >= 1");
    std::vector<PhaseEntry> entries;
    const std::size_t ks[3] = {1, std::min<std::size_t>(3, final_k), final_k};
    const std::size_t starts[3] = {0, scaled_epoch(10, epoch_scale), scaled_epoch(20, epoch_scale)};
    for (int i = 0; i < 3; ++i) {
        if (!entries.empty() && entries.back().k == ks[i]) continue;
        if (!entries.empty() && entries.back().start_epoch == starts[i]) {
            entries.back().k = ks[i];
            continue;
        }
        entries.push_back({starts[i], ks[i], std::nullopt});
    }
    return from_entries(total_time, entries);
}

PhaseSchedule from_entries(Real total_time, const std::vector<PhaseEntry>& entries) {
    std::vector<Phase> phases;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        Phase p;
        p.start_epoch = entries[i].start_epoch;
        p.k = entries[i].k;
        p.delta_t = entries[i].delta_t ? *entries[i].delta_t
                                       : (entries[i].k ? total_time / static_cast<Real>(entries[i].k) : Real(0));
        if (i + 1 < entries.size()) p.end_epoch = entries[i + 1].start_epoch;
        phases.push_back(p);
    }
    return PhaseSchedule(total_time, std::move(phases));
}

PhaseSchedule parse_schedule_spec(const std::string& spec, Real epoch_scale) {
    const auto bad = [&] {
        return ContractError("unknown schedule '" + spec + "' (expected progressive, progressive:K or fixed:K,DT)");
    };
    const auto number = [&](const std::string& text) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(text, &used);
        } catch (const std::logic_error&) {
            throw bad();
        }
        if (used != text.size()) throw bad();
        return v;
    };
    const auto count = [&](const std::string& text) {
        const double v = number(text);
        if (v < 1 || v != static_cast<double>(static_cast<std::size_t>(v))) throw bad();
        return static_cast<std::size_t>(v);
    };
    if (spec == "progressive") return default_schedule(epoch_scale);
    if (spec.rfind("progressive:", 0) == 0) return progressive_to(count(spec.substr(12)), epoch_scale);
    if (spec.rfind("fixed:", 0) == 0) {
        const std::string rest = spec.substr(6);
        const auto comma = rest.find(',');
        const std::size_t k = count(rest.substr(0, comma));
        const Real dt = comma == std::string::npos ? Real(1) / static_cast<Real>(k) : number(rest.substr(comma + 1));
        return PhaseSchedule::fixed(k, dt);
    }
    throw bad();
}

} // namespace pdeblur::schedule
