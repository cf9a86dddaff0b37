// SPDX-License-Identifier: Apache-2.0
//
// Reusable experiment drivers shared by the command-line tool and the
// acceptance suite: gradient checks, MAC/time benchmarks, ablation runs.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pdeblur/autograd.hpp"
#include "pdeblur/data_synth.hpp"
#include "pdeblur/pde_layer.hpp"
#include "pdeblur/run_config.hpp"
#include "pdeblur/trainer.hpp"

namespace pdeblur::exp {

/// Layer parameters with O(1) magnitudes (unlike init_params' 0.01 scale) so a
/// gradient check exercises every coefficient path.
pde::PdeLayerParams random_layer_params(std::size_t channels, std::size_t height, std::size_t width,
                                        pde::VelocityMode mode, std::uint64_t seed);

struct GradCheckConfig {
    std::size_t k = 5;
    std::size_t height = 8;
    std::size_t width = 8;
    std::size_t channels = 2;
    std::size_t seeds = 5;
    std::uint64_t first_seed = 0;
    Real tolerance = 1e-5;
    Real epsilon = 1e-6;
    pde::VelocityMode velocity_mode = pde::VelocityMode::Spatial;
    BoundaryMode boundary = BoundaryMode::Replicate;
};

struct GradCheckSeedResult {
    std::uint64_t seed = 0;
    autograd::GradCheckReport report;
};

struct GradCheckResult {
    std::vector<GradCheckSeedResult> runs;
    bool passed = true;
    double wall_ms = 0;
};

/// One PDE layer (dt = 1/K) under a seeded weighted-sum loss, checked against
/// central differences for every parameter and input entry.
GradCheckResult run_gradcheck(const GradCheckConfig& config);

struct MacBreakdown {
    std::uint64_t conv = 0;
    std::uint64_t pde = 0;
    std::uint64_t other = 0;
    std::uint64_t total() const { return conv + pde + other; }
};

/// Per-image forward MACs of the toy net at iteration count `k`. `instrumented`
/// counts actual multiplies; otherwise the forward charges the closed forms.
MacBreakdown network_macs(const net::NetConfig& config, std::size_t height, std::size_t width, std::size_t k,
                          bool instrumented);

/// Closed-form prediction assembled layer by layer from the graph shapes.
MacBreakdown predicted_network_macs(const net::NetConfig& config, std::size_t height, std::size_t width,
                                    std::size_t k);

struct BenchRow {
    std::size_t k = 0;
    Shape shape;
    std::uint64_t macs_instrumented = 0;
    std::uint64_t macs_closed_form = 0;
    double wall_ms = 0;  // best of the repeats
};

std::vector<BenchRow> run_bench(const std::vector<std::size_t>& k_list, const Shape& shape, pde::VelocityMode mode,
                                std::size_t repeats, std::uint64_t seed = 0);
std::string bench_csv(const std::vector<BenchRow>& rows);

/// Metrics rows: run_id, epoch, split, psnr_db, ssim, ssim_mode, gmacs.
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& run_id, std::size_t epoch, const std::string& split, Real psnr,
                            Real ssim, metrics::SsimMode mode, std::uint64_t macs);

enum class AblationAxis { K, Layers };
std::string to_string(AblationAxis a);
AblationAxis ablation_axis_from_string(const std::string& s);

/// K axis: 0 disables the PDE stack, otherwise the progressive schedule capped
/// at K. Layers axis: pde_layers = value with the configured schedule.
RunConfig ablation_config(const RunConfig& base, AblationAxis axis, std::size_t value);

struct AblationResult {
    AblationAxis axis = AblationAxis::K;
    std::size_t value = 0;
    std::string run_id;
    train::RunStatus status = train::RunStatus::Completed;
    train::EpochMetrics final_metrics;
    Real max_grad_norm = 0;
    MacBreakdown macs;
    metrics::SsimMode ssim_mode = metrics::SsimMode::Gaussian11;
};

/// Trains one setting from the base seed; writes the run log under `out_dir/run_id` when given.
AblationResult run_ablation_setting(const synth::Dataset& data, const RunConfig& base, AblationAxis axis,
                                    std::size_t value, const std::optional<std::filesystem::path>& out_dir);

std::string ablation_csv(const std::vector<AblationResult>& results);

/// Final-epoch val PSNR must not decrease along the listed order (ties allowed).
bool non_decreasing(const std::vector<AblationResult>& ordered);

} // namespace pdeblur::exp
