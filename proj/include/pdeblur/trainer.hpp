// SPDX-License-Identifier: Apache-2.0
//
// Training loop with per-epoch (K, dt) from a PhaseSchedule, divergence
// detection ahead of every optimizer step, atomic checkpoints and resume.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdeblur/autograd.hpp"
#include "pdeblur/data_synth.hpp"
#include "pdeblur/metrics.hpp"
#include "pdeblur/schedule.hpp"
#include "pdeblur/toy_net.hpp"

namespace pdeblur::train {

enum class OptimizerKind { Adam, Sgd };
enum class LossKind { L1, Charbonnier };

std::string to_string(OptimizerKind k);
std::string to_string(LossKind k);
OptimizerKind optimizer_from_string(const std::string& s);
LossKind loss_from_string(const std::string& s);

struct TrainConfig {
    std::size_t epochs = 12;
    std::size_t batch_size = 2;
    Real learning_rate = 3e-4;
    OptimizerKind optimizer = OptimizerKind::Adam;
    Real beta1 = 0.9;
    Real beta2 = 0.999;
    Real adam_epsilon = 1e-8;
    Real momentum = 0.9;  // SGD only
    LossKind loss = LossKind::Charbonnier;
    Real charbonnier_epsilon = 1e-3;
    schedule::PhaseSchedule schedule = schedule::default_schedule(0.2);
    Real divergence_threshold = 1e3;
    /// Rescales the global gradient to at most this norm after the divergence check. Off by default.
    std::optional<Real> clip_grad_norm;
    std::uint64_t seed = 0;
    std::string run_id = "run";
    metrics::SsimMode ssim_mode = metrics::SsimMode::Gaussian11;
    bool validate_each_epoch = true;

    /// epochs may be 0 (returns the initial parameters untouched).
    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

nlohmann::json schedule_to_json(const schedule::PhaseSchedule& s);
schedule::PhaseSchedule schedule_from_json(const nlohmann::json& j);

/// Mean over all elements. Returns the loss and writes d loss / d prediction.
Real compute_loss(LossKind kind, Real epsilon, const FeatureMap& prediction, const FeatureMap& target,
                  FeatureMap* grad);

struct DivergenceCheck {
    bool diverged = false;
    std::string reason;
};

/// Diverged iff the loss or norm is non-finite, or norm > threshold.
DivergenceCheck detect_divergence(const metrics::GradNormRecord& record, Real loss, Real threshold);

struct LogRow {
    std::size_t epoch = 0;
    std::size_t step = 0;  // global step, strictly increasing
    std::size_t k = 0;
    Real delta_t = 0;
    Real loss = 0;
    Real grad_norm = 0;
    double wall_ms = 0;
    std::string status;  // "ok" or "diverged"
};

enum class RunStatus { Completed, Diverged, Halted };
std::string to_string(RunStatus s);

struct RunLog {
    std::string run_id;
    std::vector<LogRow> rows;
    RunStatus status = RunStatus::Completed;
    std::optional<std::size_t> diverged_epoch;
    std::optional<std::size_t> diverged_step;
    std::string reason;

    static std::string csv_header();
    std::string to_csv(bool with_header = true) const;
    Real max_grad_norm() const;
    nlohmann::json to_json() const;
    static RunLog from_json(const nlohmann::json& j);
};

struct EpochMetrics {
    std::size_t epoch = 0;
    std::size_t k = 0;
    Real delta_t = 0;
    Real val_psnr = 0;
    Real val_ssim = 0;
    Real blurred_psnr = 0;

    friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

/// Flat moment buffers in ParamStore::flatten order.
struct OptimizerState {
    std::uint64_t steps = 0;
    std::vector<Real> m;
    std::vector<Real> v;  // Adam only

    friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

void optimizer_step(const TrainConfig& cfg, autograd::ParamStore& params, const autograd::ParamStore& grads,
                    OptimizerState& state);

struct TrainState {
    net::ModelParams params;
    OptimizerState optimizer;
    std::size_t next_epoch = 0;
    std::size_t global_step = 0;
    RunLog log;
    std::vector<EpochMetrics> epochs;
};

struct TrainHooks {
    /// Called after backward and before the gradient norm; may rewrite gradients.
    std::function<void(std::size_t epoch, std::size_t step, autograd::GradientStore& grads)> on_gradients;
    /// Returning true before an epoch halts the run with status Halted.
    std::function<bool(std::size_t epoch)> halt_before_epoch;
    /// Checkpoints are written here at phase boundaries and at the end when set.
    std::optional<std::filesystem::path> checkpoint_dir;
    /// Receives each finished epoch's metrics.
    std::function<void(const EpochMetrics&)> on_epoch;
};

/// Mean PSNR / SSIM of predict() on `samples` against their sharp images.
EpochMetrics evaluate(net::Network& network, const net::ModelParams& params,
                      std::span<const synth::PairSample> samples, metrics::SsimMode mode, std::size_t batch_size = 16);

/// Deterministic epoch permutation of [0, n) derived from (seed, epoch).
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n);

TrainState train(net::Network& network, net::ModelParams initial, const synth::Dataset& data,
                 const TrainConfig& config, const TrainHooks& hooks = {});

/// Continues `state` until config.epochs; bit-identical to an uninterrupted run.
TrainState resume(net::Network& network, TrainState state, const synth::Dataset& data, const TrainConfig& config,
                  const TrainHooks& hooks = {});

struct Checkpoint {
    net::NetConfig net;
    std::size_t height = 0;
    std::size_t width = 0;
    TrainConfig train;
    std::size_t schedule_position = 0;  // phase index of next_epoch
    TrainState state;
};

inline constexpr const char* kCheckpointFormat = "pdeblur.checkpoint";
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct StabilityRun {
    std::string label;
    std::string schedule;
    RunLog log;
    std::vector<EpochMetrics> epochs;
    Real max_grad_norm = 0;
    std::optional<Real> final_val_psnr;
    std::vector<std::size_t> epoch0_order;
};

struct StabilityReport {
    StabilityRun direct;
    StabilityRun progressive;
    bool same_epoch0_order = false;
    bool moments_carried_over = true;

    std::string csv() const;
    std::string summary() const;
};

/// Runs Fixed(K=5, dt=0.2) and `base.schedule` from identical seeds and data.
StabilityReport stability_experiment(const synth::Dataset& data, const net::NetConfig& net_config,
                                     const TrainConfig& base, const TrainHooks& hooks = {});

} // namespace pdeblur::train
