// SPDX-License-Identifier: Apache-2.0

#include "pdeblur/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "pdeblur/rng.hpp"
#include "pdeblur/serialization.hpp"

namespace pdeblur::train {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }
std::string to_string(LossKind k) { return k == LossKind::L1 ? "l1" : "charbonnier"; }

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "sgd") return OptimizerKind::Sgd;
    throw ContractError("unknown optimizer '" + s + "' (expected adam or sgd)");
}

LossKind loss_from_string(const std::string& s) {
    if (s == "l1") return LossKind::L1;
    if (s == "charbonnier") return LossKind::Charbonnier;
    throw ContractError("unknown loss '" + s + "' (expected l1 or charbonnier)");
}

std::string to_string(RunStatus s) {
    switch (s) {
    case RunStatus::Completed: return "completed";
    case RunStatus::Diverged: return "diverged";
    case RunStatus::Halted: return "halted";
    }
    return "unknown";
}

namespace {

RunStatus status_from_string(const std::string& s) {
    if (s == "completed") return RunStatus::Completed;
    if (s == "diverged") return RunStatus::Diverged;
    if (s == "halted") return RunStatus::Halted;
    throw FormatError("unknown run status '" + s + "'");
}

// JSON has no NaN/inf; they travel as null / strings.
json real_to_json(Real v) {
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

Real real_from_json(const json& j) {
    if (j.is_null()) return std::numeric_limits<Real>::quiet_NaN();
    if (j.is_string()) return j.get<std::string>() == "inf" ? std::numeric_limits<Real>::infinity()
                                                          : -std::numeric_limits<Real>::infinity();
    return j.get<Real>();
}

std::string format_number(Real v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

} // namespace

void TrainConfig::validate() const {
    if (batch_size == 0) throw ContractError("train config: batch_size must be >= 1");
    if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) {
        throw ContractError("train config: learning_rate must be finite and >= 0");
    }
    if (!(divergence_threshold > 0)) throw ContractError("train config: divergence_threshold must be > 0");
    if (clip_grad_norm && !(*clip_grad_norm > 0)) throw ContractError("train config: clip_grad_norm must be > 0");
    if (!(charbonnier_epsilon > 0)) throw ContractError("train config: charbonnier_epsilon must be > 0");
}

json schedule_to_json(const schedule::PhaseSchedule& s) {
    json phases = json::array();
    for (const auto& p : s.phases()) {
        phases.push_back({{"start_epoch", p.start_epoch},
                          {"end_epoch", p.end_epoch ? json(*p.end_epoch) : json(nullptr)},
                          {"k", p.k},
                          {"delta_t", p.delta_t}});
    }
    return {{"total_time", s.total_time()}, {"phases", phases}};
}

schedule::PhaseSchedule schedule_from_json(const json& j) {
    std::vector<schedule::Phase> phases;
    for (const auto& p : j.at("phases")) {
        schedule::Phase ph;
        ph.start_epoch = p.at("start_epoch").get<std::size_t>();
        if (!p.at("end_epoch").is_null()) ph.end_epoch = p.at("end_epoch").get<std::size_t>();
        ph.k = p.at("k").get<std::size_t>();
        ph.delta_t = p.at("delta_t").get<Real>();
        phases.push_back(ph);
    }
    return schedule::PhaseSchedule(j.at("total_time").get<Real>(), std::move(phases));
}

json TrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"optimizer", train::to_string(optimizer)},
            {"beta1", beta1},
            {"beta2", beta2},
            {"adam_epsilon", adam_epsilon},
            {"momentum", momentum},
            {"loss", train::to_string(loss)},
            {"charbonnier_epsilon", charbonnier_epsilon},
            {"schedule", schedule_to_json(schedule)},
            {"divergence_threshold", divergence_threshold},
            {"clip_grad_norm", clip_grad_norm ? json(*clip_grad_norm) : json(nullptr)},
            {"seed", seed},
            {"run_id", run_id},
            {"ssim_mode", metrics::to_string(ssim_mode)},
            {"validate_each_epoch", validate_each_epoch}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<Real>();
    c.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
    c.beta1 = j.at("beta1").get<Real>();
    c.beta2 = j.at("beta2").get<Real>();
    c.adam_epsilon = j.at("adam_epsilon").get<Real>();
    c.momentum = j.at("momentum").get<Real>();
    c.loss = loss_from_string(j.at("loss").get<std::string>());
    c.charbonnier_epsilon = j.at("charbonnier_epsilon").get<Real>();
    c.schedule = schedule_from_json(j.at("schedule"));
    c.divergence_threshold = j.at("divergence_threshold").get<Real>();
    if (!j.at("clip_grad_norm").is_null()) c.clip_grad_norm = j.at("clip_grad_norm").get<Real>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.run_id = j.at("run_id").get<std::string>();
    c.ssim_mode = metrics::ssim_mode_from_string(j.at("ssim_mode").get<std::string>());
    c.validate_each_epoch = j.at("validate_each_epoch").get<bool>();
    c.validate();
    return c;
}

Real compute_loss(LossKind kind, Real epsilon, const FeatureMap& prediction, const FeatureMap& target,
                  FeatureMap* grad) {
    require_same_shape(prediction, target, "loss");
    const auto p = prediction.data();
    const auto t = target.data();
    const auto n = static_cast<Real>(p.size());
    if (grad) *grad = FeatureMap(prediction.shape());
    Real total = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const Real d = p[i] - t[i];
        Real g = 0;
        if (kind == LossKind::L1) {
            total += std::abs(d);
            g = d > 0 ? Real(1) : d < 0 ? Real(-1) : Real(0);
        } else {
            const Real r = std::sqrt(d * d + epsilon * epsilon);
            total += r;
            g = d / r;
        }
        if (grad) grad->data()[i] = g / n;
    }
    return total / n;
}

DivergenceCheck detect_divergence(const metrics::GradNormRecord& record, Real loss, Real threshold) {
    if (!std::isfinite(loss)) return {true, "non-finite loss"};
    if (!record.finite || !std::isfinite(record.global_norm)) return {true, "non-finite grad_norm"};
    if (record.global_norm > threshold) {
        return {true, "grad_norm " + format_number(record.global_norm) + " > " + format_number(threshold)};
    }
    return {};
}

std::string RunLog::csv_header() { return "run_id,epoch,step,k,delta_t,loss,grad_norm,wall_ms,status"; }

std::string RunLog::to_csv(bool with_header) const {
    std::ostringstream os;
    os << std::setprecision(10);
    if (with_header) os << csv_header() << "\n";
    for (const auto& r : rows) {
        os << run_id << "," << r.epoch << "," << r.step << "," << r.k << "," << r.delta_t << "," << r.loss << ","
           << r.grad_norm << "," << std::fixed << std::setprecision(3) << r.wall_ms << std::defaultfloat
           << std::setprecision(10) << "," << r.status << "\n";
    }
    return os.str();
}

Real RunLog::max_grad_norm() const {
    Real m = 0;
    for (const auto& r : rows) {
        if (std::isnan(r.grad_norm)) return std::numeric_limits<Real>::infinity();
        m = std::max(m, r.grad_norm);
    }
    return m;
}

json RunLog::to_json() const {
    json rj = json::array();
    for (const auto& r : rows) {
        rj.push_back({{"epoch", r.epoch},
                      {"step", r.step},
                      {"k", r.k},
                      {"delta_t", r.delta_t},
                      {"loss", real_to_json(r.loss)},
                      {"grad_norm", real_to_json(r.grad_norm)},
                      {"wall_ms", r.wall_ms},
                      {"status", r.status}});
    }
    return {{"run_id", run_id},
            {"rows", rj},
            {"status", train::to_string(status)},
            {"diverged_epoch", diverged_epoch ? json(*diverged_epoch) : json(nullptr)},
            {"diverged_step", diverged_step ? json(*diverged_step) : json(nullptr)},
            {"reason", reason}};
}

RunLog RunLog::from_json(const json& j) {
    RunLog log;
    log.run_id = j.at("run_id").get<std::string>();
    for (const auto& r : j.at("rows")) {
        LogRow row;
        row.epoch = r.at("epoch").get<std::size_t>();
        row.step = r.at("step").get<std::size_t>();
        row.k = r.at("k").get<std::size_t>();
        row.delta_t = r.at("delta_t").get<Real>();
        row.loss = real_from_json(r.at("loss"));
        row.grad_norm = real_from_json(r.at("grad_norm"));
        row.wall_ms = r.at("wall_ms").get<double>();
        row.status = r.at("status").get<std::string>();
        log.rows.push_back(row);
    }
    log.status = status_from_string(j.at("status").get<std::string>());
    if (!j.at("diverged_epoch").is_null()) log.diverged_epoch = j.at("diverged_epoch").get<std::size_t>();
    if (!j.at("diverged_step").is_null()) log.diverged_step = j.at("diverged_step").get<std::size_t>();
    log.reason = j.at("reason").get<std::string>();
    return log;
}

void optimizer_step(const TrainConfig& cfg, autograd::ParamStore& params, const autograd::ParamStore& grads,
                    OptimizerState& state) {
    std::vector<Real> p = params.flatten();
    const std::vector<Real> g = grads.flatten();
    if (g.size() != p.size()) throw ContractError("optimizer: gradient layout does not match parameters");
    if (state.m.empty()) state.m.assign(p.size(), Real(0));
    if (cfg.optimizer == OptimizerKind::Adam && state.v.empty()) state.v.assign(p.size(), Real(0));
    if (state.m.size() != p.size()) throw ContractError("optimizer: moment buffer size does not match parameters");
    ++state.steps;
    const Real lr = cfg.learning_rate;
    if (cfg.optimizer == OptimizerKind::Adam) {
        const Real t = static_cast<Real>(state.steps);
        const Real c1 = 1 - std::pow(cfg.beta1, t);
        const Real c2 = 1 - std::pow(cfg.beta2, t);
        for (std::size_t i = 0; i < p.size(); ++i) {
            state.m[i] = cfg.beta1 * state.m[i] + (1 - cfg.beta1) * g[i];
            state.v[i] = cfg.beta2 * state.v[i] + (1 - cfg.beta2) * g[i] * g[i];
            const Real mhat = state.m[i] / c1;
            const Real vhat = state.v[i] / c2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
        }
    } else {
        for (std::size_t i = 0; i < p.size(); ++i) {
            state.m[i] = cfg.momentum * state.m[i] + g[i];
            p[i] -= lr * state.m[i];
        }
    }
    params.assign_flat(p);
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(derive_seed(derive_seed(seed, 0x5417ULL), epoch));
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

EpochMetrics evaluate(net::Network& network, const net::ModelParams& params,
                      std::span<const synth::PairSample> samples, metrics::SsimMode mode, std::size_t batch_size) {
    EpochMetrics m;
    m.k = network.graph.discretization().K;
    m.delta_t = network.graph.discretization().delta_t;
    if (samples.empty()) return m;
    Real psnr_total = 0;
    Real ssim_total = 0;
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
        const std::size_t end = std::min(samples.size(), start + batch_size);
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < end; ++i) idx.push_back(i);
        const FeatureMap blurred = synth::stack_batch(samples, idx, true);
        const FeatureMap restored = net::predict(network, params, blurred, true);
        const Shape one{1, restored.shape().channels, restored.shape().height, restored.shape().width};
        const std::size_t per = one.numel();
        for (std::size_t b = 0; b < idx.size(); ++b) {
            const auto first = restored.values().begin() + static_cast<std::ptrdiff_t>(b * per);
            FeatureMap r(one, std::vector<Real>(first, first + static_cast<std::ptrdiff_t>(per)));
            psnr_total += metrics::psnr(r, samples[idx[b]].sharp);
            ssim_total += metrics::ssim(r, samples[idx[b]].sharp, mode);
        }
    }
    const auto n = static_cast<Real>(samples.size());
    m.val_psnr = psnr_total / n;
    m.val_ssim = ssim_total / n;
    m.blurred_psnr = synth::mean_blurred_psnr(samples);
    return m;
}

namespace {

std::string checkpoint_name(std::size_t next_epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "epoch_%03zu.ckpt", next_epoch);
    return buf;
}

void write_checkpoint(const fs::path& dir, const net::Network& network, const TrainConfig& cfg,
                      const TrainState& state, bool final) {
    Checkpoint ck;
    ck.net = network.config;
    ck.height = network.height;
    ck.width = network.width;
    ck.train = cfg;
    ck.schedule_position = cfg.schedule.phase_index(state.next_epoch);
    ck.state = state;
    fs::create_directories(dir);
    save_checkpoint(dir / checkpoint_name(state.next_epoch), ck);
    if (final) save_checkpoint(dir / "final.ckpt", ck);
}

TrainState run(net::Network& network, TrainState state, const synth::Dataset& data, const TrainConfig& cfg,
               const TrainHooks& hooks) {
    using clock = std::chrono::steady_clock;
    cfg.validate();
    state.log.run_id = cfg.run_id;
    if (state.next_epoch >= cfg.epochs) return state;
    if (data.train.empty()) throw ContractError("train: training split is empty");
    if (cfg.validate_each_epoch && !data.val.empty()) {
        const Shape s = data.val.front().sharp.shape();
        const std::size_t win = metrics::ssim_window(cfg.ssim_mode);
        if (s.height < win || s.width < win) {
            throw ContractError("train: " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                                " validation images are smaller than the " + metrics::to_string(cfg.ssim_mode) +
                                " SSIM window; use ssim_mode=block8 or larger images");
        }
    }
    const auto& samples = data.train;

    while (state.next_epoch < cfg.epochs) {
        const std::size_t epoch = state.next_epoch;
        if (hooks.halt_before_epoch && hooks.halt_before_epoch(epoch)) {
            state.log.status = RunStatus::Halted;
            return state;
        }
        const schedule::Phase& phase = cfg.schedule.phase_for_epoch(epoch);
        network.set_discretization(pde::Discretization{.delta_t = phase.delta_t, .K = phase.k});
        const auto order = epoch_order(cfg.seed, epoch, samples.size());

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const auto t0 = clock::now();
            const std::span<const std::size_t> idx(order.data() + start,
                                                   std::min(cfg.batch_size, order.size() - start));
            LogRow row;
            row.epoch = epoch;
            row.step = state.global_step;
            row.k = phase.k;
            row.delta_t = phase.delta_t;

            DivergenceCheck check;
            autograd::GradientStore grads;
            try {
                const FeatureMap inputs[] = {synth::stack_batch(samples, idx, true)};
                const FeatureMap target = synth::stack_batch(samples, idx, false);
                const auto outputs = autograd::forward_graph(network.graph, state.params, inputs);
                std::vector<FeatureMap> out_grads(1);
                row.loss = compute_loss(cfg.loss, cfg.charbonnier_epsilon, outputs[0], target, &out_grads[0]);
                grads = autograd::backward_graph(network.graph, state.params, out_grads);
                if (hooks.on_gradients) hooks.on_gradients(epoch, state.global_step, grads);
                const auto rec = metrics::grad_norm(grads, epoch, state.global_step);
                row.grad_norm = rec.global_norm;
                check = detect_divergence(rec, row.loss, cfg.divergence_threshold);
            } catch (const pde::NumericalError& e) {
                row.loss = std::numeric_limits<Real>::quiet_NaN();
                row.grad_norm = std::numeric_limits<Real>::quiet_NaN();
                check = {true, std::string("numerical error: ") + e.what()};
            }

            if (check.diverged) {
                row.status = "diverged";
                row.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
                state.log.rows.push_back(row);
                state.log.status = RunStatus::Diverged;
                state.log.diverged_epoch = epoch;
                state.log.diverged_step = state.global_step;
                state.log.reason = check.reason;
                network.graph.clear_cache();
                return state;
            }

            if (cfg.clip_grad_norm && row.grad_norm > *cfg.clip_grad_norm) {
                const Real s = *cfg.clip_grad_norm / row.grad_norm;
                grads.params.for_each_tensor([&](const std::string&, std::span<Real> t) {
                    for (Real& v : t) v *= s;
                });
            }
            optimizer_step(cfg, state.params, grads.params, state.optimizer);
            row.status = "ok";
            row.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
            state.log.rows.push_back(row);
            ++state.global_step;
        }
        network.graph.clear_cache();
        state.next_epoch = epoch + 1;

        if (cfg.validate_each_epoch && !data.val.empty()) {
            EpochMetrics m = evaluate(network, state.params, data.val, cfg.ssim_mode);
            m.epoch = epoch;
            state.epochs.push_back(m);
            if (hooks.on_epoch) hooks.on_epoch(m);
            network.graph.clear_cache();
        }

        const bool last = state.next_epoch == cfg.epochs;
        const bool boundary = last || cfg.schedule.phase_index(state.next_epoch) != cfg.schedule.phase_index(epoch);
        if (hooks.checkpoint_dir && boundary) write_checkpoint(*hooks.checkpoint_dir, network, cfg, state, last);
    }
    state.log.status = RunStatus::Completed;
    return state;
}

} // namespace

TrainState train(net::Network& network, net::ModelParams initial, const synth::Dataset& data,
                 const TrainConfig& config, const TrainHooks& hooks) {
    TrainState state;
    state.params = std::move(initial);
    state.log.run_id = config.run_id;
    return run(network, std::move(state), data, config, hooks);
}

TrainState resume(net::Network& network, TrainState state, const synth::Dataset& data, const TrainConfig& config,
                  const TrainHooks& hooks) {
    if (state.log.status == RunStatus::Diverged) throw ContractError("resume: run already diverged");
    return run(network, std::move(state), data, config, hooks);
}

void save_checkpoint(const fs::path& path, const Checkpoint& ck) {
    const auto& st = ck.state;
    std::vector<double> values;
    for (Real v : st.params.flatten()) values.push_back(static_cast<double>(v));
    for (Real v : st.optimizer.m) values.push_back(static_cast<double>(v));
    for (Real v : st.optimizer.v) values.push_back(static_cast<double>(v));
    json epochs = json::array();
    for (const auto& e : st.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"k", e.k},
                          {"delta_t", e.delta_t},
                          {"val_psnr", real_to_json(e.val_psnr)},
                          {"val_ssim", real_to_json(e.val_ssim)},
                          {"blurred_psnr", real_to_json(e.blurred_psnr)}});
    }
    const json header{{"format", kCheckpointFormat},
                      {"version", kCheckpointVersion},
                      {"net", ck.net.to_json()},
                      {"height", ck.height},
                      {"width", ck.width},
                      {"seed", ck.train.seed},
                      {"train", ck.train.to_json()},
                      {"epoch", st.next_epoch},
                      {"global_step", st.global_step},
                      {"schedule_position", ck.schedule_position},
                      {"param_count", st.params.scalar_count()},
                      {"optimizer",
                       {{"kind", to_string(ck.train.optimizer)},
                        {"steps", st.optimizer.steps},
                        {"m_count", st.optimizer.m.size()},
                        {"v_count", st.optimizer.v.size()}}},
                      {"log", st.log.to_json()},
                      {"epochs", epochs}};
    write_blob_file(path, header, values);
}

Checkpoint load_checkpoint(const fs::path& path) {
    const BlobFile blob = read_blob_file(path);
    const json& h = blob.header;
    try {
        require_format(h, kCheckpointFormat, kCheckpointVersion);
        Checkpoint ck;
        ck.net = net::NetConfig::from_json(h.at("net"));
        ck.height = h.at("height").get<std::size_t>();
        ck.width = h.at("width").get<std::size_t>();
        ck.train = TrainConfig::from_json(h.at("train"));
        ck.schedule_position = h.at("schedule_position").get<std::size_t>();
        auto& st = ck.state;
        st.next_epoch = h.at("epoch").get<std::size_t>();
        st.global_step = h.at("global_step").get<std::size_t>();
        st.params = net::build(ck.net, ck.height, ck.width, 0).params;
        const std::size_t pc = h.at("param_count").get<std::size_t>();
        if (pc != st.params.scalar_count()) {
            throw FormatError("param_count " + std::to_string(pc) + " does not match the network layout (" +
                              std::to_string(st.params.scalar_count()) + ")");
        }
        const auto& opt = h.at("optimizer");
        const std::size_t mc = opt.at("m_count").get<std::size_t>();
        const std::size_t vc = opt.at("v_count").get<std::size_t>();
        if (blob.values.size() != pc + mc + vc) {
            throw FormatError("blob holds " + std::to_string(blob.values.size()) + " values, header describes " +
                              std::to_string(pc + mc + vc));
        }
        const auto at = [&](std::size_t off, std::size_t n) {
            return std::vector<Real>(blob.values.begin() + static_cast<std::ptrdiff_t>(off),
                                     blob.values.begin() + static_cast<std::ptrdiff_t>(off + n));
        };
        st.params.assign_flat(at(0, pc));
        st.optimizer.steps = opt.at("steps").get<std::uint64_t>();
        st.optimizer.m = at(pc, mc);
        st.optimizer.v = at(pc + mc, vc);
        st.log = RunLog::from_json(h.at("log"));
        for (const auto& e : h.at("epochs")) {
            EpochMetrics m;
            m.epoch = e.at("epoch").get<std::size_t>();
            m.k = e.at("k").get<std::size_t>();
            m.delta_t = e.at("delta_t").get<Real>();
            m.val_psnr = real_from_json(e.at("val_psnr"));
            m.val_ssim = real_from_json(e.at("val_ssim"));
            m.blurred_psnr = real_from_json(e.at("blurred_psnr"));
            st.epochs.push_back(m);
        }
        return ck;
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": malformed checkpoint header: " + e.what());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

namespace {

std::string schedule_label(const schedule::PhaseSchedule& s) {
    if (s.phases().size() == 1) {
        std::ostringstream os;
        os << "fixed:" << s.phases()[0].k << "," << s.phases()[0].delta_t;
        return os.str();
    }
    std::string out;
    for (const auto& p : s.phases()) out += (out.empty() ? "" : "->") + std::to_string(p.k);
    return out;
}

StabilityRun run_strategy(const std::string& label, const synth::Dataset& data, const net::NetConfig& net_config,
                          TrainConfig cfg, const TrainHooks& hooks) {
    const Shape s = data.train.front().sharp.shape();
    auto built = net::build(net_config, s.height, s.width, cfg.seed);
    cfg.run_id = label;
    TrainHooks h = hooks;
    if (hooks.checkpoint_dir) h.checkpoint_dir = *hooks.checkpoint_dir / label;
    StabilityRun r;
    r.label = label;
    r.schedule = schedule_label(cfg.schedule);
    r.epoch0_order = epoch_order(cfg.seed, 0, data.train.size());
    TrainState st = train(built.network, std::move(built.params), data, cfg, h);
    r.log = std::move(st.log);
    r.epochs = std::move(st.epochs);
    r.max_grad_norm = r.log.max_grad_norm();
    if (r.log.status == RunStatus::Completed && !r.epochs.empty()) r.final_val_psnr = r.epochs.back().val_psnr;
    return r;
}

} // namespace

StabilityReport stability_experiment(const synth::Dataset& data, const net::NetConfig& net_config,
                                     const TrainConfig& base, const TrainHooks& hooks) {
    if (data.train.empty()) throw ContractError("stability: training split is empty");
    StabilityReport rep;
    TrainConfig direct = base;
    direct.schedule = schedule::PhaseSchedule::fixed(5, 0.2);
    rep.direct = run_strategy("direct", data, net_config, direct, hooks);
    rep.progressive = run_strategy("progressive", data, net_config, base, hooks);
    rep.same_epoch0_order = rep.direct.epoch0_order == rep.progressive.epoch0_order;
    return rep;
}

std::string StabilityReport::csv() const { return direct.log.to_csv(true) + progressive.log.to_csv(false); }

std::string StabilityReport::summary() const {
    std::ostringstream os;
    os << std::left << std::setw(13) << "strategy" << std::setw(14) << "schedule" << std::setw(11) << "status"
       << std::setw(15) << "max_grad_norm" << std::setw(16) << "final_val_psnr" << "diverged_at\n";
    for (const StabilityRun* r : {&direct, &progressive}) {
        std::ostringstream norm, psnr;
        norm << std::setprecision(6) << r->max_grad_norm;
        if (r->final_val_psnr) {
            psnr << std::fixed << std::setprecision(3) << *r->final_val_psnr;
        } else {
            psnr << "-";
        }
        std::string where = "-";
        if (r->log.diverged_epoch) {
            where = "epoch " + std::to_string(*r->log.diverged_epoch) + " step " + std::to_string(*r->log.diverged_step);
        }
        os << std::setw(13) << r->label << std::setw(14) << r->schedule << std::setw(11) << to_string(r->log.status)
           << std::setw(15) << norm.str() << std::setw(16) << psnr.str() << where << "\n";
    }
    os << "epoch-0 batch order identical: " << (same_epoch0_order ? "yes" : "no") << "\n";
    os << "optimizer moments at phase transitions: " << (moments_carried_over ? "carried over" : "reset") << "\n";
    return os.str();
}

} // namespace pdeblur::train
