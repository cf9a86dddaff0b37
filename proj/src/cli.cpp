// SPDX-License-Identifier: Apache-2.0

#include "pdeblur/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pdeblur/data_synth.hpp"
#include "pdeblur/experiments.hpp"
#include "pdeblur/image_io.hpp"
#include "pdeblur/run_config.hpp"
#include "pdeblur/serialization.hpp"
#include "pdeblur/trainer.hpp"

namespace pdeblur::cli {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path default_output_root() {
    const char* env = std::getenv(kOutputRootEnv);
    return env && *env ? fs::path(env) : fs::path("pdeblur_out");
}

namespace {

constexpr const char* kRunManifestFormat = "pdeblur.run";
constexpr int kRunManifestVersion = 1;

void write_run_manifest(const fs::path& dir, const std::string& command, const json& config) {
    fs::create_directories(dir);
    const json m{{"format", kRunManifestFormat}, {"version", kRunManifestVersion}, {"command", command},
                 {"config", config}};
    write_text_file(dir / "run.json", m.dump(2) + "\n");
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
    const auto x = s.find('x');
    try {
        if (x == std::string::npos) {
            const auto n = static_cast<std::size_t>(std::stoul(s));
            return {n, n};
        }
        return {static_cast<std::size_t>(std::stoul(s.substr(0, x))),
                static_cast<std::size_t>(std::stoul(s.substr(x + 1)))};
    } catch (const std::exception&) {
        throw ContractError("size '" + s + "' is not HxW");
    }
}

std::vector<std::size_t> parse_list(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const auto v = std::stoul(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw ContractError("list entry '" + item + "' is not a nonnegative integer");
        }
    }
    if (out.empty()) throw ContractError("empty list");
    return out;
}

std::string fmt(double v, int decimals) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(decimals) << v;
    return os.str();
}

Shape data_shape(const synth::Dataset& ds) {
    for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
        if (!split->empty()) return split->front().sharp.shape();
    }
    throw ContractError("dataset is empty");
}

struct RunConfigFlags {
    std::string config_file;
    std::vector<std::string> overrides;
    std::string schedule;
    int pde_layers = -1;
    long long epochs = -1;
    long long seed = -1;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "Run configuration file (key = value)");
        cmd->add_option("--set", overrides, "Override a configuration key (key=value); repeatable");
        cmd->add_option("--schedule", schedule, "progressive | progressive:K | fixed:K,DT");
        cmd->add_option("--pde-layers", pde_layers, "PDE layers at the bottleneck");
        cmd->add_option("--epochs", epochs, "Training epochs");
        cmd->add_option("--seed", seed, "Run seed");
    }

    RunConfig resolve() const {
        RunConfig cfg = config_file.empty() ? parse_run_config("") : load_run_config(config_file);
        std::vector<std::string> all = overrides;
        if (!schedule.empty()) all.push_back("schedule=" + schedule);
        if (pde_layers >= 0) all.push_back("pde_layers=" + std::to_string(pde_layers));
        if (epochs >= 0) all.push_back("epochs=" + std::to_string(epochs));
        if (seed >= 0) all.push_back("seed=" + std::to_string(seed));
        apply_overrides(cfg, all);
        return cfg;
    }
};

std::string mac_report(const net::NetConfig& cfg, std::size_t h, std::size_t w, std::size_t k) {
    const auto m = exp::predicted_network_macs(cfg, h, w, k);
    std::ostringstream os;
    const double total = static_cast<double>(m.total());
    os << "per-image forward at K=" << k << ": total " << metrics::format_gmacs(m.total()) << " GMACs"
       << " (conv " << metrics::format_gmacs(m.conv) << ", pde " << metrics::format_gmacs(m.pde) << ", other "
       << metrics::format_gmacs(m.other) << "); pde share " << fmt(100.0 * static_cast<double>(m.pde) / total, 3)
       << "%\n";
    return os.str();
}

// ---------------------------------------------------------------- synth

int cmd_synth(const synth::DatasetConfig& cfg, const fs::path& out_dir, std::ostream& out) {
    const auto ds = synth::generate_dataset(cfg);
    synth::save_dataset(ds, out_dir);
    write_run_manifest(out_dir, "synth", cfg.to_json());
    out << "wrote " << ds.total() << " pairs (train " << ds.train.size() << ", val " << ds.val.size() << ", test "
        << ds.test.size() << ") to " << out_dir.string() << "\n";
    if (!ds.val.empty()) out << "mean blurred PSNR (val): " << fmt(synth::mean_blurred_psnr(ds.val), 3) << " dB\n";
    return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainFlags {
    std::string data;
    std::string out;
    std::string resume;
    RunConfigFlags run;
};

int cmd_train(const TrainFlags& f, std::ostream& out) {
    const auto ds = synth::load_dataset(f.data);
    const Shape s = data_shape(ds);
    train::TrainState state;
    RunConfig cfg;
    if (!f.resume.empty()) {
        const auto ck = train::load_checkpoint(f.resume);
        cfg.net = ck.net;
        cfg.train = ck.train;
        if (f.run.epochs >= 0) cfg.train.epochs = static_cast<std::size_t>(f.run.epochs);
        state = ck.state;
    } else {
        cfg = f.run.resolve();
    }
    cfg.net.check_image_size(s.height, s.width);
    const fs::path dir = f.out.empty() ? default_output_root() / "train" / cfg.train.run_id : fs::path(f.out);
    write_run_manifest(dir, "train",
                       {{"data", f.data}, {"resume", f.resume}, {"net", cfg.net.to_json()}, {"train", cfg.train.to_json()}});

    train::TrainHooks hooks;
    hooks.checkpoint_dir = dir / "checkpoints";
    std::string metrics_rows = exp::metrics_csv_header() + "\n";
    const auto append_metrics = [&](const train::EpochMetrics& m) {
        metrics_rows += exp::metrics_csv_row(cfg.train.run_id, m.epoch, "val", m.val_psnr, m.val_ssim,
                                             cfg.train.ssim_mode,
                                             exp::predicted_network_macs(cfg.net, s.height, s.width, m.k).total()) +
                        "\n";
    };
    for (const auto& m : state.epochs) append_metrics(m);
    hooks.on_epoch = [&](const train::EpochMetrics& m) {
        append_metrics(m);
        out << "epoch " << m.epoch << " K=" << m.k << " dt=" << m.delta_t << " val PSNR " << fmt(m.val_psnr, 3)
            << " dB (blurred " << fmt(m.blurred_psnr, 3) << ") SSIM[" << metrics::to_string(cfg.train.ssim_mode)
            << "] " << fmt(m.val_ssim, 4) << "\n";
        out.flush();
    };

    train::TrainState result;
    if (f.resume.empty()) {
        auto built = net::build(cfg.net, s.height, s.width, cfg.train.seed);
        result = train::train(built.network, std::move(built.params), ds, cfg.train, hooks);
    } else {
        auto network = net::build_graph(cfg.net, s.height, s.width);
        result = train::resume(network, std::move(state), ds, cfg.train, hooks);
    }

    write_text_file(dir / "runlog.csv", result.log.to_csv());
    write_text_file(dir / "metrics.csv", metrics_rows);
    train::Checkpoint ck;
    ck.net = cfg.net;
    ck.height = s.height;
    ck.width = s.width;
    ck.train = cfg.train;
    ck.schedule_position = cfg.train.schedule.phase_index(result.next_epoch);
    ck.state = result;
    train::save_checkpoint(dir / "model.ckpt", ck);

    const std::size_t last_k =
        result.next_epoch == 0 ? cfg.train.schedule.phase_for_epoch(0).k
                               : cfg.train.schedule.phase_for_epoch(result.next_epoch - 1).k;
    std::string report = "run " + cfg.train.run_id + ": " + train::to_string(result.log.status);
    if (result.log.status == train::RunStatus::Diverged) report += " (" + result.log.reason + ")";
    report += "\nsteps " + std::to_string(result.global_step) + ", max grad norm " +
              fmt(result.log.max_grad_norm(), 6) + "\n" + mac_report(cfg.net, s.height, s.width, last_k) +
              "optimizer moments carried over across phase transitions\n";
    write_text_file(dir / "report.txt", report);
    out << report << "outputs in " << dir.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalFlags {
    std::string checkpoint;
    std::string data;
    std::string out;
    std::string split = "test";
    std::string images;
    bool no_images = false;
};

int cmd_eval(const EvalFlags& f, std::ostream& out) {
    const auto ck = train::load_checkpoint(f.checkpoint);
    const auto ds = synth::load_dataset(f.data);
    const Shape s = data_shape(ds);
    ck.net.check_image_size(s.height, s.width);
    if (s.height != ck.height || s.width != ck.width) {
        throw ContractError("checkpoint was trained at " + std::to_string(ck.width) + "x" + std::to_string(ck.height) +
                            " but the data is " + std::to_string(s.width) + "x" + std::to_string(s.height));
    }
    const std::vector<synth::PairSample>* samples = nullptr;
    if (f.split == "train") samples = &ds.train;
    else if (f.split == "val") samples = &ds.val;
    else if (f.split == "test") samples = &ds.test;
    else throw ContractError("unknown split '" + f.split + "' (expected train, val or test)");
    if (samples->empty()) throw ContractError("split '" + f.split + "' is empty");

    auto network = net::build_graph(ck.net, ck.height, ck.width);
    const std::size_t epoch = ck.state.next_epoch == 0 ? 0 : ck.state.next_epoch - 1;
    const auto& phase = ck.train.schedule.phase_for_epoch(epoch);
    network.set_discretization(pde::Discretization{.delta_t = phase.delta_t, .K = phase.k});
    const auto m = train::evaluate(network, ck.state.params, *samples, ck.train.ssim_mode);
    const auto macs = exp::predicted_network_macs(ck.net, s.height, s.width, phase.k).total();

    const fs::path csv = f.out.empty() ? default_output_root() / "eval" / "metrics.csv" : fs::path(f.out);
    if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
    Real ssim_blurred = 0;
    for (const auto& p : *samples) ssim_blurred += metrics::ssim(p.blurred, p.sharp, ck.train.ssim_mode);
    ssim_blurred /= static_cast<Real>(samples->size());
    const std::string text = exp::metrics_csv_header() + "\n" +
               exp::metrics_csv_row(ck.train.run_id, epoch, f.split, m.val_psnr, m.val_ssim, ck.train.ssim_mode,
                                    macs) +
               "\n" +
               exp::metrics_csv_row(ck.train.run_id, epoch, f.split + "_blurred", m.blurred_psnr, ssim_blurred,
                                    ck.train.ssim_mode, 0) +
               "\n";
    write_text_file(csv, text);

    if (!f.no_images) {
        const fs::path img_dir =
            f.images.empty() ? csv.parent_path() / (csv.stem().string() + "_images") : fs::path(f.images);
        fs::create_directories(img_dir);
        for (const auto& p : *samples) {
            char name[32];
            std::snprintf(name, sizeof name, "%06zu", p.index);
            const FeatureMap restored = net::predict(network, ck.state.params, p.blurred, true);
            io::write_image(img_dir / (std::string(name) + "_restored.ppm"), restored);
            io::write_image(img_dir / (std::string(name) + "_blurred.ppm"), p.blurred);
            io::write_image(img_dir / (std::string(name) + "_sharp.ppm"), p.sharp);
        }
    }
    out << f.split << ": PSNR " << fmt(m.val_psnr, 4) << " dB (blurred " << fmt(m.blurred_psnr, 4) << "), SSIM["
        << metrics::to_string(ck.train.ssim_mode) << "] " << fmt(m.val_ssim, 5) << ", " << samples->size()
        << " images, K=" << phase.k << "\nwrote " << csv.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckFlags {
    std::size_t k = 5;
    std::string size = "8x8";
    std::size_t channels = 2;
    std::size_t seeds = 5;
    double tolerance = 1e-5;
    double epsilon = 1e-6;
    std::string velocity_mode = "spatial";
    std::string boundary = "replicate";
};

int cmd_gradcheck(const GradcheckFlags& f, std::ostream& out) {
    exp::GradCheckConfig cfg;
    cfg.k = f.k;
    std::tie(cfg.height, cfg.width) = parse_size(f.size);
    cfg.channels = f.channels;
    cfg.seeds = f.seeds;
    cfg.tolerance = f.tolerance;
    cfg.epsilon = f.epsilon;
    cfg.velocity_mode = pde::velocity_mode_from_string(f.velocity_mode);
    cfg.boundary = boundary_from_string(f.boundary);
    const auto r = exp::run_gradcheck(cfg);
    for (const auto& run : r.runs) {
        const auto* worst = run.report.worst();
        out << "seed " << run.seed << ": " << (run.report.passed ? "pass" : "FAIL");
        if (worst) {
            out << "  worst " << worst->name << " rel " << std::setprecision(3) << worst->worst_rel_error
                << std::defaultfloat;
        }
        out << "\n";
        if (!run.report.passed) out << run.report.summary();
    }
    out << "gradcheck K=" << cfg.k << " " << cfg.height << "x" << cfg.width << " C=" << cfg.channels << " seeds="
        << cfg.seeds << " tol=" << cfg.tolerance << " eps=" << cfg.epsilon << ": " << (r.passed ? "PASS" : "FAIL")
        << " (" << fmt(r.wall_ms / 1000.0, 2) << " s)\n";
    return r.passed ? kExitOk : kExitVerificationFailed;
}

// ---------------------------------------------------------------- bench

struct BenchFlags {
    std::string k_list = "1,3,5,7";
    std::string size = "32x32";
    std::size_t channels = 32;
    std::size_t batch = 1;
    std::size_t repeats = 5;
    std::string velocity_mode = "spatial";
    std::string out;
};

int cmd_bench(const BenchFlags& f, std::ostream& out) {
    const auto [h, w] = parse_size(f.size);
    const Shape shape{f.batch, f.channels, h, w};
    const auto rows = exp::run_bench(parse_list(f.k_list), shape, pde::velocity_mode_from_string(f.velocity_mode),
                                     f.repeats);
    const std::string csv = exp::bench_csv(rows);
    const fs::path path = f.out.empty() ? default_output_root() / "bench" / "bench.csv" : fs::path(f.out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_text_file(path, csv);
    out << csv;
    bool affine = true;
    for (std::size_t i = 2; i < rows.size(); ++i) {
        const auto d1 = static_cast<long double>(rows[i - 1].macs_closed_form) - rows[i - 2].macs_closed_form;
        const auto d2 = static_cast<long double>(rows[i].macs_closed_form) - rows[i - 1].macs_closed_form;
        const auto k1 = static_cast<long double>(rows[i - 1].k) - rows[i - 2].k;
        const auto k2 = static_cast<long double>(rows[i].k) - rows[i - 1].k;
        affine = affine && d1 * k2 == d2 * k1;
    }
    bool matches = true;
    for (const auto& r : rows) matches = matches && r.macs_instrumented == r.macs_closed_form;
    out << "counts affine in K: " << (affine ? "yes" : "no") << "; instrumented == closed form: "
        << (matches ? "yes" : "no") << "\nwrote " << path.string() << "\n";
    return affine && matches ? kExitOk : kExitVerificationFailed;
}

// ---------------------------------------------------------------- ablate

struct AblateFlags {
    std::string axis = "k";
    std::string values;
    std::string data;
    std::string out;
    RunConfigFlags run;
};

int cmd_ablate(const AblateFlags& f, std::ostream& out) {
    const auto axis = exp::ablation_axis_from_string(f.axis);
    const auto values = parse_list(f.values.empty() ? (axis == exp::AblationAxis::K ? "0,1,3,5,7" : "0,1,3,5")
                                                    : f.values);
    const RunConfig base = f.run.resolve();
    const auto ds = synth::load_dataset(f.data);
    const Shape s = data_shape(ds);
    base.net.check_image_size(s.height, s.width);
    const fs::path dir = f.out.empty() ? default_output_root() / "ablate" / exp::to_string(axis) : fs::path(f.out);
    write_run_manifest(dir, "ablate",
                       {{"axis", exp::to_string(axis)}, {"values", values}, {"data", f.data}, {"base", base.to_json()}});
    std::vector<exp::AblationResult> results;
    for (std::size_t v : values) {
        results.push_back(exp::run_ablation_setting(ds, base, axis, v, dir));
        const auto& r = results.back();
        out << exp::to_string(axis) << "=" << v << ": " << train::to_string(r.status) << ", val PSNR "
            << fmt(r.final_metrics.val_psnr, 4) << " dB (" << std::showpos
            << fmt(r.final_metrics.val_psnr - r.final_metrics.blurred_psnr, 4) << std::noshowpos
            << " over blurred)\n";
        out.flush();
    }
    write_text_file(dir / "ablation.csv", exp::ablation_csv(results));
    out << "val PSNR non-decreasing in listed order: " << (exp::non_decreasing(results) ? "yes" : "no")
        << "\nwrote " << (dir / "ablation.csv").string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- stability

struct StabilityFlags {
    std::string data;
    std::string out;
    RunConfigFlags run;
};

int cmd_stability(const StabilityFlags& f, std::ostream& out) {
    const RunConfig base = f.run.resolve();
    const auto ds = synth::load_dataset(f.data);
    const Shape s = data_shape(ds);
    base.net.check_image_size(s.height, s.width);
    const fs::path dir = f.out.empty() ? default_output_root() / "stability" : fs::path(f.out);
    write_run_manifest(dir, "stability", {{"data", f.data}, {"base", base.to_json()}});
    const auto rep = train::stability_experiment(ds, base.net, base.train);
    write_text_file(dir / "stability.csv", rep.csv());
    std::string summary_csv = "strategy,schedule,status,max_grad_norm,final_val_psnr,diverged_epoch\n";
    for (const auto* r : {&rep.direct, &rep.progressive}) {
        char norm[32];
        std::snprintf(norm, sizeof norm, "%.6g", static_cast<double>(r->max_grad_norm));
        summary_csv += r->label + "," + r->schedule + "," + train::to_string(r->log.status) + "," + norm + "," +
                       (r->final_val_psnr ? fmt(*r->final_val_psnr, 4) : std::string()) + "," +
                       (r->log.diverged_epoch ? std::to_string(*r->log.diverged_epoch) : std::string()) + "\n";
    }
    write_text_file(dir / "summary.csv", summary_csv);
    write_text_file(dir / "summary.txt", rep.summary());
    out << rep.summary() << "wrote " << dir.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- plot

struct PlotFlags {
    std::string csv;
    std::string x;
    std::vector<std::string> y;
    std::string group;
    std::string out;
};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

int cmd_plot(const PlotFlags& f, std::ostream& out) {
    std::istringstream in(read_text_file(f.csv));
    std::string line;
    if (!std::getline(in, line)) throw ContractError(f.csv + " is empty");
    const auto header = split_csv_line(line);
    const auto column = [&](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        throw ContractError("column '" + name + "' not found in " + f.csv);
    };
    std::vector<std::string> ys;
    for (const auto& y : f.y) {
        std::stringstream ss(y);
        std::string item;
        while (std::getline(ss, item, ',')) ys.push_back(item);
    }
    if (ys.empty()) throw ContractError("need at least one --y column");
    const std::size_t xi = column(f.x);
    std::vector<std::size_t> yi;
    for (const auto& y : ys) yi.push_back(column(y));
    const std::optional<std::size_t> gi = f.group.empty() ? std::nullopt : std::optional(column(f.group));

    std::vector<std::string> order;
    std::map<std::string, std::string> blocks;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        const std::string key = gi ? cells.at(*gi) : "";
        if (!blocks.count(key)) order.push_back(key);
        std::string row = cells.at(xi);
        for (std::size_t i : yi) row += " " + (cells.at(i).empty() ? std::string("NaN") : cells.at(i));
        blocks[key] += row + "\n";
    }
    std::string text = "# " + f.x;
    for (const auto& y : ys) text += " " + y;
    text += "\n";
    for (std::size_t b = 0; b < order.size(); ++b) {
        if (b) text += "\n\n";
        if (gi) text += "# " + f.group + "=" + order[b] + "\n";
        text += blocks[order[b]];
    }
    const fs::path path = f.out.empty() ? fs::path(f.csv).replace_extension(".dat") : fs::path(f.out);
    write_text_file(path, text);
    out << "wrote " << path.string() << " (" << order.size() << " block" << (order.size() == 1 ? "" : "s") << ")\n"
        << "gnuplot: plot '" << path.string() << "'" << (gi ? " index 0" : "") << " using 1:2 with linespoints\n";
    return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Progressive PDE global layers for image deblurring: data, training, evaluation, verification"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    synth::DatasetConfig synth_cfg;
    std::string synth_out, synth_source, synth_boundary = "replicate";
    double noise_sigma = synth_cfg.noise_sigma_max;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic motion-blur dataset");
    synth_cmd->add_option("--out", synth_out, "Output directory");
    synth_cmd->add_option("--count", synth_cfg.count, "Number of pairs")->capture_default_str();
    synth_cmd->add_option("--size", synth_cfg.size, "Square image size in pixels")->capture_default_str();
    synth_cmd->add_option("--channels", synth_cfg.channels, "1 (PGM) or 3 (PPM)")->capture_default_str();
    synth_cmd->add_option("--seed", synth_cfg.seed, "Dataset seed")->capture_default_str();
    synth_cmd->add_option("--blur-len-min", synth_cfg.blur_len_min, "Shortest kernel length")->capture_default_str();
    synth_cmd->add_option("--blur-len-max", synth_cfg.blur_len_max, "Longest kernel length")->capture_default_str();
    synth_cmd->add_option("--noise-sigma", noise_sigma, "Largest Gaussian noise sigma")->capture_default_str();
    synth_cmd->add_option("--noise-sigma-min", synth_cfg.noise_sigma_min, "Smallest noise sigma")
        ->capture_default_str();
    synth_cmd->add_option("--val-fraction", synth_cfg.val_fraction, "Validation share")->capture_default_str();
    synth_cmd->add_option("--test-fraction", synth_cfg.test_fraction, "Test share")->capture_default_str();
    synth_cmd->add_option("--boundary", synth_boundary, "replicate | periodic | zeropad")->capture_default_str();
    synth_cmd->add_option("--source-dir", synth_source, "Crop sharp images from PGM/PPM files here");

    TrainFlags train_flags;
    auto* train_cmd = app.add_subcommand("train", "Train the toy network");
    train_cmd->add_option("--data", train_flags.data, "Dataset directory")->required();
    train_cmd->add_option("--out", train_flags.out, "Output directory");
    train_cmd->add_option("--resume", train_flags.resume, "Continue from a checkpoint");
    train_flags.run.add_to(train_cmd);

    EvalFlags eval_flags;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", eval_flags.checkpoint, "Checkpoint file")->required();
    eval_cmd->add_option("--data", eval_flags.data, "Dataset directory")->required();
    eval_cmd->add_option("--out", eval_flags.out, "Metrics CSV path");
    eval_cmd->add_option("--split", eval_flags.split, "train | val | test")->capture_default_str();
    eval_cmd->add_option("--images", eval_flags.images, "Directory for restored/blurred/sharp PPMs");
    eval_cmd->add_flag("--no-images", eval_flags.no_images, "Skip writing images");

    GradcheckFlags gc;
    auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the PDE layer adjoint");
    gc_cmd->add_option("--k", gc.k, "Iterations K")->capture_default_str();
    gc_cmd->add_option("--size", gc.size, "Field size HxW")->capture_default_str();
    gc_cmd->add_option("--channels", gc.channels, "Channels")->capture_default_str();
    gc_cmd->add_option("--seeds", gc.seeds, "Number of random instances")->capture_default_str();
    gc_cmd->add_option("--tolerance", gc.tolerance, "Relative tolerance")->capture_default_str();
    gc_cmd->add_option("--epsilon", gc.epsilon, "Central-difference step")->capture_default_str();
    gc_cmd->add_option("--velocity-mode", gc.velocity_mode, "spatial | uniform")->capture_default_str();
    gc_cmd->add_option("--boundary", gc.boundary, "replicate | periodic | zeropad")->capture_default_str();

    BenchFlags bench;
    auto* bench_cmd = app.add_subcommand("bench", "MAC counts and wall time of one PDE layer per K");
    bench_cmd->add_option("--k-list", bench.k_list, "Comma-separated K values")->capture_default_str();
    bench_cmd->add_option("--size", bench.size, "Field size HxW")->capture_default_str();
    bench_cmd->add_option("--channels", bench.channels, "Channels")->capture_default_str();
    bench_cmd->add_option("--batch", bench.batch, "Batch size")->capture_default_str();
    bench_cmd->add_option("--repeats", bench.repeats, "Timed repeats (best is reported)")->capture_default_str();
    bench_cmd->add_option("--velocity-mode", bench.velocity_mode, "spatial | uniform")->capture_default_str();
    bench_cmd->add_option("--out", bench.out, "CSV path");

    AblateFlags ablate;
    auto* ablate_cmd = app.add_subcommand("ablate", "Train one run per setting along an axis");
    ablate_cmd->add_option("--axis", ablate.axis, "k | layers")->capture_default_str();
    ablate_cmd->add_option("--values", ablate.values, "Comma-separated settings");
    ablate_cmd->add_option("--data", ablate.data, "Dataset directory")->required();
    ablate_cmd->add_option("--out", ablate.out, "Output directory");
    ablate.run.add_to(ablate_cmd);

    StabilityFlags stab;
    auto* stab_cmd = app.add_subcommand("stability", "Direct K=5 versus progressive training");
    stab_cmd->add_option("--data", stab.data, "Dataset directory")->required();
    stab_cmd->add_option("--out", stab.out, "Output directory");
    stab.run.add_to(stab_cmd);

    PlotFlags plot;
    auto* plot_cmd = app.add_subcommand("plot", "Emit gnuplot-ready columns from a CSV");
    plot_cmd->add_option("--csv", plot.csv, "Input CSV")->required();
    plot_cmd->add_option("--x", plot.x, "X column")->required();
    plot_cmd->add_option("--y", plot.y, "Y column(s); repeatable or comma-separated")->required();
    plot_cmd->add_option("--group", plot.group, "Split into gnuplot index blocks by this column");
    plot_cmd->add_option("--out", plot.out, "Output .dat path");

    std::vector<const char*> argv{"pdeblur"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*synth_cmd) {
            synth_cfg.noise_sigma_max = noise_sigma;
            synth_cfg.boundary = boundary_from_string(synth_boundary);
            if (!synth_source.empty()) synth_cfg.source_dir = synth_source;
            const fs::path dir = synth_out.empty() ? default_output_root() / "data" : fs::path(synth_out);
            return cmd_synth(synth_cfg, dir, out);
        }
        if (*train_cmd) return cmd_train(train_flags, out);
        if (*eval_cmd) return cmd_eval(eval_flags, out);
        if (*gc_cmd) return cmd_gradcheck(gc, out);
        if (*bench_cmd) return cmd_bench(bench, out);
        if (*ablate_cmd) return cmd_ablate(ablate, out);
        if (*stab_cmd) return cmd_stability(stab, out);
        if (*plot_cmd) return cmd_plot(plot, out);
    } catch (const ContractError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

} // namespace pdeblur::cli
