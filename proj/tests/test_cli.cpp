// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "pdeblur/cli.hpp"
#include "pdeblur/serialization.hpp"

using namespace pdeblur;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result invoke(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("pdeblur_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::vector<std::string> column(const std::string& csv, std::size_t index) {
    std::vector<std::string> out;
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::istringstream row(line);
        std::string cell;
        for (std::size_t i = 0; i <= index && std::getline(row, cell, ','); ++i) {
        }
        out.push_back(cell);
    }
    return out;
}

std::string tree_digest(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::string all;
    for (const auto& f : files) all += fs::relative(f, dir).string() + "\n" + read_text_file(f);
    return all;
}

} // namespace

TEST_CASE("usage errors") {
    CHECK(invoke({}).code == cli::kExitUsage);
    CHECK(invoke({"frobnicate"}).code == cli::kExitUsage);
    CHECK(invoke({"train"}).code == cli::kExitUsage);
    CHECK(invoke({"--help"}).code == cli::kExitOk);
    CHECK(invoke({"bench", "--k-list", "1,x"}).code == cli::kExitUsage);
}

TEST_CASE("synth is deterministic and handles an empty request") {
    const auto a = scratch("synth_a"), b = scratch("synth_b"), e = scratch("synth_e");
    const std::vector<std::string> flags{"--count", "10", "--size", "8", "--seed", "2", "--blur-len-min", "3",
                                         "--blur-len-max", "5", "--noise-sigma", "0.01"};
    auto fa = flags, fb = flags;
    fa.insert(fa.begin(), {"synth", "--out", a.string()});
    fb.insert(fb.begin(), {"synth", "--out", b.string()});
    CHECK(invoke(fa).code == 0);
    CHECK(invoke(fb).code == 0);
    CHECK(tree_digest(a) == tree_digest(b));
    CHECK(fs::exists(a / "run.json"));
    CHECK(invoke({"synth", "--out", e.string(), "--count", "0"}).code == 0);
    CHECK(fs::exists(e / "manifest.json"));
    CHECK(invoke({"synth", "--out", e.string(), "--blur-len-min", "0.5"}).code == cli::kExitUsage);
    for (const auto& d : {a, b, e}) fs::remove_all(d);
}

TEST_CASE("gradcheck exit codes") {
    CHECK(invoke({"gradcheck", "--k", "1", "--size", "4x4", "--seeds", "1"}).code == cli::kExitOk);
    const auto strict = invoke({"gradcheck", "--k", "2", "--size", "4x4", "--seeds", "1", "--tolerance", "1e-12"});
    CHECK(strict.code == cli::kExitVerificationFailed);
    CHECK(strict.out.find("FAIL") != std::string::npos);
    CHECK(invoke({"gradcheck", "--size", "banana"}).code == cli::kExitUsage);
}

TEST_CASE("bench writes the documented columns") {
    const auto dir = scratch("bench");
    const auto r = invoke({"bench", "--k-list", "1,3,5,7", "--size", "8x8", "--channels", "2", "--repeats", "1", "--out",
                        (dir / "b.csv").string()});
    CHECK(r.code == 0);
    const auto csv = read_text_file(dir / "b.csv");
    CHECK(csv.rfind("k,batch,channels,height,width,macs_instrumented,macs_closed_form,gmacs,wall_ms\n", 0) == 0);
    CHECK(r.out.find("counts affine in K: yes") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("train, eval, resume and plot on a toy dataset") {
    const auto root = scratch("pipeline");
    const auto data = root / "data";
    REQUIRE(invoke({"synth", "--out", data.string(), "--count", "10", "--size", "8", "--val-fraction", "0.2",
                 "--test-fraction", "0.2"})
                .code == 0);
    const auto run = root / "run";
    const auto t = invoke({"train", "--data", data.string(), "--out", run.string(), "--epochs", "3", "--set",
                        "base_channels=2", "--set", "pde_layers=1", "--set", "ssim_mode=block8", "--schedule", "fixed:1,1.0"});
    REQUIRE(t.code == 0);
    for (const char* f : {"runlog.csv", "metrics.csv", "model.ckpt", "report.txt", "run.json"}) {
        CHECK(fs::exists(run / f));
    }
    const auto log = read_text_file(run / "runlog.csv");
    const auto ks = column(log, 3);
    CHECK(ks.size() == 9);
    for (const auto& k : ks) CHECK(k == "1");

    const auto base = root / "base";
    const auto b = invoke({"train", "--data", data.string(), "--out", base.string(), "--epochs", "1", "--set",
                        "base_channels=2", "--set", "ssim_mode=block8", "--pde-layers", "0"});
    REQUIRE(b.code == 0);
    CHECK(b.out.find("pde 0.000") != std::string::npos);

    const auto csv1 = root / "e1.csv", csv2 = root / "e2.csv";
    const auto e1 = invoke({"eval", "--checkpoint", (run / "model.ckpt").string(), "--data", data.string(), "--out",
                         csv1.string()});
    REQUIRE(e1.code == 0);
    CHECK(invoke({"eval", "--checkpoint", (run / "model.ckpt").string(), "--data", data.string(), "--out",
               csv2.string(), "--no-images"})
              .code == 0);
    CHECK(read_text_file(csv1) == read_text_file(csv2));
    CHECK(fs::exists(root / "e1_images"));

    const auto part = root / "part", resumed = root / "resumed";
    REQUIRE(invoke({"train", "--data", data.string(), "--out", part.string(), "--epochs", "2", "--set",
                    "base_channels=2", "--set", "pde_layers=1", "--set", "ssim_mode=block8", "--schedule",
                    "fixed:1,1.0"})
                .code == 0);
    CHECK(invoke({"train", "--data", data.string(), "--resume", (part / "model.ckpt").string(), "--epochs", "3",
                  "--out", resumed.string()})
              .code == 0);
    const auto relog = read_text_file(resumed / "runlog.csv");
    for (std::size_t c : {1, 2, 3, 4, 5, 6, 8}) CHECK(column(relog, c) == column(log, c));
    CHECK(read_text_file(resumed / "metrics.csv") == read_text_file(run / "metrics.csv"));

    const auto p = invoke({"plot", "--csv", (run / "runlog.csv").string(), "--x", "step", "--y", "loss", "--group", "k"});
    CHECK(p.code == 0);
    CHECK(fs::exists(run / "runlog.dat"));
    CHECK(invoke({"plot", "--csv", (run / "runlog.csv").string(), "--x", "nope", "--y", "loss"}).code ==
          cli::kExitUsage);

    const auto odd = root / "odd";
    REQUIRE(invoke({"synth", "--out", odd.string(), "--count", "4", "--size", "30"}).code == 0);
    const auto refused = invoke({"eval", "--checkpoint", (run / "model.ckpt").string(), "--data", odd.string()});
    CHECK(refused.code == cli::kExitUsage);
    CHECK(refused.err.find("30") != std::string::npos);
    CHECK(invoke({"eval", "--checkpoint", (root / "missing.ckpt").string(), "--data", data.string()}).code ==
          cli::kExitRuntime);
    fs::remove_all(root);
}
