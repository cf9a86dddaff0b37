// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "pdeblur/data_synth.hpp"
#include "pdeblur/image_io.hpp"
#include "pdeblur/metrics.hpp"

using namespace pdeblur;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("pdeblur_test_" + name);
    fs::remove_all(p);
    return p;
}

// Tent-weight evaluation of every tap against the sample points; no splat bookkeeping.
std::vector<Real> tent_kernel(Real length, Real angle, std::size_t size) {
    const auto n = static_cast<std::size_t>(std::ceil(length));
    const auto r = static_cast<long>(size / 2);
    std::vector<Real> taps(size * size, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const Real t = n == 1 ? 0 : -(length - 1) / 2 + (length - 1) * i / (n - 1);
        const Real px = t * std::cos(angle), py = t * std::sin(angle);
        for (long y = -r; y <= r; ++y) {
            for (long x = -r; x <= r; ++x) {
                const Real w = std::max<Real>(0, 1 - std::abs(px - x)) * std::max<Real>(0, 1 - std::abs(py - y));
                taps[(y + r) * size + (x + r)] += w;
            }
        }
    }
    Real sum = 0;
    for (Real w : taps) sum += w;
    for (Real& w : taps) w /= sum;
    return taps;
}

FeatureMap quantized_image(Shape s, std::uint64_t seed) {
    FeatureMap m = synth::render_sharp_image(s.height, s.channels, seed);
    REQUIRE(m.shape() == s);
    return m;
}

} // namespace

TEST_CASE("motion kernels") {
    const auto id = synth::make_motion_kernel(1, 0.7);
    CHECK(id.size == 1);
    CHECK(id.taps == std::vector<Real>{1});

    const auto h = synth::make_motion_kernel(3, 0);
    REQUIRE(h.size == 3);
    CHECK(h.tap(0, -1) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(h.tap(0, 0) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(h.tap(0, 1) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(h.tap(1, 0) == 0);
    CHECK(h.tap(-1, 0) == 0);

    for (Real len : {1.0, 2.0, 3.0, 4.5, 7.0, 9.0}) {
        for (Real angle : {0.0, 0.3, std::numbers::pi / 4, 1.2, std::numbers::pi / 2, 2.9}) {
            const auto k = synth::make_motion_kernel(len, angle);
            Real sum = 0;
            for (Real w : k.taps) sum += w;
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
            const auto ref = tent_kernel(len, angle, k.size);
            for (std::size_t i = 0; i < ref.size(); ++i) CHECK(k.taps[i] == doctest::Approx(ref[i]).epsilon(1e-9));
        }
    }
    CHECK_THROWS_AS(synth::make_motion_kernel(0.5, 0), ContractError);
}

TEST_CASE("blur invariants") {
    const auto img = quantized_image(Shape{1, 3, 16, 16}, 4);
    CHECK(synth::blur(img, synth::make_motion_kernel(1, 0), BoundaryMode::Replicate, 0, 0) == img);

    const FeatureMap flat(Shape{1, 2, 8, 8}, 0.4);
    const auto fb = synth::blur(flat, synth::make_motion_kernel(5, 0.8), BoundaryMode::Replicate, 0, 0);
    for (Real v : fb.data()) CHECK(v == doctest::Approx(0.4).epsilon(1e-12));

    const auto k = synth::make_motion_kernel(7, 0.6);
    const auto pb = synth::blur(img, k, BoundaryMode::Periodic, 0, 0);
    for (std::size_t c = 0; c < 3; ++c) {
        Real before = 0, after = 0;
        for (Real v : std::as_const(img).plane(0, c).data) before += v;
        for (Real v : std::as_const(pb).plane(0, c).data) after += v;
        CHECK(std::abs(before - after) / 256 <= 1e-12);
    }

    const auto n1 = synth::blur(img, k, BoundaryMode::Replicate, 0.05, 7);
    CHECK(n1 == synth::blur(img, k, BoundaryMode::Replicate, 0.05, 7));
    CHECK_FALSE(n1 == synth::blur(img, k, BoundaryMode::Replicate, 0.05, 8));
    for (Real v : n1.data()) CHECK((v >= 0 && v <= 1));
}

TEST_CASE("pnm round trip") {
    const auto dir = scratch("pnm");
    fs::create_directories(dir);
    for (std::size_t c : {1, 3}) {
        const auto img = quantized_image(Shape{1, c, 12, 12}, c);
        const auto path = dir / (c == 1 ? "a.pgm" : "a.ppm");
        io::write_image(path, img);
        CHECK(io::read_image(path) == img);
    }
    const std::string bytes = std::string("P5\n# comment\n2 1\n255\n") + char(0) + char(255);
    const auto m = io::decode_pnm(bytes);
    CHECK(m.at(0, 0, 0, 0) == 0.0);
    CHECK(m.at(0, 0, 0, 1) == 1.0);
    CHECK(io::encode_pnm(m) == "P5\n2 1\n255\n" + bytes.substr(bytes.size() - 2));
    CHECK(io::quantize_8bit(0.5) == 128.0 / 255);
    CHECK(io::quantize_8bit(-1) == 0);
    CHECK(io::quantize_8bit(2) == 1);
    fs::remove_all(dir);
}

TEST_CASE("pnm errors") {
    CHECK_THROWS_WITH_AS(io::decode_pnm("P6\n1 1\n65535\n\0\0\0\0\0\0"), doctest::Contains("unsupported format"),
                         io::ImageFormatError);
    CHECK_THROWS_WITH_AS(io::decode_pnm("P6\n2 2\n255\nabc"), doctest::Contains("byte offset"), io::ImageFormatError);
    CHECK_THROWS_AS(io::decode_pnm("P3\n1 1\n255\n0 0 0"), io::ImageFormatError);
    CHECK_THROWS_AS(io::decode_pnm("P5\nx 1\n255\n"), io::ImageFormatError);
    CHECK_THROWS_AS(io::read_image("/nonexistent/pdeblur.ppm"), std::exception);
    CHECK_THROWS(io::encode_pnm(FeatureMap(Shape{1, 2, 2, 2})));
}

TEST_CASE("dataset generation") {
    synth::DatasetConfig cfg;
    cfg.count = 40;
    cfg.size = 16;
    cfg.seed = 5;
    const auto a = synth::generate_dataset(cfg);
    CHECK(a.train.size() == 32);
    CHECK(a.val.size() == 4);
    CHECK(a.test.size() == 4);
    std::set<std::size_t> seen;
    for (const auto* split : {&a.train, &a.val, &a.test}) {
        for (const auto& p : *split) {
            CHECK(seen.insert(p.index).second);
            CHECK(p.kernel_length >= 3);
            CHECK(p.kernel_length <= 9);
            CHECK(p.kernel_length == std::round(p.kernel_length));
            CHECK(p.noise_sigma <= 0.01);
            for (Real v : p.blurred.data()) CHECK(io::quantize_8bit(v) == v);
        }
    }
    CHECK(seen.size() == 40);

    const auto b = synth::generate_dataset(cfg);
    REQUIRE(b.train.size() == a.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].index == b.train[i].index);
        CHECK(a.train[i].sharp == b.train[i].sharp);
        CHECK(a.train[i].blurred == b.train[i].blurred);
    }
    cfg.seed = 6;
    CHECK_FALSE(synth::generate_dataset(cfg).train[0].sharp == a.train[0].sharp);
    CHECK(synth::mean_blurred_psnr(a.val) > 10);
    CHECK(synth::mean_blurred_psnr(a.val) < 60);
}

TEST_CASE("default dataset split sizes") {
    const synth::DatasetConfig cfg;
    CHECK(cfg.count == 640);
    const auto ds = synth::generate_dataset(cfg);
    CHECK(ds.train.size() == 512);
    CHECK(ds.val.size() == 64);
    CHECK(ds.test.size() == 64);
    CHECK(ds.train[0].sharp.shape() == Shape{1, 3, 32, 32});
}

TEST_CASE("dataset save and load are bit-exact") {
    synth::DatasetConfig cfg;
    cfg.count = 12;
    cfg.size = 8;
    cfg.channels = 1;
    const auto ds = synth::generate_dataset(cfg);
    const auto dir = scratch("ds");
    synth::save_dataset(ds, dir);
    const auto back = synth::load_dataset(dir);
    CHECK(back.total() == ds.total());
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
        CHECK(back.train[i].index == ds.train[i].index);
        CHECK(back.train[i].sharp == ds.train[i].sharp);
        CHECK(back.train[i].blurred == ds.train[i].blurred);
        CHECK(back.train[i].kernel_length == ds.train[i].kernel_length);
    }
    CHECK(back.config.to_json() == ds.config.to_json());
    fs::remove_all(dir);

    cfg.count = 0;
    const auto empty = synth::generate_dataset(cfg);
    CHECK(empty.total() == 0);
    synth::save_dataset(empty, dir);
    CHECK(synth::load_dataset(dir).total() == 0);
    fs::remove_all(dir);
}

TEST_CASE("dataset config validation and source images") {
    synth::DatasetConfig bad;
    bad.blur_len_min = 5;
    bad.blur_len_max = 3;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = synth::DatasetConfig{};
    bad.val_fraction = 0.7;
    bad.test_fraction = 0.4;
    CHECK_THROWS_AS(bad.validate(), ContractError);

    const auto src = scratch("src");
    fs::create_directories(src);
    io::write_image(src / "big.ppm", quantized_image(Shape{1, 3, 24, 24}, 1));
    synth::DatasetConfig cfg;
    cfg.count = 4;
    cfg.size = 16;
    cfg.source_dir = src;
    const auto ds = synth::generate_dataset(cfg);
    CHECK(ds.total() == 4);
    CHECK(ds.train[0].sharp.shape() == Shape{1, 3, 16, 16});
    CHECK(synth::DatasetConfig::from_json(cfg.to_json()).source_dir == cfg.source_dir);
    fs::remove_all(src);
}

TEST_CASE("batch stacking") {
    synth::DatasetConfig cfg;
    cfg.count = 6;
    cfg.size = 8;
    const auto ds = synth::generate_dataset(cfg);
    const std::vector<std::size_t> idx{2, 0};
    const auto b = synth::stack_batch(ds.train, idx, true);
    CHECK(b.shape() == Shape{2, 3, 8, 8});
    CHECK(b.at(0, 1, 3, 4) == ds.train[2].blurred.at(0, 1, 3, 4));
    CHECK(b.at(1, 2, 7, 7) == ds.train[0].blurred.at(0, 2, 7, 7));
    CHECK(synth::stack_batch(ds.train, idx, false).at(1, 0, 0, 0) == ds.train[0].sharp.at(0, 0, 0, 0));
}
