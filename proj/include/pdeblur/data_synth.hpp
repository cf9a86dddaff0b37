// SPDX-License-Identifier: Apache-2.0
//
// Synthetic motion-blur pairs: procedural sharp images, linear motion kernels,
// deterministic train/val/test splits and an on-disk layout with a JSON manifest.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "pdeblur/tensor.hpp"

namespace pdeblur::synth {

struct MotionKernel {
    Real length = 1;
    Real angle = 0;
    std::size_t size = 1;  // odd; taps are size x size, row-major
    std::vector<Real> taps;

    std::ptrdiff_t radius() const { return static_cast<std::ptrdiff_t>(size / 2); }
    Real tap(std::ptrdiff_t dy, std::ptrdiff_t dx) const {
        return taps[static_cast<std::size_t>((dy + radius()) * static_cast<std::ptrdiff_t>(size) + dx + radius())];
    }
};

/// ceil(length) points evenly spaced over a centred segment of the given length
/// and angle, each bilinearly splatted, then normalized to unit sum.
MotionKernel make_motion_kernel(Real length, Real angle);

/// Per-channel correlation with `kernel`, plus N(0, sigma) noise, clamped to [0, 1].
FeatureMap blur(const FeatureMap& image, const MotionKernel& kernel, BoundaryMode mode, Real noise_sigma,
                std::uint64_t seed);

struct PairSample {
    std::size_t index = 0;
    FeatureMap sharp;
    FeatureMap blurred;
    Real kernel_length = 1;
    Real kernel_angle = 0;
    Real noise_sigma = 0;
};

struct DatasetConfig {
    std::size_t count = 640;
    std::size_t size = 32;
    std::size_t channels = 3;
    Real blur_len_min = 3;
    Real blur_len_max = 9;
    Real noise_sigma_min = 0;
    Real noise_sigma_max = 0.01;
    Real val_fraction = 0.1;
    Real test_fraction = 0.1;
    BoundaryMode boundary = BoundaryMode::Replicate;
    std::uint64_t seed = 0;
    /// When set, sharp images are centre crops of the PGM/PPM files found here
    /// (sorted by name, reused cyclically) instead of procedural renders.
    std::optional<std::filesystem::path> source_dir;

    void validate() const;
    nlohmann::json to_json() const;
    static DatasetConfig from_json(const nlohmann::json& j);
};

struct Dataset {
    DatasetConfig config;
    std::vector<PairSample> train;
    std::vector<PairSample> val;
    std::vector<PairSample> test;

    std::size_t total() const { return train.size() + val.size() + test.size(); }
};

/// Random anti-aliased gradient background, convex polygons and thin strokes,
/// quantized to 8 bits.
FeatureMap render_sharp_image(std::size_t size, std::size_t channels, std::uint64_t seed);

/// Pure function of the config. Integer kernel lengths are drawn uniformly from
/// [blur_len_min, blur_len_max]; blurred images are 8-bit quantized.
Dataset generate_dataset(const DatasetConfig& config);

/// Writes manifest.json plus sharp/NNNNNN.ppm and blurred/NNNNNN.ppm.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Mean PSNR of blurred against sharp.
Real mean_blurred_psnr(std::span<const PairSample> samples);

/// Concatenates the chosen samples along the batch axis.
FeatureMap stack_batch(std::span<const PairSample> samples, std::span<const std::size_t> indices, bool blurred);

} // namespace pdeblur::synth
