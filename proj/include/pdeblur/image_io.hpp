// SPDX-License-Identifier: Apache-2.0
//
// Binary PGM (P5) / PPM (P6) with max value 255. Pixels map to [0, 1] by /255;
// writing rounds half up, so read(write(x)) is exact for 8-bit-quantized x.

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "pdeblur/tensor.hpp"

namespace pdeblur::io {

class ImageFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Returns a (1, C, H, W) map with C = 1 for P5 and 3 for P6.
FeatureMap decode_pnm(const std::string& bytes);
/// Accepts batch 1 with 1 (P5) or 3 (P6) channels.
std::string encode_pnm(const FeatureMap& image);

FeatureMap read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const FeatureMap& image);

/// round-half-up to the nearest k/255, clamped to [0, 1].
Real quantize_8bit(Real v);

} // namespace pdeblur::io
