// SPDX-License-Identifier: Apache-2.0

#include "pdeblur/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "pdeblur/serialization.hpp"

namespace pdeblur::io {

namespace {

int to_byte(Real v) {
    const Real scaled = std::floor(v * 255 + Real(0.5));
    return static_cast<int>(std::clamp(scaled, Real(0), Real(255)));
}

class HeaderReader {
public:
    explicit HeaderReader(const std::string& bytes) : b_(bytes) {}

    std::size_t pos() const { return pos_; }

    void skip_space_and_comments() {
        while (pos_ < b_.size()) {
            const char c = b_[pos_];
            if (c == '#') {
                while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t number(const char* what) {
        skip_space_and_comments();
        const std::size_t start = pos_;
        std::size_t v = 0;
        while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
            v = v * 10 + static_cast<std::size_t>(b_[pos_] - '0');
            if (v > 1u << 24) fail(std::string("implausibly large ") + what, start);
            ++pos_;
        }
        if (pos_ == start) fail(std::string("expected ") + what, start);
        return v;
    }

    void single_whitespace() {
        if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_]))) {
            fail("expected whitespace after max value", pos_);
        }
        ++pos_;
    }

    [[noreturn]] static void fail(const std::string& msg, std::size_t offset) {
        throw ImageFormatError("pnm: " + msg + " at byte offset " + std::to_string(offset));
    }

private:
    const std::string& b_;
    std::size_t pos_ = 2;
};

} // namespace

Real quantize_8bit(Real v) { return static_cast<Real>(to_byte(v)) / 255; }

FeatureMap decode_pnm(const std::string& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        HeaderReader::fail("unsupported magic (expected P5 or P6)", 0);
    }
    const std::size_t channels = bytes[1] == '5' ? 1 : 3;
    HeaderReader r(bytes);
    const std::size_t width = r.number("width");
    const std::size_t height = r.number("height");
    const std::size_t maxval_offset = r.pos();
    const std::size_t maxval = r.number("max value");
    if (maxval != 255) {
        HeaderReader::fail("unsupported format: max value " + std::to_string(maxval) + " (only 255 is supported)",
                           maxval_offset);
    }
    if (width == 0 || height == 0) HeaderReader::fail("zero image dimension", maxval_offset);
    r.single_whitespace();
    const std::size_t start = r.pos();
    const std::size_t need = width * height * channels;
    if (bytes.size() - start < need) {
        HeaderReader::fail("truncated payload: " + std::to_string(bytes.size() - start) + " of " +
                               std::to_string(need) + " bytes present",
                           bytes.size());
    }
    FeatureMap img(Shape{1, channels, height, width});
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            for (std::size_t c = 0; c < channels; ++c) {
                const auto byte = static_cast<unsigned char>(bytes[start + (y * width + x) * channels + c]);
                img.at(0, c, y, x) = static_cast<Real>(byte) / 255;
            }
        }
    }
    return img;
}

std::string encode_pnm(const FeatureMap& image) {
    const Shape& s = image.shape();
    if (s.batch != 1 || (s.channels != 1 && s.channels != 3)) {
        throw ContractError("write_image: expected batch 1 with 1 or 3 channels, got " + to_string(s));
    }
    std::string out = std::string(s.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(s.width) + " " +
                      std::to_string(s.height) + "\n255\n";
    const std::size_t start = out.size();
    out.resize(start + s.numel());
    for (std::size_t y = 0; y < s.height; ++y) {
        for (std::size_t x = 0; x < s.width; ++x) {
            for (std::size_t c = 0; c < s.channels; ++c) {
                out[start + (y * s.width + x) * s.channels + c] = static_cast<char>(to_byte(image.at(0, c, y, x)));
            }
        }
    }
    return out;
}

FeatureMap read_image(const std::filesystem::path& path) {
    try {
        return decode_pnm(read_text_file(path));
    } catch (const ImageFormatError& e) {
        throw ImageFormatError(path.string() + ": " + e.what());
    }
}

void write_image(const std::filesystem::path& path, const FeatureMap& image) {
    write_text_file(path, encode_pnm(image));
}

} // namespace pdeblur::io
