// SPDX-License-Identifier: Apache-2.0
//
// Container shared by parameter files and checkpoints: one line of JSON
// (terminated by '\n') followed by a flat little-endian f64 blob. The header
// always carries "count", the number of f64 values that follow.

#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace pdeblur {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BlobFile {
    nlohmann::json header;
    std::vector<double> values;
};

std::string encode_blob(const nlohmann::json& header, std::span<const double> values);
BlobFile decode_blob(const std::string& bytes);

/// Writes to a sibling temp file and renames it over `path`.
void write_blob_file(const std::filesystem::path& path, const nlohmann::json& header,
                     std::span<const double> values);
BlobFile read_blob_file(const std::filesystem::path& path);

/// Atomic text write (temp + rename).
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

/// Throws FormatError unless header["format"] == format and header["version"] == version.
void require_format(const nlohmann::json& header, const std::string& format, int version);

} // namespace pdeblur
