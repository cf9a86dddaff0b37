// SPDX-License-Identifier: Apache-2.0

#include "pdeblur/serialization.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pdeblur {

static_assert(std::endian::native == std::endian::little, "blob format assumes a little-endian host");

std::string encode_blob(const nlohmann::json& header, std::span<const double> values) {
    nlohmann::json h = header;
    h["count"] = values.size();
    std::string out = h.dump();
    out.push_back('\n');
    const std::size_t start = out.size();
    out.resize(start + values.size() * sizeof(double));
    if (!values.empty()) std::memcpy(out.data() + start, values.data(), values.size() * sizeof(double));
    return out;
}

BlobFile decode_blob(const std::string& bytes) {
    const auto newline = bytes.find('\n');
    if (newline == std::string::npos) throw FormatError("blob: missing header terminator");
    BlobFile file;
    try {
        file.header = nlohmann::json::parse(bytes.substr(0, newline));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("blob: malformed JSON header: ") + e.what());
    }
    if (!file.header.contains("count") || !file.header["count"].is_number_unsigned()) {
        throw FormatError("blob: header lacks an unsigned 'count' field");
    }
    const auto count = file.header["count"].get<std::size_t>();
    const std::size_t payload = bytes.size() - newline - 1;
    if (payload != count * sizeof(double)) {
        throw FormatError("blob: payload is " + std::to_string(payload) + " bytes at offset " +
                          std::to_string(newline + 1) + ", expected " + std::to_string(count * sizeof(double)));
    }
    file.values.resize(count);
    if (count) std::memcpy(file.values.data(), bytes.data() + newline + 1, payload);
    return file;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        os.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!os) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_blob_file(const std::filesystem::path& path, const nlohmann::json& header,
                     std::span<const double> values) {
    write_text_file(path, encode_blob(header, values));
}

BlobFile read_blob_file(const std::filesystem::path& path) {
    try {
        return decode_blob(read_text_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void require_format(const nlohmann::json& header, const std::string& format, int version) {
    if (header.value("format", std::string{}) != format) {
        throw FormatError("expected format '" + format + "', found '" + header.value("format", std::string{}) + "'");
    }
    const int found = header.value("version", -1);
    if (found != version) {
        throw FormatError("version mismatch for '" + format + "': file has " + std::to_string(found) +
                          ", this build reads " + std::to_string(version));
    }
}

} // namespace pdeblur
