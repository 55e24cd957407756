#pragma once

/// @file
/// Self-contained model checkpoints.
///
/// Layout (all integers little-endian):
///
///     8 bytes   magic "CGCKPT\0\0"
///     u32       format version
///     u64       header length
///     ...       JSON header: kind, meta, array names and shapes
///     f64[]     array payloads in header order
///     u32       CRC-32 of every preceding byte

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "compgen/csv.hpp"
#include "compgen/error.hpp"
#include "compgen/features.hpp"
#include "compgen/nets.hpp"
#include "compgen/tensor.hpp"

namespace compgen {

inline constexpr std::uint32_t checkpoint_version = 1;
inline constexpr char checkpoint_magic[8] = {'C', 'G', 'C', 'K', 'P', 'T', '\0', '\0'};

struct ModelCheckpoint {
    std::uint32_t version = checkpoint_version;
    std::string model_kind;
    /// Specs, schema, normalization stats, training config and seeds.
    nlohmann::json meta = nlohmann::json::object();
    std::vector<std::pair<std::string, Tensor>> arrays;

    const Tensor& array(const std::string& name) const {
        for (const auto& [n, t] : arrays) {
            if (n == name) {
                return t;
            }
        }
        fail(ErrorCode::InvalidArgument, "checkpoint has no array '" + name + "'");
    }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

inline std::uint64_t get_le(const std::string& in, std::size_t pos, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + static_cast<std::size_t>(i)])) << (8 * i);
    }
    return v;
}

inline std::uint32_t crc32_of(const char* data, std::size_t size) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    while (size > 0) {
        const std::size_t chunk = std::min<std::size_t>(size, 1u << 30);
        crc = ::crc32(crc, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(chunk));
        data += chunk;
        size -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

} // namespace detail

inline std::string encode_checkpoint(const ModelCheckpoint& ckpt) {
    nlohmann::json header;
    header["model_kind"] = ckpt.model_kind;
    header["meta"] = ckpt.meta;
    header["arrays"] = nlohmann::json::array();
    for (const auto& [name, t] : ckpt.arrays) {
        header["arrays"].push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
    }
    const std::string header_text = header.dump();

    std::string out(checkpoint_magic, sizeof(checkpoint_magic));
    detail::put_u32(out, ckpt.version);
    detail::put_u64(out, header_text.size());
    out += header_text;
    for (const auto& entry : ckpt.arrays) {
        for (double v : entry.second.values()) {
            detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    detail::put_u32(out, detail::crc32_of(out.data(), out.size()));
    return out;
}

inline ModelCheckpoint decode_checkpoint(const std::string& bytes) {
    constexpr std::size_t fixed = sizeof(checkpoint_magic) + 4 + 8;
    require(bytes.size() >= fixed + 4, ErrorCode::ChecksumMismatch, "checkpoint is truncated");
    const std::size_t body = bytes.size() - 4;
    const auto stored_crc = static_cast<std::uint32_t>(detail::get_le(bytes, body, 4));
    require(detail::crc32_of(bytes.data(), body) == stored_crc, ErrorCode::ChecksumMismatch,
            "checkpoint CRC does not match (corrupt or truncated file)");
    require(std::memcmp(bytes.data(), checkpoint_magic, sizeof(checkpoint_magic)) == 0, ErrorCode::IoError,
            "not a compgen checkpoint");

    ModelCheckpoint ckpt;
    ckpt.version = static_cast<std::uint32_t>(detail::get_le(bytes, sizeof(checkpoint_magic), 4));
    require(ckpt.version == checkpoint_version, ErrorCode::VersionMismatch,
            "checkpoint version " + std::to_string(ckpt.version) + " is not supported (expected " +
                std::to_string(checkpoint_version) + ")");
    const std::uint64_t header_len = detail::get_le(bytes, sizeof(checkpoint_magic) + 4, 8);
    require(fixed + header_len <= body, ErrorCode::ChecksumMismatch, "header length exceeds file size");
    const auto header = nlohmann::json::parse(bytes.substr(fixed, header_len));
    ckpt.model_kind = header.at("model_kind").get<std::string>();
    ckpt.meta = header.at("meta");

    std::size_t pos = fixed + header_len;
    for (const auto& a : header.at("arrays")) {
        const auto rows = a.at("rows").get<std::size_t>();
        const auto cols = a.at("cols").get<std::size_t>();
        require(pos + rows * cols * 8 <= body, ErrorCode::ChecksumMismatch, "array payload truncated");
        Tensor t(rows, cols);
        for (double& v : t.values()) {
            v = std::bit_cast<double>(detail::get_le(bytes, pos, 8));
            pos += 8;
        }
        ckpt.arrays.emplace_back(a.at("name").get<std::string>(), std::move(t));
    }
    require(pos == body, ErrorCode::ChecksumMismatch, "trailing bytes after array payloads");
    return ckpt;
}

inline void save_checkpoint(const std::string& path, const ModelCheckpoint& ckpt) {
    csv::write_text(path, encode_checkpoint(ckpt));
}

inline ModelCheckpoint load_checkpoint(const std::string& path) {
    return decode_checkpoint(csv::read_text(path));
}

// --- helpers for the records stored in checkpoint meta -------------------

inline nlohmann::json to_json(const FeatureSchema& s) {
    return {{"element_vocab", s.element_vocab},
            {"descriptor_names", s.descriptor_names},
            {"representation", to_string(s.representation)}};
}

inline FeatureSchema schema_from_json(const nlohmann::json& j) {
    FeatureSchema s;
    s.element_vocab = j.at("element_vocab").get<std::vector<std::string>>();
    s.descriptor_names = j.at("descriptor_names").get<std::vector<std::string>>();
    s.representation = representation_from_string(j.at("representation").get<std::string>());
    return s;
}

/// Stats are stored as arrays of exact decimal strings so the JSON header
/// never loses precision.
inline nlohmann::json to_json(const NormalizationStats& s) {
    auto exact = [](const std::vector<double>& v) {
        std::vector<std::string> out;
        for (double d : v) {
            out.push_back(csv::format_double(d));
        }
        return out;
    };
    return {{"min", exact(s.min)}, {"max", exact(s.max)}};
}

inline NormalizationStats stats_from_json(const nlohmann::json& j) {
    auto parse = [](const nlohmann::json& arr) {
        std::vector<double> out;
        for (const auto& s : arr) {
            auto v = csv::parse_double(s.get<std::string>());
            require(v.has_value(), ErrorCode::IoError, "malformed normalization value");
            out.push_back(*v);
        }
        return out;
    };
    NormalizationStats s{parse(j.at("min")), parse(j.at("max"))};
    require(s.min.size() == s.max.size(), ErrorCode::DimensionMismatch, "stats min/max lengths differ");
    return s;
}

inline void append_mlp(ModelCheckpoint& ckpt, const std::string& prefix, const MlpParams& p) {
    for (std::size_t i = 0; i < p.layers(); ++i) {
        ckpt.arrays.emplace_back(prefix + ".w" + std::to_string(i), p.weights[i]);
        ckpt.arrays.emplace_back(prefix + ".b" + std::to_string(i), p.biases[i]);
    }
}

inline MlpParams extract_mlp(const ModelCheckpoint& ckpt, const std::string& prefix, const MlpSpec& spec) {
    MlpParams p;
    const std::size_t layers = spec.widths().size() - 1;
    for (std::size_t i = 0; i < layers; ++i) {
        p.weights.push_back(ckpt.array(prefix + ".w" + std::to_string(i)));
        p.biases.push_back(ckpt.array(prefix + ".b" + std::to_string(i)));
    }
    return p;
}

} // namespace compgen
