// SPDX-License-Identifier: Apache-2.0
#include "lumeneq/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "lumeneq/error.hpp"
#include "json_io.hpp"

namespace lumeneq {

namespace {

static_assert(std::endian::native == std::endian::little, "model files are written in host order");

constexpr std::size_t kMagicSize = 8;
constexpr std::size_t kHeaderSize = kMagicSize + 8;
constexpr std::size_t kChecksumSize = 8;

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t checksum(const unsigned char* data, std::size_t n) {
    return fnv1a64(std::string_view(reinterpret_cast<const char*>(data), n));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::size_t tensor_bytes(const nn::ModelArch& arch) {
    return static_cast<std::size_t>(nn::ModelParams<float>::identity(arch).parameter_count(false)) * sizeof(float);
}

struct Header {
    nlohmann::json meta;
    nn::ModelArch arch;
    std::size_t meta_size;
};

/// Parses the metadata block; nullopt when it is unreadable.
std::optional<Header> read_header(const std::vector<unsigned char>& bytes) {
    const std::uint64_t meta_size = get_u64(bytes.data() + kMagicSize);
    if (meta_size > bytes.size() - kHeaderSize) return std::nullopt;
    try {
        const auto* begin = reinterpret_cast<const char*>(bytes.data() + kHeaderSize);
        Header h{nlohmann::json::parse(begin, begin + meta_size), {}, static_cast<std::size_t>(meta_size)};
        h.arch = detail::arch_from_json(h.meta.at("architecture"));
        h.arch.validate();
        return h;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

}  // namespace

std::vector<unsigned char> serialize_model(const TrainedModel& model) {
    model.params.check_shapes();
    const nn::ModelArch& arch = model.params.arch;
    nlohmann::json meta;
    meta["format"] = kModelMagic;
    meta["architecture"] = detail::to_json(arch);
    meta["architecture_hash"] = hex64(arch.hash());
    meta["channel_config_hash"] = hex64(model.channel_config_hash);
    meta["norm_mean"] = model.norm.mean;
    meta["norm_std"] = model.norm.std;
    meta["seed"] = model.seed;
    nlohmann::json layout = nlohmann::json::array();
    for (const auto& t : model.params.tensors()) {
        layout.push_back({{"name", t.name}, {"rows", t.tensor->rows()}, {"cols", t.tensor->cols()}});
    }
    meta["tensors"] = std::move(layout);
    const std::string text = meta.dump(2);

    std::vector<unsigned char> out(kModelMagic, kModelMagic + kMagicSize);
    put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& t : model.params.tensors()) {
        const auto* raw = reinterpret_cast<const unsigned char*>(t.tensor->data());
        out.insert(out.end(), raw, raw + t.tensor->size() * sizeof(float));
    }
    put_u64(out, checksum(out.data(), out.size()));
    return out;
}

TrainedModel deserialize_model(const std::vector<unsigned char>& bytes,
                               const std::optional<nn::ModelArch>& expected_arch) {
    if (bytes.size() >= kMagicSize && std::memcmp(bytes.data(), kModelMagic, 7) == 0 &&
        std::memcmp(bytes.data(), kModelMagic, kMagicSize) != 0) {
        throw VersionMismatchError("model file version '" +
                                   std::string(reinterpret_cast<const char*>(bytes.data()), kMagicSize) +
                                   "' is not supported (expected " + kModelMagic + ")");
    }
    if (bytes.size() < kMagicSize) {
        throw TruncatedFileError("model file is " + std::to_string(bytes.size()) + " bytes, shorter than its magic");
    }
    if (std::memcmp(bytes.data(), kModelMagic, kMagicSize) != 0) {
        throw ModelFileError("not a model file (bad magic)");
    }
    if (bytes.size() < kHeaderSize + kChecksumSize) {
        throw TruncatedFileError("model file ends inside its header");
    }

    const std::size_t body = bytes.size() - kChecksumSize;
    const bool intact = checksum(bytes.data(), body) == get_u64(bytes.data() + body);
    const std::optional<Header> header = read_header(bytes);
    if (!intact) {
        // A readable header whose implied size exceeds the file means the
        // file was cut short; anything else is corruption.
        if (header) {
            const std::size_t expected = kHeaderSize + header->meta_size + tensor_bytes(header->arch) + kChecksumSize;
            if (bytes.size() < expected) {
                throw TruncatedFileError("model file is " + std::to_string(bytes.size()) + " bytes, expected " +
                                         std::to_string(expected));
            }
        } else if (get_u64(bytes.data() + kMagicSize) > bytes.size() - kHeaderSize) {
            throw TruncatedFileError("model file ends inside its metadata block");
        }
        throw ChecksumError("model file checksum mismatch");
    }
    if (!header) {
        throw ModelFileError("model metadata is malformed");
    }

    const nn::ModelArch& arch = header->arch;
    const std::string stored_hash = header->meta.value("architecture_hash", "");
    if (stored_hash != hex64(arch.hash())) {
        throw ArchitectureMismatchError("architecture hash " + stored_hash + " does not match the described layers");
    }
    if (expected_arch && !(*expected_arch == arch)) {
        throw ArchitectureMismatchError("model architecture hash " + stored_hash + " differs from expected " +
                                        hex64(expected_arch->hash()));
    }
    const std::size_t expected = kHeaderSize + header->meta_size + tensor_bytes(arch) + kChecksumSize;
    if (bytes.size() != expected) {
        throw ModelFileError("model file size " + std::to_string(bytes.size()) + " does not match its architecture (" +
                             std::to_string(expected) + ")");
    }

    TrainedModel model;
    model.params = nn::ModelParams<float>::identity(arch);
    const unsigned char* cursor = bytes.data() + kHeaderSize + header->meta_size;
    for (auto& t : model.params.tensors()) {
        const std::size_t n = static_cast<std::size_t>(t.tensor->size()) * sizeof(float);
        std::memcpy(t.tensor->data(), cursor, n);
        cursor += n;
    }
    try {
        model.norm.mean = header->meta.at("norm_mean");
        model.norm.std = header->meta.at("norm_std");
        model.seed = header->meta.at("seed");
        model.channel_config_hash = std::stoull(header->meta.at("channel_config_hash").get<std::string>(), nullptr, 16);
    } catch (const std::exception& e) {
        throw ModelFileError(std::string("model metadata is incomplete: ") + e.what());
    }
    return model;
}

void save_model(const TrainedModel& model, const std::string& path) {
    const auto bytes = serialize_model(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

TrainedModel load_model(const std::string& path, const std::optional<nn::ModelArch>& expected_arch) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes, expected_arch);
}

}  // namespace lumeneq
