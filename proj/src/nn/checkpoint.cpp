#include "mpijpeg/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace mpijpeg::nn {

namespace {

constexpr char kMagic[8] = {'M', 'P', 'I', 'J', 'C', 'K', 'P', 'T'};

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 1099511628211ULL;
    }
    return h;
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
    std::uint8_t bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t offset) {
    T value;
    std::memcpy(&value, in.data() + offset, sizeof(T));
    return value;
}

std::string dtype_name(torch::Dtype t) {
    switch (t) {
        case torch::kFloat32: return "f32";
        case torch::kFloat64: return "f64";
        case torch::kInt64: return "i64";
        case torch::kInt32: return "i32";
        case torch::kUInt8: return "u8";
        default: throw CheckpointError("checkpoint: unsupported tensor dtype");
    }
}

torch::Dtype dtype_from_name(const std::string& s) {
    if (s == "f32") return torch::kFloat32;
    if (s == "f64") return torch::kFloat64;
    if (s == "i64") return torch::kInt64;
    if (s == "i32") return torch::kInt32;
    if (s == "u8") return torch::kUInt8;
    throw CheckpointError("checkpoint: unknown dtype '" + s + "'");
}

std::map<std::string, torch::Tensor> module_tensors(const torch::nn::Module& module, const std::string& prefix) {
    std::map<std::string, torch::Tensor> out;
    for (const auto& p : module.named_parameters()) out[prefix + "." + p.key()] = p.value();
    for (const auto& b : module.named_buffers()) out[prefix + "." + b.key()] = b.value();
    return out;
}

}  // namespace

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointData& data) {
    nlohmann::json header;
    header["meta"] = data.meta;
    header["tensors"] = nlohmann::json::object();
    header["blobs"] = nlohmann::json::object();

    std::vector<std::uint8_t> payload;
    for (const auto& [name, tensor] : data.tensors) {
        auto t = tensor.detach().to(torch::kCPU).contiguous();
        const auto bytes = static_cast<std::size_t>(t.numel()) * t.element_size();
        header["tensors"][name] = {{"dtype", dtype_name(t.scalar_type())},
                                   {"shape", t.sizes().vec()},
                                   {"offset", payload.size()},
                                   {"bytes", bytes}};
        const auto* src = static_cast<const std::uint8_t*>(t.data_ptr());
        payload.insert(payload.end(), src, src + bytes);
    }
    for (const auto& [name, blob] : data.blobs) {
        header["blobs"][name] = {{"offset", payload.size()}, {"bytes", blob.size()}};
        payload.insert(payload.end(), blob.begin(), blob.end());
    }
    header["payload_bytes"] = payload.size();

    const std::string header_text = header.dump();
    std::vector<std::uint8_t> out(kMagic, kMagic + sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, header_text.size());
    out.insert(out.end(), header_text.begin(), header_text.end());
    out.insert(out.end(), payload.begin(), payload.end());
    put<std::uint64_t>(out, fnv1a(out.data(), out.size()));

    // Write to a sibling temp file and rename so readers never observe a half-written checkpoint.
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw CheckpointError("checkpoint: cannot write " + tmp.string());
        f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
        if (!f) throw CheckpointError("checkpoint: write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw CheckpointError("checkpoint: cannot move into place: " + ec.message());
}

CheckpointData read_checkpoint_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("checkpoint: cannot open " + path.string());
    const std::vector<std::uint8_t> in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    constexpr std::size_t fixed = sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
    if (in.size() < fixed + sizeof(std::uint64_t) || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0) {
        throw CheckpointError("checkpoint: " + path.string() + " is not a checkpoint file or is truncated");
    }
    const auto version = get<std::uint32_t>(in, sizeof(kMagic));
    if (version != kCheckpointVersion) {
        throw CheckpointError("checkpoint: version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    }
    const std::size_t body = in.size() - sizeof(std::uint64_t);
    if (get<std::uint64_t>(in, body) != fnv1a(in.data(), body)) {
        throw CheckpointError("checkpoint: checksum mismatch in " + path.string() + " (corrupt or truncated)");
    }
    const auto header_len = get<std::uint64_t>(in, sizeof(kMagic) + sizeof(std::uint32_t));
    if (header_len > body - fixed) throw CheckpointError("checkpoint: header length exceeds file size");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(in.begin() + fixed, in.begin() + static_cast<std::ptrdiff_t>(fixed + header_len));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what());
    }

    CheckpointData data;
    const std::size_t payload_start = fixed + header_len;
    try {
        const auto payload_bytes = header.at("payload_bytes").get<std::size_t>();
        if (payload_start + payload_bytes != body) throw CheckpointError("checkpoint: payload size mismatch");
        auto check_range = [&](std::size_t offset, std::size_t bytes) {
            if (offset > payload_bytes || bytes > payload_bytes - offset) {
                throw CheckpointError("checkpoint: entry outside payload");
            }
        };
        data.meta = header.at("meta");
        for (const auto& [name, entry] : header.at("tensors").items()) {
            const auto dtype = dtype_from_name(entry.at("dtype").get<std::string>());
            const auto shape = entry.at("shape").get<std::vector<int64_t>>();
            const auto offset = entry.at("offset").get<std::size_t>();
            const auto bytes = entry.at("bytes").get<std::size_t>();
            check_range(offset, bytes);
            auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
            if (static_cast<std::size_t>(t.numel()) * t.element_size() != bytes) {
                throw CheckpointError("checkpoint: tensor '" + name + "' size does not match its shape");
            }
            std::memcpy(t.data_ptr(), in.data() + payload_start + offset, bytes);
            data.tensors.emplace(name, std::move(t));
        }
        for (const auto& [name, entry] : header.at("blobs").items()) {
            const auto offset = entry.at("offset").get<std::size_t>();
            const auto bytes = entry.at("bytes").get<std::size_t>();
            check_range(offset, bytes);
            const auto* p = reinterpret_cast<const char*>(in.data() + payload_start + offset);
            data.blobs.emplace(name, std::string(p, bytes));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what());
    }
    return data;
}

void collect_tensors(const torch::nn::Module& module, const std::string& prefix, CheckpointData& data) {
    for (const auto& [name, t] : module_tensors(module, prefix)) data.tensors[name] = t.detach().clone();
}

void check_tensors(const torch::nn::Module& module, const std::string& prefix, const CheckpointData& data) {
    for (const auto& [name, t] : module_tensors(module, prefix)) {
        auto it = data.tensors.find(name);
        if (it == data.tensors.end()) throw CheckpointError("checkpoint: missing tensor '" + name + "'");
        if (it->second.sizes() != t.sizes() || it->second.scalar_type() != t.scalar_type()) {
            throw CheckpointError("checkpoint: tensor '" + name + "' does not match the architecture");
        }
    }
}

void apply_tensors(torch::nn::Module& module, const std::string& prefix, const CheckpointData& data) {
    torch::NoGradGuard guard;
    for (auto& [name, t] : module_tensors(module, prefix)) t.copy_(data.tensors.at(name));
}

}  // namespace mpijpeg::nn
