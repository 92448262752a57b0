#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include <torch/torch.h>

#include <json.hpp>

namespace mpijpeg::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Unreadable, truncated, corrupted or incompatible checkpoint.
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Contents of a checkpoint file: a JSON header plus named tensors and opaque byte blobs.
///
/// File layout: "MPIJCKPT", u32 version, u64 header length, header JSON, payload, u64 FNV-1a of
/// everything before it. Tensors are stored contiguous in native byte order.
struct CheckpointData {
    nlohmann::json meta = nlohmann::json::object();
    std::map<std::string, torch::Tensor> tensors;
    std::map<std::string, std::string> blobs;
};

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointData& data);
/// Reads and fully validates a file; throws CheckpointError without returning partial data.
CheckpointData read_checkpoint_file(const std::filesystem::path& path);

/// Module parameters and buffers under `prefix.` as CPU tensors.
void collect_tensors(const torch::nn::Module& module, const std::string& prefix, CheckpointData& data);
/// Throws CheckpointError unless every parameter and buffer of `module` is present with the same
/// shape and dtype.
void check_tensors(const torch::nn::Module& module, const std::string& prefix, const CheckpointData& data);
/// Copies stored values into `module`. Call check_tensors first on every module being restored.
void apply_tensors(torch::nn::Module& module, const std::string& prefix, const CheckpointData& data);

}  // namespace mpijpeg::nn
