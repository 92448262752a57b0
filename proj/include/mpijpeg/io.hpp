#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpijpeg/image.hpp"
#include "mpijpeg/mpi.hpp"

namespace mpijpeg::io {

/// File missing, unreadable or not in the expected format.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Manifest parsed but violates its schema or the MPI invariants.
class ManifestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

/// 8-bit PNG. Gray/palette inputs are expanded to RGB(A); 16-bit inputs are reduced to 8 bits.
Image read_png(const std::filesystem::path& path);
/// Writes 1, 3 or 4 channel images as 8-bit PNG (values clamped and rounded).
void write_png(const std::filesystem::path& path, const Image& image);

/// On-disk MPI description shared by the CLI and the viewer.
struct MpiManifest {
    int width = 0;
    int height = 0;
    int num_planes = kNumPlanes;
    std::vector<double> depths;
    CameraModel intrinsics;
    std::vector<std::string> layers;
    std::string translation_units = "scene";
};

MpiManifest parse_manifest(const std::string& json_text);
std::string manifest_to_json(const MpiManifest& manifest);
MpiManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const MpiManifest& manifest);

struct LoadedMpi {
    MpiManifest manifest;
    MpiStack stack;
};

/// Reads the manifest and every layer, validating dimensions and MPI invariants.
LoadedMpi load_mpi(const std::filesystem::path& manifest_path);

/// Writes layer_XX.png files plus manifest.json into `dir` (created if missing).
MpiManifest save_mpi(const std::filesystem::path& dir, const MpiStack& mpi, const CameraModel& cam);

}  // namespace mpijpeg::io
