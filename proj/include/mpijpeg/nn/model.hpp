#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "mpijpeg/jpeg.hpp"
#include "mpijpeg/metrics.hpp"
#include "mpijpeg/nn/checkpoint.hpp"
#include "mpijpeg/nn/nets.hpp"
#include "mpijpeg/nn/perturb.hpp"

namespace mpijpeg::nn {

/// Restoration network plus the plane depths it was trained with.
struct Decoder {
    Restorer restorer{nullptr};
    std::vector<double> depths;

    /// Restores an H x W x 3 image (H, W multiples of 8) into an MPI carrying `depths`.
    MpiStack restore(const Image& embedding);
};

/// Embedding and restoration networks for inference.
struct Codec {
    Embedder embedder{nullptr};
    Decoder decoder;

    /// Embedding image in [0,1] before any 8-bit quantization.
    Image embed(const MpiStack& mpi, const Image& reference);
};

/// Loads the restorer from a full or decoder-only checkpoint.
Decoder load_decoder(const std::filesystem::path& path);
/// Loads both networks from a full checkpoint.
Codec load_codec(const std::filesystem::path& path);
/// Writes a decoder-only checkpoint.
void save_decoder(const std::filesystem::path& path, const Decoder& decoder);

/// Perceptual weights: a checkpoint with tensors named "perceptual.features.<i>.<weight|bias>".
void save_perceptual_weights(const std::filesystem::path& path, const Perceptual& net);
void load_perceptual_weights(const std::filesystem::path& path, Perceptual& net);

enum class CodecMode {
    kBitExact,   // jpeg::encode then jpeg::decode
    kSimulated,  // jpeg_simulate, rounded to 8 bits
    kNone,       // embedding quantized to 8 bits, no compression
};

/// What happens to the embedding image between sender and receiver.
struct Channel {
    CodecMode mode = CodecMode::kBitExact;
    jpeg::JpegConfig jpeg;
    ColorJitterParams jitter;  // applied after compression
};

/// Passes an embedding image through `channel`; the result lies on the 8-bit grid.
Image transmit(const Image& embedding, const Channel& channel);

/// SceneModel over a Codec: embed() returns the received image, restore() runs the decoder.
class TorchSceneModel : public metrics::SceneModel {
public:
    TorchSceneModel(Codec codec, Channel channel);
    Image embed(const MpiStack& mpi, const Image& reference) override;
    MpiStack restore(const Image& embedding) override;

private:
    Codec codec_;
    Channel channel_;
};

/// Render scores when the received image is cropped to `crop` before restoration: the restored MPI
/// is compared with the same crop of the ground truth, rendered with the shifted camera.
metrics::QualityScores cropped_render_scores(Decoder& decoder, const Image& received, const Rect& crop,
                                             const MpiStack& truth, const CameraModel& cam,
                                             const std::vector<RelativePose>& poses = metrics::evaluation_poses());

struct RobustnessScores {
    metrics::QualityScores clean;      // bit-exact codec, full image
    metrics::QualityScores perturbed;  // bit-exact codec, then jitter and crop
    ColorJitterParams jitter;
    Rect crop;
};

/// Render scores of one scene with and without a random edit. Every enabled jitter component is
/// drawn from its full range (no skipping); the crop is drawn by sample_crop.
RobustnessScores robustness_scores(Codec& codec, const MpiStack& mpi, const Image& reference, const CameraModel& cam,
                                   const jpeg::JpegConfig& jpeg, const PerturbConfig& perturb, Rng& rng,
                                   const std::vector<RelativePose>& poses = metrics::evaluation_poses());

}  // namespace mpijpeg::nn
