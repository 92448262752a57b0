#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <torch/torch.h>

#include <json.hpp>

#include "mpijpeg/jpeg.hpp"
#include "mpijpeg/mpi.hpp"
#include "mpijpeg/nn/losses.hpp"
#include "mpijpeg/nn/model.hpp"
#include "mpijpeg/nn/nets.hpp"
#include "mpijpeg/nn/perturb.hpp"
#include "mpijpeg/synthetic.hpp"

namespace mpijpeg::nn {

struct TrainConfig {
    int width = 128;
    int height = 72;
    int batch_size = 2;
    std::int64_t steps = 3000;
    double lr_g = 1e-4;
    double lr_d = 1e-4;
    std::string lr_schedule = "constant";  // or "cosine": decays to 0 at `steps`
    std::uint64_t seed = 1;
    LossWeights weights;
    PerturbConfig perturb;
    bool perturbations = true;  // false disables jitter and crop during training
    jpeg::JpegConfig jpeg;
    PoseSamplerConfig poses;
    EmbedderOptions embedder;
    RestorerOptions restorer;
    DiscriminatorOptions discriminator;
    PerceptualOptions perceptual{16};
    std::string perceptual_weights;  // empty: fixed seeded initialization
    std::string dataset_root;        // empty: synthetic scenes
    int synthetic_scenes = 4;
    std::int64_t checkpoint_every = 0;  // 0: only at the end
    std::string checkpoint_path;
    std::string metrics_path;
    std::int64_t log_every = 50;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Multiplier on both learning rates before update `step` (0-based).
double lr_factor(const TrainConfig& config, std::int64_t step);
/// Unknown keys are rejected; missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct SceneRecord {
    std::string id;
    std::filesystem::path manifest;
    std::filesystem::path reference;
};

struct DatasetScan {
    std::vector<SceneRecord> records;
    std::vector<std::string> warnings;
};

/// Scans the immediate subdirectories of `root` (sorted by name) for manifest.json + reference.png.
/// Scenes that fail validation are skipped with a warning. Throws std::runtime_error when no scene
/// is usable.
DatasetScan ingest_dataset(const std::filesystem::path& root);

/// One training scene held as tensors.
struct TrainScene {
    std::string id;
    torch::Tensor mpi;        // P x 4 x H x W
    torch::Tensor reference;  // 3 x H x W
    std::vector<double> depths;
    CameraModel camera;
};

TrainScene load_scene(const SceneRecord& record);
TrainScene scene_from_synthetic(const SyntheticScene& scene, std::string id);

/// Patch of `patch_w` x `patch_h` (multiples of 8) at an offset on the 8-pixel grid.
Rect sample_patch(int width, int height, int patch_w, int patch_h, Rng& rng);

struct Batch {
    torch::Tensor mpi;        // B x P x 4 x H x W
    torch::Tensor reference;  // B x 3 x H x W
    std::vector<CameraModel> cameras;
};

/// Loss terms of one step. Terms with zero weight are not evaluated and read 0.
struct LossRecord {
    std::int64_t step = 0;
    double total_g = 0, reg = 0, perceptual = 0, freq = 0, restore = 0, render = 0;
    double render_mse = 0, render_perceptual = 0, adversarial_g = 0, adversarial_d = 0;
    double embed_psnr = 0;   // embedding vs reference
    double render_psnr = 0;  // identity-pose composite of restored vs ground truth (after any crop)
};

/// A loss or gradient turned NaN/inf; what() lists every term.
class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const LossRecord& r);

class Trainer {
public:
    /// Every scene must use the same plane depths; they become the decoder's depths.
    Trainer(TrainConfig config, std::vector<TrainScene> scenes);

    Batch sample_batch();
    /// One discriminator update then one generator update.
    LossRecord train_step(const Batch& batch);
    LossRecord step() { return train_step(sample_batch()); }

    std::int64_t steps_done() const { return step_; }
    const TrainConfig& config() const { return config_; }
    const std::vector<TrainScene>& scenes() const { return scenes_; }

    void save(const std::filesystem::path& path) const;
    /// Restores weights, optimizer state, step and RNG state; the architecture must match.
    void load(const std::filesystem::path& path);
    Codec codec() const;

    Embedder embedder{nullptr};
    Restorer restorer{nullptr};
    Discriminator discriminator{nullptr};
    Perceptual perceptual{nullptr};

private:
    std::vector<torch::Tensor> features(const torch::Tensor& x);

    TrainConfig config_;
    std::vector<TrainScene> scenes_;
    std::unique_ptr<torch::optim::Adam> opt_g_;
    std::unique_ptr<torch::optim::Adam> opt_d_;
    std::vector<double> depths_;
    Rng rng_;
    std::int64_t step_ = 0;
};

/// Runs config.steps steps, writing the metrics CSV and checkpoints named in the config.
/// `progress` receives every log_every-th record.
void run_training(Trainer& trainer, const std::function<void(const LossRecord&)>& progress = {});

/// Scenes named by the config: the dataset when dataset_root is set, else synthetic scenes with
/// seeds seed+1 ... seed+synthetic_scenes at the training resolution.
std::vector<TrainScene> scenes_for(const TrainConfig& config, std::vector<std::string>* warnings = nullptr);

}  // namespace mpijpeg::nn
