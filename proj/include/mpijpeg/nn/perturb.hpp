#pragma once

#include <torch/torch.h>

#include "mpijpeg/image.hpp"
#include "mpijpeg/mpi.hpp"

namespace mpijpeg::nn {

struct PerturbConfig {
    double brightness_delta = 0.1;   // additive, +-range
    double contrast_range = 0.15;    // factor in 1 +- range
    double saturation_range = 0.15;  // factor in 1 +- range
    double hue_delta_deg = 10.0;     // chroma rotation, +-range
    double crop_fraction = 0.9;      // minimum retained fraction per side
    bool brightness = true;
    bool contrast = true;
    bool saturation = true;
    bool hue = true;
    bool crop = true;
    double apply_probability = 0.5;  // per perturbation, during training

    void validate() const;
};

/// Concrete jitter values. The defaults are the identity.
struct ColorJitterParams {
    double brightness = 0.0;
    double contrast = 1.0;
    double saturation = 1.0;
    double hue_deg = 0.0;

    bool is_identity() const { return brightness == 0.0 && contrast == 1.0 && saturation == 1.0 && hue_deg == 0.0; }
};

/// Draws every enabled parameter uniformly from its range; each is kept only with `probability`.
ColorJitterParams sample_color_jitter(const PerturbConfig& cfg, Rng& rng, double probability = 1.0);

/// Brightness, contrast (about the per-image mean), saturation (toward per-pixel luma), hue (rotation
/// of the YUV chroma plane), in that order, then a clamp to [0,1]. Input is (B x) 3 x H x W; the
/// contrast mean is taken per batch item.
torch::Tensor color_jitter(const torch::Tensor& image, const ColorJitterParams& params);

/// Picks a crop of at least crop_fraction per side whose dimensions are multiples of 8 and >= 64.
Rect sample_crop(int width, int height, const PerturbConfig& cfg, Rng& rng);

/// Tensor crop over the last two dimensions.
torch::Tensor crop_tensor(const torch::Tensor& t, const Rect& rect);

/// Camera of a cropped view: principal point shifted by the crop offset.
CameraModel crop_camera(const CameraModel& cam, const Rect& rect);

struct CropResult {
    Image image;
    Rect rect;
};

CropResult random_crop(const Image& image, const PerturbConfig& cfg, Rng& rng);

}  // namespace mpijpeg::nn
