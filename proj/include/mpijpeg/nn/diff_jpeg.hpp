#pragma once

#include <torch/torch.h>

#include "mpijpeg/jpeg.hpp"

namespace mpijpeg::nn {

/// round() forward, identity backward.
torch::Tensor round_ste(const torch::Tensor& x);

/// round(x * 255) / 255 forward, identity backward.
torch::Tensor quantize_8bit(const torch::Tensor& x);

enum class Rounding {
    kStraightThrough,  // forward rounds, backward passes gradients unchanged
    kNone,             // every rounding site removed (the smooth surrogate the STE gradient follows)
};

/// Differentiable JPEG round trip of a (B x) 3 x H x W image in [0,1]. The forward pass follows
/// the arithmetic of jpeg::decode(jpeg::encode(x, cfg)) except the final conversion to integers.
/// Computation runs in double precision; the result has the input's dtype.
torch::Tensor jpeg_simulate(const torch::Tensor& image, const jpeg::JpegConfig& cfg = {},
                            Rounding rounding = Rounding::kStraightThrough);

}  // namespace mpijpeg::nn
