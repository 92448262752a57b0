#pragma once

#include <vector>

#include <torch/torch.h>

#include "mpijpeg/mpi.hpp"

namespace mpijpeg::nn {

/// Back-to-front over-compositing of a (B x) P x 4 x H x W stack into (B x) 3 x H x W.
torch::Tensor composite(const torch::Tensor& mpi);

/// Bilinear inverse warp of P x C x H x W planes, plane i at depths[i], into the target view.
/// Differentiable with respect to the plane values; out-of-bounds samples are zero.
torch::Tensor warp_planes(const torch::Tensor& planes, const std::vector<double>& depths, const RelativePose& pose,
                          const CameraModel& cam);

/// Renders each batch item of a B x P x 4 x H x W stack at its own pose and camera.
torch::Tensor render(const torch::Tensor& mpi, const std::vector<double>& depths,
                     const std::vector<RelativePose>& poses, const std::vector<CameraModel>& cams);

}  // namespace mpijpeg::nn
