#pragma once

#include <torch/torch.h>

#include "mpijpeg/image.hpp"
#include "mpijpeg/mpi.hpp"

namespace mpijpeg::nn {

/// H x W x C image -> C x H x W tensor of the requested dtype.
torch::Tensor to_tensor(const Image& image, torch::Dtype dtype = torch::kFloat32);
/// C x H x W (or 1 x C x H x W) tensor -> H x W x C image.
Image to_image(const torch::Tensor& tensor);

/// MPI -> P x 4 x H x W tensor.
torch::Tensor mpi_to_tensor(const MpiStack& mpi, torch::Dtype dtype = torch::kFloat32);
/// P x 4 x H x W tensor (values clamped to [0,1]) -> MPI with the given depths.
MpiStack tensor_to_mpi(const torch::Tensor& planes, const std::vector<double>& depths);

}  // namespace mpijpeg::nn
