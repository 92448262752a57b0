#include "mpijpeg/nn/tensor.hpp"

#include <cstring>

namespace mpijpeg::nn {

torch::Tensor to_tensor(const Image& image, torch::Dtype dtype) {
    auto hwc = torch::from_blob(const_cast<float*>(image.data().data()),
                                {image.height(), image.width(), image.channels()}, torch::kFloat32);
    return hwc.permute({2, 0, 1}).to(dtype, /*non_blocking=*/false, /*copy=*/true).contiguous();
}

Image to_image(const torch::Tensor& tensor) {
    auto t = tensor.detach();
    if (t.dim() == 4) {
        if (t.size(0) != 1) throw ShapeError("to_image: batched tensor with batch > 1");
        t = t[0];
    }
    if (t.dim() != 3) throw ShapeError("to_image: expected C x H x W");
    t = t.permute({1, 2, 0}).to(torch::kFloat32).contiguous();
    Image out(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), static_cast<int>(t.size(2)));
    std::memcpy(out.data().data(), t.data_ptr<float>(), out.size() * sizeof(float));
    return out;
}

torch::Tensor mpi_to_tensor(const MpiStack& mpi, torch::Dtype dtype) {
    std::vector<torch::Tensor> planes;
    planes.reserve(mpi.planes().size());
    for (const Image& p : mpi.planes()) planes.push_back(to_tensor(p, dtype));
    return torch::stack(planes);
}

MpiStack tensor_to_mpi(const torch::Tensor& planes, const std::vector<double>& depths) {
    if (planes.dim() != 4 || planes.size(1) != kPlaneChannels) throw ShapeError("tensor_to_mpi: expected P x 4 x H x W");
    auto t = planes.detach().clamp(0.0, 1.0);
    std::vector<Image> out;
    for (int64_t i = 0; i < t.size(0); ++i) out.push_back(to_image(t[i]));
    const bool premerge = out.size() == kPreMergePlanes;
    return MpiStack(std::move(out), depths, premerge);
}

}  // namespace mpijpeg::nn
