#include "mpijpeg/nn/diff_render.hpp"

#include <cmath>

namespace mpijpeg::nn {

torch::Tensor composite(const torch::Tensor& mpi) {
    if (mpi.dim() < 4 || mpi.size(-3) != kPlaneChannels) throw ShapeError("composite: expected (B x) P x 4 x H x W");
    const int64_t plane_dim = mpi.dim() - 4;
    // unbind/split keep the backward pass to a single stack instead of one zero-filled
    // full-size gradient per plane.
    const auto parts = mpi.split_with_sizes({3, 1}, -3);
    const auto colors = parts[0].unbind(plane_dim);
    const auto alphas = parts[1].unbind(plane_dim);
    torch::Tensor out;
    for (std::size_t i = 0; i < colors.size(); ++i) {
        out = i == 0 ? colors[i] * alphas[i] : colors[i] * alphas[i] + out * (1.0 - alphas[i]);
    }
    return out;
}

torch::Tensor warp_planes(const torch::Tensor& planes, const std::vector<double>& depths, const RelativePose& pose,
                          const CameraModel& cam) {
    if (planes.dim() != 4) throw ShapeError("warp_planes: expected P x C x H x W");
    const int64_t p = planes.size(0), h = planes.size(2), w = planes.size(3);
    if (static_cast<int64_t>(depths.size()) != p) throw ShapeError("warp_planes: depth count mismatch");
    if (pose.is_identity()) return planes;

    if (h < 2 || w < 2) throw ShapeError("warp_planes: planes must be at least 2x2");

    // Source coordinates per target pixel, normalized so that -1 and 1 are the centers of the
    // first and last pixels. Points behind the camera or far outside map to -4, which is
    // outside by more than a pixel for any width >= 2.
    auto grid = torch::empty({p, h, w, 2}, torch::kFloat64);
    auto g = grid.accessor<double, 4>();
    for (int64_t i = 0; i < p; ++i) {
        const Mat3 inv = inverse(plane_homography(depths[static_cast<std::size_t>(i)], pose, cam));
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const double sx = inv[0][0] * x + inv[0][1] * y + inv[0][2];
                const double sy = inv[1][0] * x + inv[1][1] * y + inv[1][2];
                const double sw = inv[2][0] * x + inv[2][1] * y + inv[2][2];
                double u = -4.0, v = -4.0;
                if (sw > 0.0) {
                    const double su = sx / sw, sv = sy / sw;
                    if (su > -1.0 && sv > -1.0 && su < w && sv < h) {
                        u = 2.0 * su / static_cast<double>(w - 1) - 1.0;
                        v = 2.0 * sv / static_cast<double>(h - 1) - 1.0;
                    }
                }
                g[i][y][x][0] = u;
                g[i][y][x][1] = v;
            }
    }
    namespace F = torch::nn::functional;
    return F::grid_sample(planes, grid.to(planes.scalar_type()),
                          F::GridSampleFuncOptions().mode(torch::kBilinear).padding_mode(torch::kZeros).align_corners(true));
}

torch::Tensor render(const torch::Tensor& mpi, const std::vector<double>& depths,
                     const std::vector<RelativePose>& poses, const std::vector<CameraModel>& cams) {
    if (mpi.dim() != 5) throw ShapeError("render: expected B x P x 4 x H x W");
    const auto b = mpi.size(0);
    if (static_cast<int64_t>(poses.size()) != b || static_cast<int64_t>(cams.size()) != b) {
        throw ShapeError("render: need one pose and one camera per batch item");
    }
    const auto items = mpi.unbind(0);
    std::vector<torch::Tensor> views;
    for (std::size_t i = 0; i < items.size(); ++i) views.push_back(composite(warp_planes(items[i], depths, poses[i], cams[i])));
    return torch::stack(views);
}

}  // namespace mpijpeg::nn
