#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "mpijpeg/image.hpp"

namespace mpijpeg {

inline constexpr int kNumPlanes = 32;
inline constexpr int kPreMergePlanes = 128;
inline constexpr int kPlaneChannels = 4;
inline constexpr int kBitsPerChannel = 8;
/// Bits carried per pixel by a 32-plane 8-bit RGBA stack.
inline constexpr int kBitsPerPixel = kNumPlanes * kPlaneChannels * kBitsPerChannel;
static_assert(kBitsPerPixel == 1024);

/// Ordered RGBA planes, index 0 farthest. Colors are straight (not premultiplied) alpha.
class MpiStack {
public:
    MpiStack() = default;

    /// Validates plane count (32, or 128 when `allow_premerge`), shapes, value range and depth order.
    MpiStack(std::vector<Image> planes, std::vector<double> depths, bool allow_premerge = false);

    int num_planes() const noexcept { return static_cast<int>(planes_.size()); }
    int height() const noexcept { return planes_.empty() ? 0 : planes_.front().height(); }
    int width() const noexcept { return planes_.empty() ? 0 : planes_.front().width(); }

    const std::vector<Image>& planes() const noexcept { return planes_; }
    const std::vector<double>& depths() const noexcept { return depths_; }
    const Image& plane(int i) const { return planes_.at(static_cast<std::size_t>(i)); }
    double depth(int i) const { return depths_.at(static_cast<std::size_t>(i)); }

private:
    std::vector<Image> planes_;
    std::vector<double> depths_;
};

/// Depths linear in inverse depth between `far_depth` (index 0) and `near_depth` (last index).
std::vector<double> default_depths(int num_planes = kNumPlanes, double near_depth = 1.0,
                                   double far_depth = 100.0);

struct CameraModel {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;

    /// Throws ShapeError unless focal lengths are positive and the principal point is inside the image.
    void validate(int width, int height) const;

    /// Conventional default used by the synthetic generator: fx = fy = width, centered principal point.
    static CameraModel for_size(int width, int height);
};

using Mat3 = std::array<std::array<double, 3>, 3>;
using Vec3 = std::array<double, 3>;

Mat3 identity3();
Mat3 matmul(const Mat3& a, const Mat3& b);
Mat3 transpose(const Mat3& m);
double determinant(const Mat3& m);
Mat3 inverse(const Mat3& m);

/// Rigid transform taking reference-camera coordinates to target-camera coordinates:
/// X_target = rotation * X_ref + translation.
struct RelativePose {
    Mat3 rotation = identity3();
    Vec3 translation{0.0, 0.0, 0.0};

    /// Orthonormality and det = 1, both within 1e-6.
    bool is_valid() const;
    bool is_identity() const;

    static RelativePose identity() { return {}; }
    /// Intrinsic XYZ Euler angles in degrees: R = Rx(rx) * Ry(ry) * Rz(rz).
    static RelativePose from_euler_deg(double tx, double ty, double tz, double rx_deg, double ry_deg,
                                       double rz_deg);
};

struct PoseSamplerConfig {
    double translation_range = 0.5;
    double rotation_range_deg = 8.0;
};

/// Seeded generator shared by every stochastic component.
using Rng = std::mt19937_64;

/// Over-composites planes back to front: C <- c * a + C * (1 - a).
Image composite(const MpiStack& mpi);

/// Plane-induced homography mapping reference pixels to target pixels for a fronto-parallel
/// plane at `depth`: K (R + t n^T / depth) K^-1 with n = (0, 0, 1).
Mat3 plane_homography(double depth, const RelativePose& pose, const CameraModel& cam);

/// Inverse-warps an RGBA plane into the target view with bilinear sampling. Samples outside
/// the source plane are transparent black.
Image warp_plane(const Image& plane, double depth, const RelativePose& pose, const CameraModel& cam);

/// Warps every plane by its own depth, then composites.
Image render_novel_view(const MpiStack& mpi, const RelativePose& pose, const CameraModel& cam);

/// Translations i.i.d. uniform in +-translation_range, Euler angles i.i.d. uniform in
/// +-rotation_range_deg.
RelativePose sample_render_pose(const PoseSamplerConfig& cfg, Rng& rng);

/// Collapses a 128-plane stack into 32 planes by over-compositing groups of four.
MpiStack merge_planes(const MpiStack& mpi128);

}  // namespace mpijpeg
