#pragma once

#include <array>
#include <functional>
#include <vector>

#include "mpijpeg/image.hpp"
#include "mpijpeg/mpi.hpp"

namespace mpijpeg::metrics {

/// Reported for identical inputs instead of +inf.
inline constexpr double kPsnrCap = 100.0;

double mse(const Image& a, const Image& b);

/// 10 log10(1 / MSE) for images on [0,1]; kPsnrCap when MSE is zero.
double psnr(const Image& a, const Image& b);

/// Rec. 601 luma of an RGB image (single-channel result). Single-channel input is returned as is.
Image luma(const Image& rgb);

/// Mean SSIM of the luma channels: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// dynamic range 1, evaluated where the window fits entirely inside the image.
double ssim(const Image& a, const Image& b);

struct QualityScores {
    double psnr = 0.0;
    double ssim = 0.0;
};

struct SceneScores {
    QualityScores embedding;  // embedding image vs reference
    QualityScores render;     // restored vs ground-truth renders, averaged over poses
    std::vector<QualityScores> per_pose;
};

/// The fixed evaluation poses: (x, y) translations on {-0.4, 0, 0.4}^2, identity rotation.
std::vector<RelativePose> evaluation_poses();

/// Anything that turns a scene into an embedding image and back into an MPI.
class SceneModel {
public:
    virtual ~SceneModel() = default;
    virtual Image embed(const MpiStack& mpi, const Image& reference) = 0;
    virtual MpiStack restore(const Image& embedding) = 0;
};

SceneScores eval_scene(SceneModel& model, const MpiStack& mpi, const Image& reference, const CameraModel& cam,
                       const std::vector<RelativePose>& poses = evaluation_poses());

}  // namespace mpijpeg::metrics
