#include "mpijpeg/mpi.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>

namespace mpijpeg {

MpiStack::MpiStack(std::vector<Image> planes, std::vector<double> depths, bool allow_premerge)
    : planes_(std::move(planes)), depths_(std::move(depths)) {
    const auto n = planes_.size();
    if (n != kNumPlanes && !(allow_premerge && n == kPreMergePlanes)) {
        throw ShapeError("MpiStack: expected 32 planes, got " + std::to_string(n));
    }
    if (depths_.size() != n) throw ShapeError("MpiStack: depth count does not match plane count");
    const Image& first = planes_.front();
    if (first.channels() != kPlaneChannels || first.height() <= 0 || first.width() <= 0) {
        throw ShapeError("MpiStack: planes must be non-empty RGBA");
    }
    for (const Image& p : planes_) {
        if (!p.same_shape(first)) throw ShapeError("MpiStack: planes differ in shape");
        for (float v : p.data()) {
            if (!(v >= 0.0f && v <= 1.0f)) throw ShapeError("MpiStack: channel value outside [0,1]");
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!(depths_[i] > 0.0)) throw ShapeError("MpiStack: depths must be positive");
        if (i > 0 && !(depths_[i] < depths_[i - 1])) {
            throw ShapeError("MpiStack: depths must strictly decrease from far to near");
        }
    }
}

std::vector<double> default_depths(int num_planes, double near_depth, double far_depth) {
    std::vector<double> depths(static_cast<std::size_t>(num_planes));
    const double inv_far = 1.0 / far_depth;
    const double inv_near = 1.0 / near_depth;
    for (int i = 0; i < num_planes; ++i) {
        const double t = num_planes == 1 ? 1.0 : static_cast<double>(i) / (num_planes - 1);
        depths[static_cast<std::size_t>(i)] = 1.0 / (inv_far + t * (inv_near - inv_far));
    }
    return depths;
}

void CameraModel::validate(int width, int height) const {
    if (!(fx > 0.0 && fy > 0.0)) throw ShapeError("CameraModel: focal lengths must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
        throw ShapeError("CameraModel: principal point outside image");
    }
}

CameraModel CameraModel::for_size(int width, int height) {
    return {static_cast<double>(width), static_cast<double>(width), (width - 1) / 2.0, (height - 1) / 2.0};
}

Mat3 identity3() { return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }

Mat3 matmul(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
    return r;
}

Mat3 transpose(const Mat3& m) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r[i][j] = m[j][i];
    return r;
}

double determinant(const Mat3& m) {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

Mat3 inverse(const Mat3& m) {
    const double det = determinant(m);
    double scale = 0.0;
    for (const auto& row : m)
        for (double v : row) scale = std::max(scale, std::abs(v));
    if (scale == 0.0 || std::abs(det) <= 1e-12 * scale * scale * scale) {
        throw GeometryError("matrix is not invertible");
    }
    Mat3 r{};
    r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    return r;
}

bool RelativePose::is_valid() const {
    const Mat3 rtr = matmul(transpose(rotation), rotation);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            if (std::abs(rtr[i][j] - (i == j ? 1.0 : 0.0)) > 1e-6) return false;
        }
    return std::abs(determinant(rotation) - 1.0) <= 1e-6;
}

bool RelativePose::is_identity() const {
    return rotation == identity3() && translation == Vec3{0.0, 0.0, 0.0};
}

RelativePose RelativePose::from_euler_deg(double tx, double ty, double tz, double rx_deg, double ry_deg,
                                          double rz_deg) {
    constexpr double kDeg = std::numbers::pi / 180.0;
    const double a = rx_deg * kDeg, b = ry_deg * kDeg, c = rz_deg * kDeg;
    const Mat3 rx{{{1, 0, 0}, {0, std::cos(a), -std::sin(a)}, {0, std::sin(a), std::cos(a)}}};
    const Mat3 ry{{{std::cos(b), 0, std::sin(b)}, {0, 1, 0}, {-std::sin(b), 0, std::cos(b)}}};
    const Mat3 rz{{{std::cos(c), -std::sin(c), 0}, {std::sin(c), std::cos(c), 0}, {0, 0, 1}}};
    RelativePose pose;
    pose.rotation = matmul(matmul(rx, ry), rz);
    pose.translation = {tx, ty, tz};
    return pose;
}

namespace {

Image composite_planes(std::span<const Image> planes) {
    if (planes.empty()) throw ShapeError("composite: empty stack");
    const int h = planes.front().height(), w = planes.front().width();
    Image out(h, w, 3);
    for (const Image& plane : planes) {
        if (plane.height() != h || plane.width() != w || plane.channels() != kPlaneChannels) {
            throw ShapeError("composite: plane shape mismatch");
        }
        auto dst = out.data();
        auto src = plane.data();
        const std::size_t pixels = static_cast<std::size_t>(h) * w;
        for (std::size_t p = 0; p < pixels; ++p) {
            const float a = src[p * 4 + 3];
            for (int c = 0; c < 3; ++c) {
                float& acc = dst[p * 3 + c];
                acc = src[p * 4 + c] * a + acc * (1.0f - a);
            }
        }
    }
    return out;
}

}  // namespace

Image composite(const MpiStack& mpi) { return composite_planes(mpi.planes()); }

Mat3 plane_homography(double depth, const RelativePose& pose, const CameraModel& cam) {
    if (!(depth > 0.0)) throw GeometryError("plane_homography: depth must be positive");
    const Mat3 k{{{cam.fx, 0, cam.cx}, {0, cam.fy, cam.cy}, {0, 0, 1}}};
    const Mat3 k_inv{{{1.0 / cam.fx, 0, -cam.cx / cam.fx}, {0, 1.0 / cam.fy, -cam.cy / cam.fy}, {0, 0, 1}}};
    Mat3 m = pose.rotation;
    for (int i = 0; i < 3; ++i) m[i][2] += pose.translation[i] / depth;
    return matmul(matmul(k, m), k_inv);
}

namespace {

// Bilinear tap with zero padding outside the source grid.
void sample_bilinear(const Image& src, double u, double v, float* out) {
    const int c = src.channels();
    for (int k = 0; k < c; ++k) out[k] = 0.0f;
    if (!(u > -1.0 && v > -1.0 && u < src.width() && v < src.height())) return;
    const double fu = std::floor(u), fv = std::floor(v);
    const int x0 = static_cast<int>(fu), y0 = static_cast<int>(fv);
    const double wx1 = u - fu, wy1 = v - fv;
    const double wx[2] = {1.0 - wx1, wx1};
    const double wy[2] = {1.0 - wy1, wy1};
    for (int dy = 0; dy < 2; ++dy) {
        const int y = y0 + dy;
        if (y < 0 || y >= src.height() || wy[dy] == 0.0) continue;
        for (int dx = 0; dx < 2; ++dx) {
            const int x = x0 + dx;
            if (x < 0 || x >= src.width() || wx[dx] == 0.0) continue;
            const double wgt = wx[dx] * wy[dy];
            for (int k = 0; k < c; ++k) out[k] += static_cast<float>(wgt * src.at(y, x, k));
        }
    }
}

}  // namespace

Image warp_plane(const Image& plane, double depth, const RelativePose& pose, const CameraModel& cam) {
    if (!(depth > 0.0)) throw GeometryError("warp_plane: depth must be positive");
    if (pose.is_identity()) return plane;
    const Mat3 inv = inverse(plane_homography(depth, pose, cam));
    Image out(plane.height(), plane.width(), plane.channels());
    for (int y = 0; y < plane.height(); ++y) {
        for (int x = 0; x < plane.width(); ++x) {
            const double sx = inv[0][0] * x + inv[0][1] * y + inv[0][2];
            const double sy = inv[1][0] * x + inv[1][1] * y + inv[1][2];
            const double sw = inv[2][0] * x + inv[2][1] * y + inv[2][2];
            if (!(sw > 0.0)) continue;  // plane point behind the reference camera
            sample_bilinear(plane, sx / sw, sy / sw, &out.at(y, x, 0));
        }
    }
    return out;
}

Image render_novel_view(const MpiStack& mpi, const RelativePose& pose, const CameraModel& cam) {
    if (pose.is_identity()) return composite(mpi);
    std::vector<Image> warped;
    warped.reserve(mpi.planes().size());
    for (int i = 0; i < mpi.num_planes(); ++i) {
        warped.push_back(warp_plane(mpi.plane(i), mpi.depth(i), pose, cam));
    }
    return composite_planes(warped);
}

RelativePose sample_render_pose(const PoseSamplerConfig& cfg, Rng& rng) {
    std::uniform_real_distribution<double> t(-cfg.translation_range, cfg.translation_range);
    std::uniform_real_distribution<double> r(-cfg.rotation_range_deg, cfg.rotation_range_deg);
    double v[6];
    for (int i = 0; i < 3; ++i) v[i] = cfg.translation_range > 0.0 ? t(rng) : 0.0;
    for (int i = 3; i < 6; ++i) v[i] = cfg.rotation_range_deg > 0.0 ? r(rng) : 0.0;
    if (cfg.translation_range == 0.0 && cfg.rotation_range_deg == 0.0) return RelativePose::identity();
    return RelativePose::from_euler_deg(v[0], v[1], v[2], v[3], v[4], v[5]);
}

MpiStack merge_planes(const MpiStack& mpi128) {
    if (mpi128.num_planes() != kPreMergePlanes) {
        throw ShapeError("merge_planes: expected 128 planes, got " + std::to_string(mpi128.num_planes()));
    }
    const int h = mpi128.height(), w = mpi128.width();
    const std::size_t pixels = static_cast<std::size_t>(h) * w;
    std::vector<Image> merged;
    std::vector<double> depths;
    for (int g = 0; g < kNumPlanes; ++g) {
        Image out(h, w, kPlaneChannels);
        auto dst = out.data();
        double log_depth = 0.0;
        for (int k = 0; k < 4; ++k) {
            const Image& p = mpi128.plane(4 * g + k);
            log_depth += std::log(mpi128.depth(4 * g + k));
            auto src = p.data();
            for (std::size_t i = 0; i < pixels; ++i) {
                const float a = src[i * 4 + 3];
                for (int c = 0; c < 3; ++c) dst[i * 4 + c] = src[i * 4 + c] * a + dst[i * 4 + c] * (1.0f - a);
                dst[i * 4 + 3] = a + dst[i * 4 + 3] * (1.0f - a);
            }
        }
        // Accumulated color is premultiplied; return to straight alpha.
        for (std::size_t i = 0; i < pixels; ++i) {
            const float a = dst[i * 4 + 3];
            for (int c = 0; c < 3; ++c) {
                dst[i * 4 + c] = a > 0.0f ? std::clamp(dst[i * 4 + c] / a, 0.0f, 1.0f) : 0.0f;
            }
        }
        merged.push_back(std::move(out));
        depths.push_back(std::exp(log_depth / 4.0));
    }
    return MpiStack(std::move(merged), std::move(depths));
}

}  // namespace mpijpeg
