#include "mpijpeg/metrics.hpp"

#include <cmath>

namespace mpijpeg::metrics {

double mse(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ShapeError("mse: shape mismatch");
    if (a.empty()) throw ShapeError("mse: empty images");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data()[i]) - b.data()[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.size());
}

double psnr(const Image& a, const Image& b) {
    const double e = mse(a, b);
    if (e == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / e));
}

Image luma(const Image& rgb) {
    if (rgb.channels() == 1) return rgb;
    if (rgb.channels() < 3) throw ShapeError("luma: expected RGB input");
    Image out(rgb.height(), rgb.width(), 1);
    for (int y = 0; y < rgb.height(); ++y)
        for (int x = 0; x < rgb.width(); ++x) {
            out.at(y, x, 0) = static_cast<float>(0.299 * rgb.at(y, x, 0) + 0.587 * rgb.at(y, x, 1) +
                                                 0.114 * rgb.at(y, x, 2));
        }
    return out;
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::array<double, kWindow> gaussian_window() {
    std::array<double, kWindow> w{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - kWindow / 2;
        w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Separable "valid" filtering of a single-channel plane stored as doubles.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w) {
    static const auto g = gaussian_window();
    const int oh = h - kWindow + 1, ow = w - kWindow + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow), out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int k = 0; k < kWindow; ++k) s += g[static_cast<std::size_t>(k)] * src[static_cast<std::size_t>(y) * w + x + k];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int k = 0; k < kWindow; ++k) s += g[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>(y + k) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ShapeError("ssim: shape mismatch");
    if (a.height() < kWindow || a.width() < kWindow) throw ShapeError("ssim: images must be at least 11x11");
    const Image la = luma(a), lb = luma(b);
    const int h = la.height(), w = la.width();
    const std::size_t n = static_cast<std::size_t>(h) * w;
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = la.data()[i];
        y[i] = lb.data()[i];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w), my = filter_valid(y, h, w);
    const auto sxx = filter_valid(xx, h, w), syy = filter_valid(yy, h, w), sxy = filter_valid(xy, h, w);
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i];
        const double vy = syy[i] - my[i] * my[i];
        const double cov = sxy[i] - mx[i] * my[i];
        total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    return total / static_cast<double>(mx.size());
}

std::vector<RelativePose> evaluation_poses() {
    std::vector<RelativePose> poses;
    for (double ty : {-0.4, 0.0, 0.4})
        for (double tx : {-0.4, 0.0, 0.4}) poses.push_back(RelativePose::from_euler_deg(tx, ty, 0, 0, 0, 0));
    return poses;
}

SceneScores eval_scene(SceneModel& model, const MpiStack& mpi, const Image& reference, const CameraModel& cam,
                       const std::vector<RelativePose>& poses) {
    if (poses.empty()) throw std::invalid_argument("eval_scene: no poses");
    SceneScores scores;
    const Image embedding = model.embed(mpi, reference);
    scores.embedding = {psnr(embedding, reference), ssim(embedding, reference)};
    const MpiStack restored = model.restore(embedding);
    for (const auto& pose : poses) {
        const Image truth = render_novel_view(mpi, pose, cam);
        const Image view = render_novel_view(restored, pose, cam);
        scores.per_pose.push_back({psnr(view, truth), ssim(view, truth)});
        scores.render.psnr += scores.per_pose.back().psnr;
        scores.render.ssim += scores.per_pose.back().ssim;
    }
    scores.render.psnr /= static_cast<double>(poses.size());
    scores.render.ssim /= static_cast<double>(poses.size());
    return scores;
}

}  // namespace mpijpeg::metrics
