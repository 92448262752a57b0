#include "test.hpp"

#include <cmath>

#include "mpijpeg/nn/perturb.hpp"
#include "mpijpeg/nn/tensor.hpp"
#include "support.hpp"

using namespace mpijpeg;
using namespace mpijpeg::nn;

namespace {

// Per-pixel jitter in double. The YUV inverse is computed from the forward matrix here rather
// than taken from the usual rounded constants.
Image jitter_oracle(const Image& in, const ColorJitterParams& p) {
    const int n = in.height() * in.width();
    std::vector<double> v(in.data().begin(), in.data().end());
    for (double& x : v) x += p.brightness;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double& x : v) x = (x - mean) * p.contrast + mean;
    const Mat3 yuv{{{0.299, 0.587, 0.114}, {-0.14713, -0.28886, 0.436}, {0.615, -0.51499, -0.10001}}};
    const Mat3 inv = inverse(yuv);
    const double a = p.hue_deg * M_PI / 180.0;
    for (int i = 0; i < n; ++i) {
        double* px = &v[static_cast<std::size_t>(3 * i)];
        const double l = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
        for (int c = 0; c < 3; ++c) px[c] = l + (px[c] - l) * p.saturation;
        double q[3];
        for (int r = 0; r < 3; ++r) q[r] = yuv[r][0] * px[0] + yuv[r][1] * px[1] + yuv[r][2] * px[2];
        const double u = std::cos(a) * q[1] - std::sin(a) * q[2], w = std::sin(a) * q[1] + std::cos(a) * q[2];
        q[1] = u;
        q[2] = w;
        for (int r = 0; r < 3; ++r) px[r] = std::clamp(inv[r][0] * q[0] + inv[r][1] * q[1] + inv[r][2] * q[2], 0.0, 1.0);
    }
    Image out(in.height(), in.width(), 3);
    for (std::size_t i = 0; i < v.size(); ++i) out.data()[i] = static_cast<float>(v[i]);
    return out;
}

}  // namespace

TEST_CASE("colour jitter matches the scalar oracle") {
    Rng rng(1);
    const PerturbConfig cfg;
    for (int trial = 0; trial < 20; ++trial) {
        const auto img = testing::random_image(rng, 9, 11, 3);
        const auto p = sample_color_jitter(cfg, rng);
        const auto got = to_image(color_jitter(to_tensor(img, torch::kFloat64), p));
        // The library uses the 5-digit inverse YUV constants.
        CHECK(max_abs_diff(got, jitter_oracle(img, p)) <= 1e-4);
    }
}

TEST_CASE("each jitter component alone") {
    Rng rng(2);
    const auto img = testing::random_image(rng, 6, 6, 3, 0.2, 0.8);
    const auto t = to_tensor(img, torch::kFloat64);
    CHECK(torch::allclose(color_jitter(t, {0.05, 1, 1, 0}), (t + 0.05).clamp(0, 1)));
    const auto m = t.mean();
    CHECK(torch::allclose(color_jitter(t, {0, 1.1, 1, 0}), ((t - m) * 1.1 + m).clamp(0, 1)));
    // Saturation 0 gives grey, hue 0 and identity params change nothing.
    const auto grey = color_jitter(t, {0, 1, 0, 0});
    CHECK(torch::allclose(grey[0], grey[1]));
    CHECK(torch::allclose(grey[1], grey[2]));
    CHECK(torch::equal(color_jitter(t, {}), t));
    // A full turn of hue is the identity up to the rounded inverse.
    CHECK(torch::allclose(color_jitter(t, {0, 1, 1, 360}), t, 0, 1e-4));
}

TEST_CASE("colour jitter commutes with a horizontal flip") {
    Rng rng(3);
    const auto img = testing::random_image(rng, 8, 10, 3);
    const ColorJitterParams p{0.04, 0.9, 1.1, 7.0};
    const auto a = to_image(color_jitter(to_tensor(flip_horizontal(img), torch::kFloat64), p));
    const auto b = flip_horizontal(to_image(color_jitter(to_tensor(img, torch::kFloat64), p)));
    CHECK(max_abs_diff(a, b) <= 1e-6);
}

TEST_CASE("batched jitter uses a per-item mean") {
    auto x = torch::rand({2, 3, 5, 5}, torch::kFloat64) * 0.5;
    x[1] += 0.4;
    const ColorJitterParams p{0, 1.2, 1, 0};
    const auto y = color_jitter(x, p);
    CHECK(torch::allclose(y[0], color_jitter(x[0], p)));
    CHECK(torch::allclose(y[1], color_jitter(x[1], p)));
}

TEST_CASE("jitter is differentiable") {
    auto x = (0.3 + 0.4 * torch::rand({3, 6, 6}, torch::kFloat64)).requires_grad_(true);
    color_jitter(x, {0.02, 1.1, 0.9, 5}).sum().backward();
    CHECK(torch::isfinite(x.grad()).all().item<bool>());
    CHECK(x.grad().abs().sum().item<double>() > 0);
}

TEST_CASE("jitter sampling ranges, probability and stream position") {
    const PerturbConfig cfg;
    Rng rng(4);
    for (int i = 0; i < 500; ++i) {
        const auto p = sample_color_jitter(cfg, rng);
        CHECK(std::abs(p.brightness) <= 0.1);
        CHECK(std::abs(p.contrast - 1) <= 0.15);
        CHECK(std::abs(p.saturation - 1) <= 0.15);
        CHECK(std::abs(p.hue_deg) <= 10);
    }
    Rng never(5);
    for (int i = 0; i < 50; ++i) CHECK(sample_color_jitter(cfg, never, 0.0).is_identity());

    PerturbConfig off = cfg;
    off.brightness = off.contrast = off.saturation = off.hue = false;
    Rng a(6), b(6);
    CHECK(sample_color_jitter(off, a).is_identity());
    sample_color_jitter(cfg, b);
    CHECK(a() == b());
}

TEST_CASE("crop sizes on a 512x288 frame") {
    const PerturbConfig cfg;
    Rng rng(7);
    int min_w = 1 << 30, max_w = 0, min_h = 1 << 30, max_h = 0;
    for (int i = 0; i < 2000; ++i) {
        const auto r = sample_crop(512, 288, cfg, rng);
        CHECK(r.width % 8 == 0);
        CHECK(r.height % 8 == 0);
        CHECK(r.x >= 0);
        CHECK(r.y >= 0);
        CHECK(r.x + r.width <= 512);
        CHECK(r.y + r.height <= 288);
        min_w = std::min(min_w, r.width);
        max_w = std::max(max_w, r.width);
        min_h = std::min(min_h, r.height);
        max_h = std::max(max_h, r.height);
    }
    CHECK(min_w == 464);
    CHECK(max_w == 512);
    CHECK(min_h == 264);
    CHECK(max_h == 288);
}

TEST_CASE("crops never go below 64 pixels and reject tiny frames") {
    PerturbConfig cfg;
    cfg.crop_fraction = 0.1;
    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
        const auto r = sample_crop(128, 72, cfg, rng);
        CHECK(r.width >= 64);
        CHECK(r.height >= 64);
    }
    CHECK_THROWS_AS(sample_crop(60, 128, cfg, rng), ShapeError);
}

TEST_CASE("random crop returns the pixels under its rectangle") {
    Rng rng(9);
    const auto img = testing::random_image(rng, 80, 100, 3);
    const auto out = random_crop(img, {}, rng);
    CHECK(out.image == crop(img, out.rect));
    auto t = to_tensor(img);
    CHECK(torch::equal(crop_tensor(t, out.rect), to_tensor(out.image)));
    CHECK_THROWS_AS(crop_tensor(t, {50, 0, 64, 64}), ShapeError);
}

TEST_CASE("cropped camera renders the crop of the full render") {
    Rng rng(10);
    const auto mpi = testing::random_stack(rng, 24, 32);
    const auto cam = CameraModel::for_size(32, 24);
    const auto pose = RelativePose::from_euler_deg(0.05, -0.03, 0.02, 0.5, -0.5, 0.3);
    const Rect r{5, 3, 20, 16};
    std::vector<Image> planes;
    for (const auto& p : mpi.planes()) planes.push_back(crop(p, r));
    const MpiStack cropped(planes, mpi.depths());
    const auto a = render_novel_view(cropped, pose, crop_camera(cam, r));
    const auto b = crop(render_novel_view(mpi, pose, cam), r);
    // Away from the crop border the two agree; near it the crop lacks source pixels.
    const int m = 4;
    double worst = 0.0;
    for (int y = m; y < r.height - m; ++y)
        for (int x = m; x < r.width - m; ++x)
            for (int c = 0; c < 3; ++c) worst = std::max(worst, static_cast<double>(std::abs(a.at(y, x, c) - b.at(y, x, c))));
    CHECK(worst <= 1e-5);
}

TEST_CASE("perturbation config validation") {
    PerturbConfig c;
    CHECK_NOTHROW(c.validate());
    c.crop_fraction = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.hue_delta_deg = -1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.apply_probability = 1.5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
