#include "mpijpeg/nn/perturb.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mpijpeg::nn {

void PerturbConfig::validate() const {
    if (brightness_delta < 0 || contrast_range < 0 || saturation_range < 0 || hue_delta_deg < 0) {
        throw std::invalid_argument("PerturbConfig: ranges must be non-negative");
    }
    if (!(crop_fraction > 0.0 && crop_fraction <= 1.0)) throw std::invalid_argument("PerturbConfig: crop_fraction must be in (0,1]");
    if (!(apply_probability >= 0.0 && apply_probability <= 1.0)) {
        throw std::invalid_argument("PerturbConfig: apply_probability must be in [0,1]");
    }
}

ColorJitterParams sample_color_jitter(const PerturbConfig& cfg, Rng& rng, double probability) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::bernoulli_distribution keep(probability);
    // Always draw every value so the stream position does not depend on the config.
    const double b = unit(rng), c = unit(rng), s = unit(rng), h = unit(rng);
    const bool kb = keep(rng), kc = keep(rng), ks = keep(rng), kh = keep(rng);
    ColorJitterParams p;
    if (cfg.brightness && kb) p.brightness = b * cfg.brightness_delta;
    if (cfg.contrast && kc) p.contrast = 1.0 + c * cfg.contrast_range;
    if (cfg.saturation && ks) p.saturation = 1.0 + s * cfg.saturation_range;
    if (cfg.hue && kh) p.hue_deg = h * cfg.hue_delta_deg;
    return p;
}

torch::Tensor color_jitter(const torch::Tensor& image, const ColorJitterParams& params) {
    const bool batched = image.dim() == 4;
    if (!batched && image.dim() != 3) throw ShapeError("color_jitter: expected (B x) 3 x H x W");
    auto x = batched ? image : image.unsqueeze(0);
    if (x.size(1) != 3) throw ShapeError("color_jitter: expected 3 channels");
    if (params.is_identity()) return image;

    if (params.brightness != 0.0) x = x + params.brightness;
    if (params.contrast != 1.0) {
        auto mean = x.mean({1, 2, 3}, /*keepdim=*/true);
        x = (x - mean) * params.contrast + mean;
    }
    if (params.saturation != 1.0) {
        auto luma = 0.299 * x.narrow(1, 0, 1) + 0.587 * x.narrow(1, 1, 1) + 0.114 * x.narrow(1, 2, 1);
        x = luma + (x - luma) * params.saturation;
    }
    if (params.hue_deg != 0.0) {
        const double a = params.hue_deg * std::numbers::pi / 180.0;
        const double cs = std::cos(a), sn = std::sin(a);
        auto r = x.narrow(1, 0, 1), g = x.narrow(1, 1, 1), b = x.narrow(1, 2, 1);
        auto y = 0.299 * r + 0.587 * g + 0.114 * b;
        auto u = -0.14713 * r - 0.28886 * g + 0.436 * b;
        auto v = 0.615 * r - 0.51499 * g - 0.10001 * b;
        auto u2 = cs * u - sn * v;
        auto v2 = sn * u + cs * v;
        x = torch::cat({y + 1.13983 * v2, y - 0.39465 * u2 - 0.58060 * v2, y + 2.03211 * u2}, 1);
    }
    x = x.clamp(0.0, 1.0);
    return batched ? x : x.squeeze(0);
}

Rect sample_crop(int width, int height, const PerturbConfig& cfg, Rng& rng) {
    auto pick = [&](int extent) {
        const int hi = extent / 8 * 8;
        int lo = static_cast<int>(std::ceil(extent * cfg.crop_fraction / 8.0 - 1e-9)) * 8;
        lo = std::max(lo, 64);
        if (hi < 64 || lo > hi) throw ShapeError("random_crop: image smaller than the minimum crop");
        std::uniform_int_distribution<int> d(lo / 8, hi / 8);
        return d(rng) * 8;
    };
    const int cw = pick(width), ch = pick(height);
    std::uniform_int_distribution<int> ox(0, width - cw), oy(0, height - ch);
    const int x = ox(rng);
    const int y = oy(rng);
    return {x, y, cw, ch};
}

torch::Tensor crop_tensor(const torch::Tensor& t, const Rect& rect) {
    const auto d = t.dim();
    if (rect.x < 0 || rect.y < 0 || rect.x + rect.width > t.size(d - 1) || rect.y + rect.height > t.size(d - 2)) {
        throw ShapeError("crop_tensor: rectangle outside tensor");
    }
    return t.narrow(d - 2, rect.y, rect.height).narrow(d - 1, rect.x, rect.width);
}

CameraModel crop_camera(const CameraModel& cam, const Rect& rect) {
    return {cam.fx, cam.fy, cam.cx - rect.x, cam.cy - rect.y};
}

CropResult random_crop(const Image& image, const PerturbConfig& cfg, Rng& rng) {
    if (cfg.crop_fraction == 1.0 && image.width() % 8 == 0 && image.height() % 8 == 0) {
        return {image, {0, 0, image.width(), image.height()}};
    }
    const Rect r = sample_crop(image.width(), image.height(), cfg, rng);
    return {crop(image, r), r};
}

}  // namespace mpijpeg::nn
