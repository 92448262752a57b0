#include "mpijpeg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace mpijpeg {

namespace {

struct Texture {
    double base[3];
    double amp[3];
    double kx, ky, phase;

    float sample(int x, int y, int c) const {
        const double s = std::sin(kx * x + ky * y + phase);
        return static_cast<float>(std::clamp(base[c] + amp[c] * s, 0.0, 1.0));
    }
};

Texture random_texture(Rng& rng, int width) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Texture t{};
    for (int c = 0; c < 3; ++c) {
        t.base[c] = 0.2 + 0.6 * u(rng);
        t.amp[c] = 0.15 * u(rng);
    }
    const double freq = 2.0 * std::numbers::pi * (1.0 + 3.0 * u(rng)) / width;
    const double dir = 2.0 * std::numbers::pi * u(rng);
    t.kx = freq * std::cos(dir);
    t.ky = freq * std::sin(dir);
    t.phase = 2.0 * std::numbers::pi * u(rng);
    return t;
}

// Coverage of [lo, hi] with linear ramps of width `soft` on both sides.
double soft_box(double v, double lo, double hi, double soft) {
    return std::clamp(std::min(v - lo, hi - v) / soft + 0.5, 0.0, 1.0);
}

}  // namespace

SyntheticScene generate_synthetic_scene(std::uint64_t seed, int width, int height, int planes) {
    if (width < 8 || height < 8) throw ShapeError("synthetic scene must be at least 8x8");
    if (planes != kNumPlanes && planes != kPreMergePlanes) throw ShapeError("synthetic scene needs 32 or 128 planes");
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Image> layers(static_cast<std::size_t>(planes), Image(height, width, kPlaneChannels));

    const Texture backdrop = random_texture(rng, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) layers[0].at(y, x, c) = backdrop.sample(x, y, c);
            layers[0].at(y, x, 3) = 1.0f;
        }

    // Distinct planes for the foreground rectangles, sorted far to near.
    const int rects = 5;
    std::vector<int> indices(static_cast<std::size_t>(planes - 1));
    for (int i = 0; i < planes - 1; ++i) indices[static_cast<std::size_t>(i)] = i + 1;
    std::shuffle(indices.begin(), indices.end(), rng);
    indices.resize(rects);
    std::sort(indices.begin(), indices.end());

    for (int idx : indices) {
        const Texture tex = random_texture(rng, width);
        const double rw = width * (0.2 + 0.3 * u(rng)), rh = height * (0.2 + 0.3 * u(rng));
        const double x0 = (width - rw) * u(rng), y0 = (height - rh) * u(rng);
        const double soft = 1.0 + 2.0 * u(rng);
        const double opacity = 0.7 + 0.3 * u(rng);
        Image& layer = layers[static_cast<std::size_t>(idx)];
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const double a = opacity * soft_box(x, x0, x0 + rw, soft) * soft_box(y, y0, y0 + rh, soft);
                if (a <= 0.0) continue;
                for (int c = 0; c < 3; ++c) layer.at(y, x, c) = tex.sample(x, y, c);
                layer.at(y, x, 3) = static_cast<float>(a);
            }
    }

    MpiStack mpi(std::move(layers), default_depths(planes), planes == kPreMergePlanes);
    Image reference = composite(mpi);
    return {std::move(mpi), std::move(reference), CameraModel::for_size(width, height)};
}

}  // namespace mpijpeg
