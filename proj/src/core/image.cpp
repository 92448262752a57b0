#include "mpijpeg/image.hpp"

#include <algorithm>
#include <cmath>

namespace mpijpeg {

Image crop(const Image& image, const Rect& rect) {
    if (rect.x < 0 || rect.y < 0 || rect.width <= 0 || rect.height <= 0 ||
        rect.x + rect.width > image.width() || rect.y + rect.height > image.height()) {
        throw ShapeError("crop: rectangle outside image");
    }
    Image out(rect.height, rect.width, image.channels());
    const int c = image.channels();
    for (int y = 0; y < rect.height; ++y) {
        const float* src = &image.data()[(static_cast<std::size_t>(y + rect.y) * image.width() + rect.x) * c];
        std::copy_n(src, static_cast<std::size_t>(rect.width) * c, &out.at(y, 0, 0));
    }
    return out;
}

Image flip_horizontal(const Image& image) {
    Image out(image.height(), image.width(), image.channels());
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            for (int c = 0; c < image.channels(); ++c) {
                out.at(y, image.width() - 1 - x, c) = image.at(y, x, c);
            }
        }
    }
    return out;
}

Image select_channels(const Image& image, int first, int count) {
    if (first < 0 || count <= 0 || first + count > image.channels()) {
        throw ShapeError("select_channels: channel range out of bounds");
    }
    Image out(image.height(), image.width(), count);
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            for (int c = 0; c < count; ++c) out.at(y, x, c) = image.at(y, x, first + c);
        }
    }
    return out;
}

Image quantize_8bit(const Image& image) {
    Image out = image;
    for (float& v : out.data()) {
        v = static_cast<float>(std::nearbyint(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0);
    }
    return out;
}

double max_abs_diff(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
    }
    return worst;
}

}  // namespace mpijpeg
