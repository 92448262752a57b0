#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mpijpeg {

/// Thrown when tensor/image dimensions do not satisfy an operation's contract.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown for degenerate camera geometry (non-invertible homographies).
class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Interleaved H x W x C float image. Values are nominally in [0,1].
class Image {
public:
    Image() = default;
    Image(int height, int width, int channels, float fill = 0.0f)
        : height_(height), width_(width), channels_(channels) {
        if (height < 0 || width < 0 || channels <= 0) {
            throw ShapeError("Image: invalid dimensions");
        }
        data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
    }

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int channels() const noexcept { return channels_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float& at(int y, int x, int c) noexcept { return data_[index(y, x, c)]; }
    float at(int y, int x, int c) const noexcept { return data_[index(y, x, c)]; }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    bool same_shape(const Image& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int y, int x, int c) const noexcept {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

struct Rect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;
    friend bool operator==(const Rect&, const Rect&) = default;
};

/// Copies the sub-image covered by `rect`. Throws ShapeError when out of bounds.
Image crop(const Image& image, const Rect& rect);

/// Mirrors the image left to right.
Image flip_horizontal(const Image& image);

/// Returns channels [first, first + count) of the image.
Image select_channels(const Image& image, int first, int count);

/// Rounds every value to the 1/255 grid after clamping to [0,1].
Image quantize_8bit(const Image& image);

/// Largest absolute per-element difference. Shapes must match.
double max_abs_diff(const Image& a, const Image& b);

}  // namespace mpijpeg
