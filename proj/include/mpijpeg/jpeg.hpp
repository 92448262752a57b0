#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpijpeg/image.hpp"

namespace mpijpeg::jpeg {

enum class ChromaSubsampling { k444, k420 };

struct JpegConfig {
    int quality = 90;
    ChromaSubsampling subsampling = ChromaSubsampling::k420;
};

using Table8x8 = std::array<int, 64>;  // row-major (natural order)

struct QuantTables {
    Table8x8 luma{};
    Table8x8 chroma{};
};

/// Malformed or unsupported stream. `offset()` is the byte position where decoding stopped.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Annex K example tables, natural order.
const Table8x8& base_luma_table();
const Table8x8& base_chroma_table();
/// zigzag_order()[k] is the natural-order index of the k-th zigzag coefficient.
const std::array<int, 64>& zigzag_order();

/// Conventional linear quality scaling of the Annex K tables, entries clamped to [1, 255].
QuantTables quant_tables_for_quality(int quality);

/// Orthonormal 8x8 type-II DCT basis: basis[u][x] = C(u)/2 * cos((2x+1) u pi / 16).
const std::array<std::array<double, 8>, 8>& dct_basis();

/// Forward DCT of one level-shifted block (natural order in and out).
std::array<double, 64> forward_dct(const std::array<double, 64>& block);
std::array<double, 64> inverse_dct(const std::array<double, 64>& coeffs);

// JFIF YCbCr <-> RGB on the 0..255 scale.
void rgb_to_ycbcr(double r, double g, double b, double& y, double& cb, double& cr);
void ycbcr_to_rgb(double y, double cb, double cr, double& r, double& g, double& b);

/// Baseline sequential JFIF encoder with the standard Huffman tables.
/// Input is H x W x 3 in [0,1]; it is rounded to 8 bits first. H, W >= 8.
std::vector<std::uint8_t> encode(const Image& rgb, const JpegConfig& cfg = {});

struct DecodedRgb8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // interleaved RGB
};

/// Baseline decoder (any sampling factors, 1 or 3 components, nearest-neighbour chroma upsampling).
DecodedRgb8 decode_rgb8(std::span<const std::uint8_t> bytes);
Image decode(std::span<const std::uint8_t> bytes);

/// Quantized DCT coefficients of the first component's blocks (natural order), for inspection.
std::vector<std::array<int, 64>> luma_coefficients(const Image& rgb, const JpegConfig& cfg = {});
/// Unquantized DCT coefficients of the level-shifted luma blocks.
std::vector<std::array<double, 64>> luma_dct(const Image& rgb);

}  // namespace mpijpeg::jpeg
