#include "mpijpeg/nn/diff_jpeg.hpp"

namespace mpijpeg::nn {

namespace F = torch::nn::functional;
using torch::autograd::AutogradContext;
using torch::autograd::variable_list;

namespace {

struct RoundStraightThrough : torch::autograd::Function<RoundStraightThrough> {
    static torch::Tensor forward(AutogradContext*, const torch::Tensor& x) { return torch::round(x); }
    static variable_list backward(AutogradContext*, variable_list grad) { return {grad[0]}; }
};

struct Quantize8Bit : torch::autograd::Function<Quantize8Bit> {
    static torch::Tensor forward(AutogradContext*, const torch::Tensor& x) {
        return (x.to(torch::kFloat64) * 255.0).round().div(255.0).to(x.scalar_type());
    }
    static variable_list backward(AutogradContext*, variable_list grad) { return {grad[0]}; }
};

torch::Tensor dct_matrix() {
    const auto& basis = jpeg::dct_basis();
    auto d = torch::empty({8, 8}, torch::kFloat64);
    auto acc = d.accessor<double, 2>();
    for (int u = 0; u < 8; ++u)
        for (int x = 0; x < 8; ++x) acc[u][x] = basis[static_cast<std::size_t>(u)][static_cast<std::size_t>(x)];
    return d;
}

torch::Tensor table_tensor(const jpeg::Table8x8& t) {
    auto out = torch::empty({8, 8}, torch::kFloat64);
    auto acc = out.accessor<double, 2>();
    for (int i = 0; i < 64; ++i) acc[i / 8][i % 8] = t[static_cast<std::size_t>(i)];
    return out;
}

// B x H x W plane (H, W multiples of 8) through DCT -> quantize -> dequantize -> IDCT.
torch::Tensor block_round_trip(const torch::Tensor& plane, const torch::Tensor& q, Rounding rounding) {
    static const torch::Tensor d = dct_matrix();
    const auto b = plane.size(0), h = plane.size(1), w = plane.size(2);
    auto blocks = (plane - 128.0).reshape({b, h / 8, 8, w / 8, 8}).permute({0, 1, 3, 2, 4});
    auto coeffs = torch::matmul(torch::matmul(d, blocks), d.t());
    auto scaled = coeffs / q;
    if (rounding == Rounding::kStraightThrough) scaled = round_ste(scaled);
    auto spatial = torch::matmul(torch::matmul(d.t(), scaled * q), d);
    return spatial.permute({0, 1, 3, 2, 4}).reshape({b, h, w}) + 128.0;
}

}  // namespace

torch::Tensor round_ste(const torch::Tensor& x) { return RoundStraightThrough::apply(x); }

torch::Tensor quantize_8bit(const torch::Tensor& x) { return Quantize8Bit::apply(x); }

torch::Tensor jpeg_simulate(const torch::Tensor& image, const jpeg::JpegConfig& cfg, Rounding rounding) {
    const bool batched = image.dim() == 4;
    if (!batched && image.dim() != 3) throw ShapeError("jpeg_simulate: expected (B x) 3 x H x W");
    auto x = batched ? image : image.unsqueeze(0);
    if (x.size(1) != 3) throw ShapeError("jpeg_simulate: expected 3 channels");
    const auto h = x.size(2), w = x.size(3);
    if (h < 8 || w < 8) throw ShapeError("jpeg_simulate: image smaller than 8x8");

    const jpeg::QuantTables tables = jpeg::quant_tables_for_quality(cfg.quality);
    const auto q_luma = table_tensor(tables.luma), q_chroma = table_tensor(tables.chroma);
    const bool sub = cfg.subsampling == jpeg::ChromaSubsampling::k420;
    const int64_t mcu = sub ? 16 : 8;

    auto rgb = rounding == Rounding::kStraightThrough ? quantize_8bit(x) : x;
    rgb = rgb.to(torch::kFloat64).clamp(0.0, 1.0) * 255.0;
    auto r = rgb.select(1, 0), g = rgb.select(1, 1), bl = rgb.select(1, 2);
    auto y = 0.299 * r + 0.587 * g + 0.114 * bl;
    auto cb = -0.168736 * r - 0.331264 * g + 0.5 * bl + 128.0;
    auto cr = 0.5 * r - 0.418688 * g - 0.081312 * bl + 128.0;

    const int64_t ph = (h + mcu - 1) / mcu * mcu, pw = (w + mcu - 1) / mcu * mcu;
    auto ycc = torch::stack({y, cb, cr}, 1);
    if (ph != h || pw != w) {
        ycc = F::pad(ycc, F::PadFuncOptions({0, pw - w, 0, ph - h}).mode(torch::kReplicate));
    }
    auto y_rt = block_round_trip(ycc.select(1, 0), q_luma, rounding);
    auto chroma = ycc.narrow(1, 1, 2);
    if (sub) chroma = F::avg_pool2d(chroma, F::AvgPool2dFuncOptions(2).stride(2));
    auto cb_rt = block_round_trip(chroma.select(1, 0), q_chroma, rounding);
    auto cr_rt = block_round_trip(chroma.select(1, 1), q_chroma, rounding);
    if (sub) {
        cb_rt = cb_rt.repeat_interleave(2, 1).repeat_interleave(2, 2);
        cr_rt = cr_rt.repeat_interleave(2, 1).repeat_interleave(2, 2);
    }
    y_rt = y_rt.narrow(1, 0, h).narrow(2, 0, w);
    cb_rt = cb_rt.narrow(1, 0, h).narrow(2, 0, w) - 128.0;
    cr_rt = cr_rt.narrow(1, 0, h).narrow(2, 0, w) - 128.0;
    auto out = torch::stack({y_rt + 1.402 * cr_rt, y_rt - 0.344136 * cb_rt - 0.714136 * cr_rt, y_rt + 1.772 * cb_rt}, 1);
    out = (out.clamp(0.0, 255.0) / 255.0).to(image.scalar_type());
    return batched ? out : out.squeeze(0);
}

}  // namespace mpijpeg::nn
