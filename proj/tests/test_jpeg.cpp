#include "test.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mpijpeg/io.hpp"
#include "mpijpeg/jpeg.hpp"
#include "mpijpeg/metrics.hpp"
#include "mpijpeg/nn/diff_jpeg.hpp"
#include "mpijpeg/nn/tensor.hpp"
#include "support.hpp"

using namespace mpijpeg;
using jpeg::ChromaSubsampling;

namespace {

const int kAnnexLuma[64] = {16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                            14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                            18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                            49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

int scaled(int base, int quality) {
    const int s = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    return std::clamp((base * s + 50) / 100, 1, 255);
}

}  // namespace

TEST_CASE("quantization tables follow the linear quality scaling") {
    for (int q : {1, 10, 50, 75, 90, 100}) {
        const auto t = jpeg::quant_tables_for_quality(q);
        for (int i = 0; i < 64; ++i) {
            CHECK(t.luma[i] == scaled(kAnnexLuma[i], q));
            CHECK(t.chroma[i] == scaled(jpeg::base_chroma_table()[i], q));
        }
    }
    CHECK(jpeg::quant_tables_for_quality(50).luma == jpeg::base_luma_table());
    // Spot values at quality 90: 16 * 20 / 100 = 3.2 -> 3, 99 * 0.2 = 19.8 -> 20.
    const auto q90 = jpeg::quant_tables_for_quality(90);
    CHECK(q90.luma[0] == 3);
    CHECK(q90.luma[63] == 20);
    CHECK(q90.chroma[0] == 3);  // 17 * 0.2 = 3.4
}

TEST_CASE("zigzag order is a permutation that walks anti-diagonals") {
    const auto& z = jpeg::zigzag_order();
    std::set<int> seen(z.begin(), z.end());
    CHECK(seen.size() == 64);
    const int head[10] = {0, 1, 8, 16, 9, 2, 3, 10, 17, 24};
    for (int k = 0; k < 10; ++k) CHECK(z[k] == head[k]);
    CHECK(z[63] == 63);
    for (int k = 1; k < 64; ++k) {
        const int a = z[k - 1] / 8 + z[k - 1] % 8, b = z[k] / 8 + z[k] % 8;
        CHECK((b == a || b == a + 1));
    }
}

TEST_CASE("dct basis is orthonormal and matches the cosine formula") {
    const auto& basis = jpeg::dct_basis();
    for (int u = 0; u < 8; ++u)
        for (int x = 0; x < 8; ++x) {
            const double c = u == 0 ? std::sqrt(0.5) : 1.0;
            CHECK(basis[u][x] == doctest::Approx(c / 2 * std::cos((2 * x + 1) * u * M_PI / 16)).epsilon(1e-14));
        }
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
            double dot = 0;
            for (int x = 0; x < 8; ++x) dot += basis[u][x] * basis[v][x];
            CHECK(dot == doctest::Approx(u == v ? 1.0 : 0.0).epsilon(1e-12));
        }
}

TEST_CASE("forward and inverse dct round-trip, constant block is pure DC") {
    Rng rng(1);
    std::uniform_real_distribution<double> u(-128, 127);
    std::array<double, 64> block{};
    for (double& v : block) v = u(rng);
    const auto back = jpeg::inverse_dct(jpeg::forward_dct(block));
    for (int i = 0; i < 64; ++i) CHECK(back[i] == doctest::Approx(block[i]).epsilon(1e-10));

    std::array<double, 64> flat{};
    flat.fill(10.0);
    const auto c = jpeg::forward_dct(flat);
    CHECK(c[0] == doctest::Approx(80.0));
    for (int i = 1; i < 64; ++i) CHECK(std::abs(c[i]) < 1e-12);
}

TEST_CASE("colour conversion is the JFIF matrix and inverts") {
    double y, cb, cr;
    jpeg::rgb_to_ycbcr(255, 255, 255, y, cb, cr);
    CHECK(y == doctest::Approx(255));
    CHECK(cb == doctest::Approx(128));
    CHECK(cr == doctest::Approx(128));
    jpeg::rgb_to_ycbcr(255, 0, 0, y, cb, cr);
    CHECK(y == doctest::Approx(76.245));
    CHECK(cr == doctest::Approx(255.5));
    double r, g, b;
    jpeg::ycbcr_to_rgb(y, cb, cr, r, g, b);
    CHECK(r == doctest::Approx(255).epsilon(1e-4));
    CHECK(g == doctest::Approx(0).epsilon(1e-4));
    CHECK(b == doctest::Approx(0).epsilon(1e-4));
}

TEST_CASE("golden streams from an external encoder decode bit-exactly") {
    for (const char* mode : {"444", "420"}) {
        CAPTURE(mode);
        const auto bytes = io::read_bytes(testing::data_dir() / (std::string("pil_q90_") + mode + ".jpg"));
        const auto want = io::read_png(testing::data_dir() / (std::string("pil_q90_") + mode + ".decoded.png"));
        CHECK(jpeg::decode(bytes) == want);
    }
}

TEST_CASE("encoder output is frozen and decodes to the frozen image") {
    const auto src = io::read_png(testing::data_dir() / "jpeg_src16.png");
    for (auto [mode, sub] : {std::pair{"444", ChromaSubsampling::k444}, std::pair{"420", ChromaSubsampling::k420}}) {
        CAPTURE(mode);
        const auto bytes = jpeg::encode(src, {90, sub});
        CHECK(bytes == io::read_bytes(testing::data_dir() / (std::string("own_q90_") + mode + ".jpg")));
        CHECK(jpeg::decode(bytes) == io::read_png(testing::data_dir() / (std::string("own_q90_") + mode + ".decoded.png")));
    }
}

TEST_CASE("stream structure: SOI, quality-dependent size, EOI") {
    Rng rng(2);
    const auto img = testing::random_image(rng, 24, 40, 3);
    const auto hi = jpeg::encode(img, {95, ChromaSubsampling::k444});
    const auto lo = jpeg::encode(img, {30, ChromaSubsampling::k420});
    CHECK(hi[0] == 0xFF);
    CHECK(hi[1] == 0xD8);
    CHECK(hi[hi.size() - 2] == 0xFF);
    CHECK(hi.back() == 0xD9);
    CHECK(lo.size() < hi.size());
    const auto dec = jpeg::decode_rgb8(lo);
    CHECK(dec.width == 40);
    CHECK(dec.height == 24);
}

TEST_CASE("random 64x64 images at quality 90 round-trip above 30 dB") {
    Rng rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        // Bilinear blow-up of a random 9x9 lattice.
        double lattice[9][9][3];
        for (auto& row : lattice)
            for (auto& px : row)
                for (double& v : px) v = u(rng);
        Image img(64, 64, 3);
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                const double gy = y / 8.0, gx = x / 8.0;
                const int y0 = static_cast<int>(gy), x0 = static_cast<int>(gx);
                const double fy = gy - y0, fx = gx - x0;
                for (int c = 0; c < 3; ++c)
                    img.at(y, x, c) = static_cast<float>(
                        (1 - fy) * ((1 - fx) * lattice[y0][x0][c] + fx * lattice[y0][x0 + 1][c]) +
                        fy * ((1 - fx) * lattice[y0 + 1][x0][c] + fx * lattice[y0 + 1][x0 + 1][c]));
            }
        img = quantize_8bit(img);
        for (auto sub : {ChromaSubsampling::k444, ChromaSubsampling::k420}) {
            CHECK(metrics::psnr(img, jpeg::decode(jpeg::encode(img, {90, sub}))) >= 30.0);
        }
    }
    // White noise survives only without chroma subsampling; libjpeg measures 29.97 dB on such an image.
    const auto noise = quantize_8bit(testing::random_image(rng, 64, 64, 3));
    CHECK(metrics::psnr(noise, jpeg::decode(jpeg::encode(noise, {90, ChromaSubsampling::k444}))) >= 29.5);
}

TEST_CASE("non multiple-of-16 sizes round-trip") {
    Image img(13, 21, 3);
    for (int y = 0; y < 13; ++y)
        for (int x = 0; x < 21; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = 0.2f + 0.02f * static_cast<float>(x + (c + 1) * y);
    img = quantize_8bit(img);
    for (auto sub : {ChromaSubsampling::k444, ChromaSubsampling::k420}) {
        const auto back = jpeg::decode(jpeg::encode(img, {100, sub}));
        REQUIRE(back.same_shape(img));
        CHECK(max_abs_diff(back, img) < (sub == ChromaSubsampling::k444 ? 3.0 : 20.0) / 255);
    }
}

TEST_CASE("malformed streams raise ParseError with an offset") {
    Rng rng(4);
    const auto bytes = jpeg::encode(testing::random_image(rng, 16, 16, 3));
    CHECK_THROWS_AS(jpeg::decode(std::vector<std::uint8_t>{}), jpeg::ParseError);
    CHECK_THROWS_AS(jpeg::decode(std::vector<std::uint8_t>{0x89, 0x50, 0x4E, 0x47}), jpeg::ParseError);
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2));
    try {
        jpeg::decode(cut);
        FAIL("truncated stream decoded");
    } catch (const jpeg::ParseError& e) {
        CHECK(e.offset() <= cut.size());
    }
}

TEST_CASE("luma coefficients are the quantized luma dct") {
    Rng rng(5);
    const auto img = quantize_8bit(testing::random_image(rng, 16, 8, 3));
    const auto q = jpeg::quant_tables_for_quality(90);
    const auto raw = jpeg::luma_dct(img);
    const auto quant = jpeg::luma_coefficients(img, {90, ChromaSubsampling::k444});
    REQUIRE(raw.size() == 2);
    REQUIRE(quant.size() == 2);
    for (std::size_t b = 0; b < 2; ++b)
        for (int i = 0; i < 64; ++i) CHECK(quant[b][i] == static_cast<int>(std::nearbyint(raw[b][i] / q.luma[i])));
}

TEST_CASE("simulated jpeg tracks the real codec") {
    Rng rng(6);
    for (auto sub : {ChromaSubsampling::k444, ChromaSubsampling::k420}) {
        for (int trial = 0; trial < 5; ++trial) {
            const auto img = quantize_8bit(testing::random_image(rng, 32, 48, 3));
            const auto real = jpeg::decode(jpeg::encode(img, {90, sub}));
            const auto sim = nn::to_image(nn::jpeg_simulate(nn::to_tensor(img, torch::kFloat64), {90, sub}));
            CHECK(max_abs_diff(real, sim) <= 1.0 / 255 + 1e-9);
        }
    }
}

TEST_CASE("simulated jpeg accepts batches and keeps the dtype") {
    auto x = torch::rand({2, 3, 16, 24});
    const auto y = nn::jpeg_simulate(x);
    CHECK(y.sizes() == x.sizes());
    CHECK((y.scalar_type() == torch::kFloat32));
    CHECK(torch::allclose(y[1], nn::jpeg_simulate(x[1])));
    CHECK_THROWS_AS(nn::jpeg_simulate(torch::rand({4, 16, 16})), ShapeError);
}

TEST_CASE("straight-through rounding has unit jacobian everywhere") {
    auto x = torch::rand({10000}, torch::kFloat64);
    // Include exact grid points and midpoints between them.
    x.narrow(0, 0, 256).copy_(torch::arange(256, torch::kFloat64) / 255.0);
    x.narrow(0, 256, 255).copy_((torch::arange(255, torch::kFloat64) + 0.5) / 255.0);
    x.requires_grad_(true);
    const auto y = nn::quantize_8bit(x);
    y.backward(torch::ones_like(y));
    CHECK(torch::equal(x.grad(), torch::ones_like(x)));
    CHECK(torch::equal(y.detach(), torch::round(x.detach() * 255) / 255));

    auto r = torch::randn({100}, torch::kFloat64).requires_grad_(true);
    nn::round_ste(r).backward(torch::ones({100}, torch::kFloat64));
    CHECK(torch::equal(r.grad(), torch::ones_like(r)));
}

TEST_CASE("smooth jpeg surrogate passes a finite-difference gradient check") {
    for (auto sub : {ChromaSubsampling::k444, ChromaSubsampling::k420}) {
        auto x = (0.25 + 0.5 * torch::rand({3, 16, 16}, torch::kFloat64)).requires_grad_(true);
        const auto w = torch::randn({3, 16, 16}, torch::kFloat64);
        const auto f = [&](const torch::Tensor& in) {
            return (nn::jpeg_simulate(in, {90, sub}, nn::Rounding::kNone) * w).sum();
        };
        f(x).backward();
        const auto grad = x.grad().clone();
        Rng rng(7);
        std::uniform_int_distribution<int64_t> pick(0, x.numel() - 1);
        torch::NoGradGuard guard;
        for (int k = 0; k < 20; ++k) {
            const auto i = pick(rng);
            auto xp = x.detach().clone(), xm = x.detach().clone();
            const double h = 1e-6;
            xp.view(-1)[i] += h;
            xm.view(-1)[i] -= h;
            const double fd = (f(xp).item<double>() - f(xm).item<double>()) / (2 * h);
            const double an = grad.view(-1)[i].item<double>();
            CHECK(std::abs(fd - an) <= 1e-3 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("straight-through gradient equals the surrogate gradient") {
    auto x = (0.25 + 0.5 * torch::rand({1, 3, 16, 16}, torch::kFloat64)).requires_grad_(true);
    const auto w = torch::randn({1, 3, 16, 16}, torch::kFloat64);
    (nn::jpeg_simulate(x) * w).sum().backward();
    const auto ste = x.grad().clone();
    x.grad().zero_();
    (nn::jpeg_simulate(x, {}, nn::Rounding::kNone) * w).sum().backward();
    CHECK(torch::allclose(ste, x.grad(), 1e-10, 1e-12));
}
