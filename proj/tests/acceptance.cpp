// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the number of failures.

#include <torch/torch.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gradcheck.hpp"
#include "mpijpeg/io.hpp"
#include "mpijpeg/jpeg.hpp"
#include "mpijpeg/metrics.hpp"
#include "mpijpeg/nn/diff_jpeg.hpp"
#include "mpijpeg/nn/diff_render.hpp"
#include "mpijpeg/nn/losses.hpp"
#include "mpijpeg/nn/model.hpp"
#include "mpijpeg/nn/tensor.hpp"
#include "mpijpeg/nn/train.hpp"
#include "mpijpeg/synthetic.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mpijpeg;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
    std::printf("%s  %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename... Args>
std::string fmt(const char* f, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void jpeg_forward_equivalence() {
    const auto t0 = Clock::now();
    Rng rng(101);
    double worst = 0.0;
    for (auto sub : {jpeg::ChromaSubsampling::k444, jpeg::ChromaSubsampling::k420}) {
        for (int i = 0; i < 50; ++i) {
            const auto img = quantize_8bit(testing::random_image(rng, 64, 64, 3));
            const auto real = jpeg::decode(jpeg::encode(img, {90, sub}));
            const auto sim = nn::to_image(nn::jpeg_simulate(nn::to_tensor(img, torch::kFloat64), {90, sub}));
            worst = std::max(worst, max_abs_diff(real, sim));
        }
    }
    const double t = seconds_since(t0);
    report("JPEG forward equivalence", worst <= 1.0 / 255 + 1e-9 && t < 60,
           fmt("max |simulate - decode(encode)| = %.3f/255 over 2x50 images, %.1f s", worst * 255, t));
}

void straight_through() {
    auto x = torch::rand({10000}, torch::kFloat64);
    x.narrow(0, 0, 256).copy_(torch::arange(256, torch::kFloat64) / 255.0);
    x.narrow(0, 256, 255).copy_((torch::arange(255, torch::kFloat64) + 0.5) / 255.0);
    x.requires_grad_(true);
    const auto y = nn::quantize_8bit(x);
    y.backward(torch::ones_like(y));
    const bool ones = torch::equal(x.grad(), torch::ones_like(x));
    const bool rounded = torch::equal(y.detach(), torch::round(x.detach() * 255) / 255);
    report("Straight-through contract", ones && rounded,
           fmt("jacobian == 1 on %d probes (%d grid points, %d midpoints): %s", 10000, 256, 255, ones ? "yes" : "no"));
}

void jpeg_conformance() {
    bool ok = true;
    std::string detail;
    for (const char* mode : {"444", "420"}) {
        const auto dir = testing::data_dir();
        const bool ext = jpeg::decode(io::read_bytes(dir / (std::string("pil_q90_") + mode + ".jpg"))) ==
                         io::read_png(dir / (std::string("pil_q90_") + mode + ".decoded.png"));
        const auto src = io::read_png(dir / "jpeg_src16.png");
        const auto bytes = jpeg::encode(src, {90, mode == std::string("444") ? jpeg::ChromaSubsampling::k444
                                                                             : jpeg::ChromaSubsampling::k420});
        const bool own = bytes == io::read_bytes(dir / (std::string("own_q90_") + mode + ".jpg")) &&
                         jpeg::decode(bytes) == io::read_png(dir / (std::string("own_q90_") + mode + ".decoded.png"));
        ok = ok && ext && own;
        detail += fmt("%s external %s, own %s; ", mode, ext ? "bit-exact" : "MISMATCH", own ? "bit-exact" : "MISMATCH");
    }
    report("JPEG conformance", ok, detail + "external-decoder check frozen in tests/data");
}

void render_oracle() {
    const auto t0 = Clock::now();
    Rng rng(202);
    std::uniform_real_distribution<double> t(-0.3, 0.3), r(-5.0, 5.0);
    const auto cam = CameraModel::for_size(16, 16);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto mpi = testing::random_stack(rng, 16, 16);
        const auto pose = RelativePose::from_euler_deg(t(rng), t(rng), t(rng), r(rng), r(rng), r(rng));
        worst = std::max(worst, max_abs_diff(render_novel_view(mpi, pose, cam), testing::render_oracle(mpi, pose, cam)));
    }
    const double s = seconds_since(t0);
    report("Render oracle", worst <= 1e-5 && s < 60, fmt("max abs %.2e over 20 random 16x16 RGBA stacks, %.1f s", worst, s));
}

void compositing_oracle() {
    Rng rng(303);
    std::uniform_int_distribution<int> side(1, 5);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Image> planes;
        const int h = side(rng), w = side(rng);
        for (int i = 0; i < kNumPlanes; ++i) planes.push_back(testing::random_image(rng, h, w, 4));
        worst = std::max(worst, max_abs_diff(composite(MpiStack(planes, default_depths())), testing::composite_oracle(planes)));
    }
    report("Compositing oracle", worst <= 1e-6, fmt("max abs %.2e over 100 stacks", worst));
}

void loss_suite() {
    const auto f64 = torch::TensorOptions().dtype(torch::kFloat64);
    torch::manual_seed(404);
    using testing::toy_features;
    using testing::worst_relative_error;

    const auto img = torch::rand({2, 3, 8, 8}, f64);
    const auto mpi = torch::rand({2, 3, 4, 8, 8}, f64);
    const auto pose = RelativePose::from_euler_deg(0.1, 0, 0, 0, 2, 0);
    const auto cam8 = CameraModel::for_size(8, 8);
    double zero = 0.0;
    for (double v : {nn::loss_reg(img, img).item<double>(), nn::loss_freq(img, img).item<double>(),
                     nn::loss_perceptual(img, img, toy_features).item<double>(),
                     nn::loss_restore(mpi, mpi, 10.0).item<double>(),
                     nn::loss_render(mpi, mpi, {6.0, 3.0, 1.5}, {pose, pose}, {cam8, cam8}, toy_features, 100, 15)
                         .total.item<double>()})
        zero = std::max(zero, std::abs(v));

    const auto ref = torch::rand({1, 3, 4, 4}, f64);
    const auto truth = torch::rand({1, 2, 4, 4, 4}, f64);
    const auto p4 = RelativePose::from_euler_deg(0.13, -0.07, 0.05, 1.5, -2.0, 0.5);
    const auto cam4 = CameraModel::for_size(4, 4);
    const double fd_freq =
        worst_relative_error([&](const torch::Tensor& x) { return nn::loss_freq(x, ref); }, torch::rand({1, 3, 4, 4}, f64));
    const double fd_restore = worst_relative_error(
        [&](const torch::Tensor& x) { return nn::loss_restore(x, truth, 10.0); }, torch::rand({1, 2, 4, 4, 4}, f64));
    const double fd_render = worst_relative_error(
        [&](const torch::Tensor& x) {
            return nn::loss_render(x, truth, {6.0, 1.5}, {p4}, {cam4}, toy_features, 100, 15).total;
        },
        torch::rand({1, 2, 4, 4, 4}, f64));

    double parseval = 0.0;
    for (int i = 0; i < 5; ++i) {
        const auto a = torch::rand({2, 3, 12, 10}, f64), b = torch::rand({2, 3, 12, 10}, f64);
        parseval = std::max(parseval, std::abs(nn::loss_freq(a, b).item<double>() - nn::loss_reg(a, b).item<double>()));
    }

    const auto one = torch::ones({}, f64);
    const nn::LossWeights w;
    const double adv = 0.7;
    const double unit = nn::loss_total_g({one, one, one, one, one, torch::full({}, adv, f64)}, w).item<double>();
    const bool weighted = std::abs(unit - (45.003 + adv)) <= 1e-12;

    const double fd = std::max({fd_freq, fd_restore, fd_render});
    report("Loss suite", zero == 0.0 && fd <= 1e-3 && parseval <= 1e-6 && weighted,
           fmt("identical inputs max %.1e; fd rel err freq %.1e restore %.1e render %.1e; parseval %.1e; unit sum %.6f "
               "(45.003 + %.1f)",
               zero, fd_freq, fd_restore, fd_render, parseval, unit, adv));
}

void capacity() {
    std::ifstream in(MPIJPEG_README);
    std::stringstream ss;
    ss << in.rdbuf();
    const bool doc = ss.str().find("32×4×8 = 1024 bits per pixel") != std::string::npos;
    report("Capacity arithmetic", doc && kBitsPerPixel == 32 * 4 * 8 && kBitsPerPixel == 1024,
           fmt("%d planes x %d channels x %d bits = %d bits per pixel; README %s", kNumPlanes, kPlaneChannels,
               kBitsPerChannel, kBitsPerPixel, doc ? "states it" : "does not state it"));
}

void metrics_suite() {
    Rng rng(505);
    const auto a = testing::random_image(rng, 32, 32, 3);
    const bool caps = metrics::psnr(a, a) == 100.0 && std::abs(metrics::ssim(a, a) - 1.0) < 1e-12;
    const Image g(12, 12, 3, 0.5f);
    Image h(12, 12, 3, 0.5f);
    for (float& v : h.data()) v += 0.01f;
    const double p40 = metrics::psnr(g, h);

    std::ifstream in(testing::data_dir() / "ssim_cases.json");
    const auto cases = nlohmann::json::parse(in);
    double worst = 0.0;
    for (const auto& c : cases) {
        const auto x = io::read_png(testing::data_dir() / c.at("a").get<std::string>());
        const auto y = io::read_png(testing::data_dir() / c.at("b").get<std::string>());
        worst = std::max(worst, std::abs(metrics::ssim(x, y) - c.at("ssim").get<double>()));
    }
    report("Metrics", caps && std::abs(p40 - 40.0) < 1e-3 && worst <= 1e-4,
           fmt("identical -> 100 dB / 1.0: %s; mse 1e-4 -> %.4f dB; ssim vs independent oracle max diff %.1e on %zu cases",
               caps ? "yes" : "no", p40, worst, cases.size()));
}

void desk(const fs::path& config_path, const std::string& load, const std::string& save, double budget_s) {
    std::ifstream f(config_path);
    auto cfg = nn::train_config_from_json(nlohmann::json::parse(f));
    cfg.validate();
    nn::Trainer trainer(cfg, nn::scenes_for(cfg));

    const auto t0 = Clock::now();
    if (!load.empty()) {
        trainer.load(load);
    } else {
        while (trainer.steps_done() < cfg.steps && seconds_since(t0) < budget_s) {
            const auto r = trainer.step();
            if (r.step % 100 == 0)
                std::printf("      step %lld  %.0f s  embed %.2f dB  render %.2f dB\n", static_cast<long long>(r.step),
                            seconds_since(t0), r.embed_psnr, r.render_psnr),
                    std::fflush(stdout);
        }
        if (!save.empty()) trainer.save(save);
    }
    const double train_s = seconds_since(t0);

    auto codec = trainer.codec();
    const std::vector<RelativePose> identity{RelativePose::identity()};
    nn::TorchSceneModel exact(codec, {nn::CodecMode::kBitExact, cfg.jpeg, {}});
    nn::TorchSceneModel simulated(codec, {nn::CodecMode::kSimulated, cfg.jpeg, {}});
    Rng rng(cfg.seed + 1000);
    double ep = 0, rp = 0, rp_sim = 0, clean = 0, perturbed = 0;
    int draws = 0;
    const int n = cfg.synthetic_scenes;
    for (int i = 1; i <= n; ++i) {
        const auto s = generate_synthetic_scene(cfg.seed + static_cast<std::uint64_t>(i), cfg.width, cfg.height);
        const auto e = metrics::eval_scene(exact, s.mpi, s.reference, s.camera, identity);
        ep += e.embedding.psnr / n;
        rp += e.render.psnr / n;
        rp_sim += metrics::eval_scene(simulated, s.mpi, s.reference, s.camera, identity).render.psnr / n;
        for (int k = 0; k < 4; ++k, ++draws) {
            const auto r = nn::robustness_scores(codec, s.mpi, s.reference, s.camera, cfg.jpeg, cfg.perturb, rng, identity);
            clean += r.clean.psnr;
            perturbed += r.perturbed.psnr;
        }
    }
    clean /= draws;
    perturbed /= draws;
    const double total_s = seconds_since(t0);
    const long long steps = static_cast<long long>(trainer.steps_done());
    report("Desk-scale overfit", ep >= 28 && rp >= 28 && std::abs(rp - rp_sim) < 0.5 && steps <= 5000 && total_s <= 1800,
           fmt("%lld steps, %.0f s training + eval %.0f s; embedding %.2f dB, identity render %.2f dB (bit-exact), "
               "%.2f dB (simulated), delta %.3f dB",
               steps, train_s, total_s - train_s, ep, rp, rp_sim, std::abs(rp - rp_sim)));
    report("Robustness", clean - perturbed <= 3.0,
           fmt("identity render %.2f dB clean, %.2f dB after jitter + crop (%d draws), drop %.2f dB", clean, perturbed,
               draws, clean - perturbed));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance suite"};
    bool skip_desk = false;
    std::string config = MPIJPEG_DESK_CONFIG, load, save;
    double budget = 1620;
    app.add_flag("--skip-desk", skip_desk, "Skip the training run and the criteria that depend on it");
    app.add_option("--config", config, "Desk training config");
    app.add_option("--load", load, "Evaluate this checkpoint instead of training");
    app.add_option("--save", save, "Write the trained checkpoint here");
    app.add_option("--budget", budget, "Training wall-clock budget in seconds");
    CLI11_PARSE(app, argc, argv);
    torch::set_num_threads(1);

    jpeg_forward_equivalence();
    straight_through();
    jpeg_conformance();
    render_oracle();
    compositing_oracle();
    loss_suite();
    capacity();
    if (!skip_desk) desk(config, load, save, budget);
    metrics_suite();
    std::printf("%d failed\n", failures);
    return failures;
}
