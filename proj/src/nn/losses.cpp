#include "mpijpeg/nn/losses.hpp"

#include <stdexcept>

#include "mpijpeg/nn/diff_render.hpp"

namespace mpijpeg::nn {

namespace F = torch::nn::functional;

void LossWeights::validate() const {
    for (double v : {reg, perceptual, freq, restore, render, rgb, render_mse, render_perceptual, adversarial}) {
        if (!(v >= 0.0)) throw std::invalid_argument("LossWeights: weights must be non-negative");
    }
}

nlohmann::json to_json(const LossWeights& w) {
    return {{"reg", w.reg},         {"perceptual", w.perceptual}, {"freq", w.freq},
            {"restore", w.restore}, {"render", w.render},         {"rgb", w.rgb},
            {"render_mse", w.render_mse}, {"render_perceptual", w.render_perceptual},
            {"adversarial", w.adversarial}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
    w.reg = j.value("reg", w.reg);
    w.perceptual = j.value("perceptual", w.perceptual);
    w.freq = j.value("freq", w.freq);
    w.restore = j.value("restore", w.restore);
    w.render = j.value("render", w.render);
    w.rgb = j.value("rgb", w.rgb);
    w.render_mse = j.value("render_mse", w.render_mse);
    w.render_perceptual = j.value("render_perceptual", w.render_perceptual);
    w.adversarial = j.value("adversarial", w.adversarial);
}

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (a.sizes() != b.sizes()) throw ShapeError(std::string(what) + ": shape mismatch");
}

}  // namespace

torch::Tensor loss_reg(const torch::Tensor& embedding, const torch::Tensor& reference) {
    require_same_shape(embedding, reference, "loss_reg");
    return (embedding - reference).square().mean();
}

torch::Tensor loss_freq(const torch::Tensor& embedding, const torch::Tensor& reference) {
    require_same_shape(embedding, reference, "loss_freq");
    auto spectrum = torch::fft::fft2(embedding - reference, c10::nullopt, {-2, -1}, "ortho");
    return torch::abs(spectrum).square().mean();
}

torch::Tensor loss_perceptual(const torch::Tensor& a, const torch::Tensor& b, const FeatureFn& features) {
    require_same_shape(a, b, "loss_perceptual");
    const auto fa = features(a), fb = features(b);
    auto total = torch::zeros({}, a.options());
    for (std::size_t j = 0; j < fa.size(); ++j) total = total + (fa[j] - fb[j]).abs().mean();
    return total;
}

torch::Tensor loss_restore(const torch::Tensor& restored, const torch::Tensor& truth, double lambda_rgb) {
    require_same_shape(restored, truth, "loss_restore");
    if (truth.dim() < 4 || truth.size(-3) != kPlaneChannels) throw ShapeError("loss_restore: expected (B x) P x 4 x H x W");
    const int64_t plane_dim = truth.dim() - 4;
    const auto r = restored.split_with_sizes({3, 1}, -3), t = truth.split_with_sizes({3, 1}, -3);
    auto color_err = ((r[0] - t[0]) * t[1]).square();
    auto alpha_err = (r[1] - t[1]).square();
    // Mean within each plane (over batch, channels and pixels), then sum over planes.
    std::vector<int64_t> reduce;
    for (int64_t d = 0; d < truth.dim(); ++d) {
        if (d != plane_dim) reduce.push_back(d);
    }
    return (lambda_rgb * color_err.mean(reduce) + alpha_err.mean(reduce)).sum();
}

RenderLoss loss_render(const torch::Tensor& restored, const torch::Tensor& truth, const std::vector<double>& depths,
                       const std::vector<RelativePose>& poses, const std::vector<CameraModel>& cams,
                       const FeatureFn& features, double lambda_mse, double lambda_perceptual) {
    require_same_shape(restored, truth, "loss_render");
    if (restored.dim() != 5 || restored.size(2) != kPlaneChannels) throw ShapeError("loss_render: expected B x P x 4 x H x W");
    const auto b = restored.size(0);
    if (static_cast<int64_t>(poses.size()) != b || static_cast<int64_t>(cams.size()) != b) {
        throw ShapeError("loss_render: need one pose and one camera per batch item");
    }
    // Both stacks share the per-plane sampling pattern, so warp them together.
    const auto restored_items = restored.unbind(0), truth_items = truth.unbind(0);
    std::vector<torch::Tensor> views, targets;
    for (std::size_t i = 0; i < restored_items.size(); ++i) {
        auto warped = warp_planes(torch::cat({restored_items[i], truth_items[i]}, 1), depths, poses[i], cams[i]);
        const auto halves = warped.split(kPlaneChannels, 1);
        views.push_back(composite(halves[0]));
        targets.push_back(composite(halves[1]));
    }
    const auto view = torch::stack(views);
    const auto target = torch::stack(targets);
    RenderLoss out;
    out.mse = (view - target).square().mean();
    out.perceptual = features ? loss_perceptual(view, target, features) : torch::zeros({}, view.options());
    out.total = lambda_mse * out.mse + lambda_perceptual * out.perceptual;
    return out;
}

torch::Tensor loss_adversarial_d(const std::vector<torch::Tensor>& real_logits,
                                 const std::vector<torch::Tensor>& fake_logits) {
    if (real_logits.size() != fake_logits.size() || real_logits.empty()) {
        throw ShapeError("loss_adversarial_d: scale count mismatch");
    }
    torch::Tensor total;
    for (std::size_t s = 0; s < real_logits.size(); ++s) {
        // -log sigmoid(x) = softplus(-x), -log(1 - sigmoid(x)) = softplus(x)
        auto term = F::softplus(-real_logits[s]).mean() + F::softplus(fake_logits[s]).mean();
        total = s == 0 ? term : total + term;
    }
    return total / static_cast<double>(real_logits.size());
}

torch::Tensor loss_adversarial_g(const std::vector<torch::Tensor>& fake_logits) {
    if (fake_logits.empty()) throw ShapeError("loss_adversarial_g: no logit maps");
    torch::Tensor total;
    for (std::size_t s = 0; s < fake_logits.size(); ++s) {
        auto term = F::softplus(-fake_logits[s]).mean();
        total = s == 0 ? term : total + term;
    }
    return total / static_cast<double>(fake_logits.size());
}

torch::Tensor loss_total_g(const GeneratorTerms& t, const LossWeights& w) {
    torch::Tensor total;
    auto add = [&](const torch::Tensor& term, double weight) {
        if (!term.defined()) return;
        total = total.defined() ? total + weight * term : weight * term;
    };
    add(t.reg, w.reg);
    add(t.perceptual, w.perceptual);
    add(t.freq, w.freq);
    add(t.restore, w.restore);
    add(t.render, w.render);
    add(t.adversarial, w.adversarial);
    return total.defined() ? total : torch::zeros({});
}

}  // namespace mpijpeg::nn
