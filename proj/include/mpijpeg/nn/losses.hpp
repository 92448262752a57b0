#pragma once

#include <vector>

#include <torch/torch.h>

#include <json.hpp>

#include "mpijpeg/mpi.hpp"
#include "mpijpeg/nn/nets.hpp"

namespace mpijpeg::nn {

struct LossWeights {
    double reg = 8.0;          // lambda_1
    double perceptual = 6.0;   // lambda_2
    double freq = 0.003;       // lambda_3
    double restore = 30.0;     // lambda_4
    double render = 1.0;       // lambda_5
    double rgb = 10.0;         // color term inside the restoration loss
    double render_mse = 100.0;
    double render_perceptual = 15.0;
    double adversarial = 1.0;  // generator adversarial term in min_G (max_D L_D + L_G)

    void validate() const;
};

nlohmann::json to_json(const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

/// Feature extractor used by the perceptual terms.
using FeatureFn = std::function<std::vector<torch::Tensor>(const torch::Tensor&)>;

/// Mean squared error over every element.
torch::Tensor loss_reg(const torch::Tensor& embedding, const torch::Tensor& reference);

/// Mean over channels and frequency bins of |FFT(a) - FFT(b)|^2 with the orthonormal 2-D DFT.
/// By Parseval this equals loss_reg exactly.
torch::Tensor loss_freq(const torch::Tensor& embedding, const torch::Tensor& reference);

/// sum_j mean |phi_j(a) - phi_j(b)|.
torch::Tensor loss_perceptual(const torch::Tensor& a, const torch::Tensor& b, const FeatureFn& features);

/// Per-plane lambda_rgb * mean((c~ - c) * alpha)^2 + mean(alpha~ - alpha)^2, summed over planes.
/// Inputs are (B x) P x 4 x H x W; alpha is the ground-truth alpha.
torch::Tensor loss_restore(const torch::Tensor& restored, const torch::Tensor& truth, double lambda_rgb);

struct RenderLoss {
    torch::Tensor total;
    torch::Tensor mse;
    torch::Tensor perceptual;
};

/// Renders both B x P x 4 x H x W stacks at the same poses and compares them.
/// An empty `features` skips the perceptual term.
RenderLoss loss_render(const torch::Tensor& restored, const torch::Tensor& truth, const std::vector<double>& depths,
                       const std::vector<RelativePose>& poses, const std::vector<CameraModel>& cams,
                       const FeatureFn& features, double lambda_mse, double lambda_perceptual);

/// Negated discriminator objective: per-patch binary cross-entropy, real -> 1 and fake -> 0,
/// averaged over patches then over scales.
torch::Tensor loss_adversarial_d(const std::vector<torch::Tensor>& real_logits,
                                 const std::vector<torch::Tensor>& fake_logits);

/// Non-saturating generator term: mean of -log sigmoid(fake), averaged over scales.
torch::Tensor loss_adversarial_g(const std::vector<torch::Tensor>& fake_logits);

struct GeneratorTerms {
    torch::Tensor reg, perceptual, freq, restore, render, adversarial;
};

/// lambda_1 reg + lambda_2 perceptual + lambda_3 freq + lambda_4 restore + lambda_5 render
/// + adversarial weight * adversarial. Undefined terms count as zero.
torch::Tensor loss_total_g(const GeneratorTerms& terms, const LossWeights& weights);

}  // namespace mpijpeg::nn
