#pragma once

#include <vector>

#include <torch/torch.h>

#include <json.hpp>

#include "mpijpeg/mpi.hpp"

namespace mpijpeg::nn {

/// S = sum_i alpha_i * s_i. `features` is B x P x C x H x W, `alphas` is B x P x H x W.
torch::Tensor fuse_features(const torch::Tensor& features, const torch::Tensor& alphas);

struct EmbedderOptions {
    int planes = kNumPlanes;
    int branch_hidden = 16;
    int branch_out = 32;
    int branch_kernel = 3;  // kernel of the second per-plane layer (1 keeps it pointwise)
    int extractor_hidden = 16;
    int extractor_out = 32;
    int trunk = 64;
    int res_blocks = 4;
    int full_res = 64;  // channels of the last full-resolution conv before the head
};

struct RestorerOptions {
    int planes = kNumPlanes;
    int full_res = 32;  // channels of the full-resolution stem and output stage
    int trunk = 64;
    int res_blocks = 8;
};

struct DiscriminatorOptions {
    int base = 16;
    int layers = 4;
    int scales = 2;
};

struct PerceptualOptions {
    int base = 64;  // 64 reproduces the VGG19 widths (64, 128, 256, 512)
};

struct ResidualBlockImpl : torch::nn::Module {
    explicit ResidualBlockImpl(int channels);
    torch::Tensor forward(const torch::Tensor& x);
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Maps an MPI and its reference image to a 3-channel embedding image in (0,1).
struct EmbedderImpl : torch::nn::Module {
    explicit EmbedderImpl(const EmbedderOptions& options = {});
    /// mpi: B x P x 4 x H x W, reference: B x 3 x H x W; H and W multiples of 4.
    torch::Tensor forward(const torch::Tensor& mpi, const torch::Tensor& reference);

    /// Per-plane branch features s_i, B x P x C x H x W.
    torch::Tensor branch_features(const torch::Tensor& colors);

    EmbedderOptions options;
    // Per-plane branches run as grouped convolutions: group i only sees plane i's RGB.
    torch::nn::Conv2d branch1{nullptr}, branch2{nullptr};
    torch::nn::Conv2d alpha1{nullptr}, alpha2{nullptr};
    torch::nn::Conv2d ref1{nullptr}, ref2{nullptr};
    torch::nn::Conv2d down1{nullptr}, down2{nullptr};
    torch::nn::ModuleList blocks;
    torch::nn::Conv2d up1{nullptr}, up2{nullptr};
    torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(Embedder);

/// Recovers a B x P x 4 x H x W MPI in [0,1] from a B x 3 x H x W embedding (H, W multiples of 8).
/// The residual trunk runs at quarter resolution; skips join the half and full resolution stages.
struct RestorerImpl : torch::nn::Module {
    explicit RestorerImpl(const RestorerOptions& options = {});
    torch::Tensor forward(const torch::Tensor& embedding);

    RestorerOptions options;
    torch::nn::Conv2d stem{nullptr}, down1{nullptr}, down2{nullptr};
    torch::nn::ModuleList blocks;
    torch::nn::Conv2d flat{nullptr}, up1{nullptr}, up2{nullptr}, head{nullptr};
};
TORCH_MODULE(Restorer);

/// Multi-scale patch discriminator: one logit map per scale (full, half, ...).
struct DiscriminatorImpl : torch::nn::Module {
    explicit DiscriminatorImpl(const DiscriminatorOptions& options = {});
    std::vector<torch::Tensor> forward(const torch::Tensor& image);

    DiscriminatorOptions options;
    std::vector<torch::nn::Sequential> heads;
};
TORCH_MODULE(Discriminator);

/// Frozen VGG19-style feature stack; returns the activations after the last ReLU of each of the
/// first four stages (relu1_2, relu2_2, relu3_4, relu4_4). Parameter names follow torchvision's
/// `features.<index>` layout.
struct PerceptualImpl : torch::nn::Module {
    explicit PerceptualImpl(const PerceptualOptions& options = {});
    std::vector<torch::Tensor> forward(const torch::Tensor& image);
    void freeze();

    PerceptualOptions options;
    torch::nn::Sequential features;
    std::vector<int64_t> taps;
};
TORCH_MODULE(Perceptual);

nlohmann::json to_json(const EmbedderOptions& o);
nlohmann::json to_json(const RestorerOptions& o);
nlohmann::json to_json(const DiscriminatorOptions& o);
nlohmann::json to_json(const PerceptualOptions& o);
void from_json(const nlohmann::json& j, EmbedderOptions& o);
void from_json(const nlohmann::json& j, RestorerOptions& o);
void from_json(const nlohmann::json& j, DiscriminatorOptions& o);
void from_json(const nlohmann::json& j, PerceptualOptions& o);

}  // namespace mpijpeg::nn
