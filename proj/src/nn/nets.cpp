#include "mpijpeg/nn/nets.hpp"

namespace mpijpeg::nn {

namespace F = torch::nn::functional;
using torch::nn::Conv2d;
using torch::nn::Conv2dOptions;

namespace {

Conv2d conv3x3(int in, int out, int stride = 1, int groups = 1) {
    return Conv2d(Conv2dOptions(in, out, 3).stride(stride).padding(1).groups(groups));
}

constexpr double kLogitEps = 1e-3;

// Small output weights keep the initial output close to the residual's base.
void shrink_init(Conv2d& conv) {
    torch::NoGradGuard guard;
    conv->weight.mul_(0.01);
    conv->bias.zero_();
}

torch::Tensor act(const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)); }

torch::Tensor upsample_to(const torch::Tensor& x, const torch::Tensor& like) {
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{like.size(2), like.size(3)})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
}

}  // namespace

torch::Tensor fuse_features(const torch::Tensor& features, const torch::Tensor& alphas) {
    if (features.dim() != 5 || alphas.dim() != 4 || features.size(0) != alphas.size(0) ||
        features.size(1) != alphas.size(1) || features.size(3) != alphas.size(2) || features.size(4) != alphas.size(3)) {
        throw ShapeError("fuse_features: expected B x P x C x H x W features and B x P x H x W alphas");
    }
    return (features * alphas.unsqueeze(2)).sum(1);
}

ResidualBlockImpl::ResidualBlockImpl(int channels)
    : conv1(register_module("conv1", conv3x3(channels, channels))),
      conv2(register_module("conv2", conv3x3(channels, channels))) {}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) { return x + conv2(act(conv1(x))); }

EmbedderImpl::EmbedderImpl(const EmbedderOptions& o) : options(o) {
    const int p = o.planes;
    branch1 = register_module("branch1", conv3x3(3 * p, o.branch_hidden * p, 1, p));
    if (o.branch_kernel != 1 && o.branch_kernel != 3) throw std::invalid_argument("embedder: branch_kernel must be 1 or 3");
    branch2 = register_module("branch2", Conv2d(Conv2dOptions(o.branch_hidden * p, o.branch_out * p, o.branch_kernel)
                                                    .padding(o.branch_kernel / 2)
                                                    .groups(p)));
    alpha1 = register_module("alpha1", conv3x3(p, o.extractor_hidden));
    alpha2 = register_module("alpha2", conv3x3(o.extractor_hidden, o.extractor_out));
    ref1 = register_module("ref1", conv3x3(3, o.extractor_hidden));
    ref2 = register_module("ref2", conv3x3(o.extractor_hidden, o.extractor_out));
    const int fused = o.branch_out + 2 * o.extractor_out;
    down1 = register_module("down1", conv3x3(fused, o.trunk, 2));
    down2 = register_module("down2", conv3x3(o.trunk, o.trunk, 2));
    blocks = register_module("blocks", torch::nn::ModuleList());
    for (int i = 0; i < o.res_blocks; ++i) blocks->push_back(ResidualBlock(o.trunk));
    up1 = register_module("up1", conv3x3(2 * o.trunk, o.trunk));
    up2 = register_module("up2", conv3x3(o.trunk + fused, o.full_res));
    head = register_module("head", conv3x3(o.full_res, 3));
    shrink_init(head);
}

torch::Tensor EmbedderImpl::branch_features(const torch::Tensor& colors) {
    const auto b = colors.size(0), h = colors.size(3), w = colors.size(4);
    auto x = colors.reshape({b, options.planes * 3, h, w});
    x = act(branch2(act(branch1(x))));
    return x.reshape({b, options.planes, options.branch_out, h, w});
}

torch::Tensor EmbedderImpl::forward(const torch::Tensor& mpi, const torch::Tensor& reference) {
    if (mpi.dim() != 5 || mpi.size(1) != options.planes || mpi.size(2) != kPlaneChannels) {
        throw ShapeError("embed: expected B x P x 4 x H x W MPI with P = " + std::to_string(options.planes));
    }
    if (reference.dim() != 4 || reference.size(1) != 3 || reference.size(0) != mpi.size(0) ||
        reference.size(2) != mpi.size(3) || reference.size(3) != mpi.size(4)) {
        throw ShapeError("embed: reference must be B x 3 x H x W matching the MPI");
    }
    if (mpi.size(3) % 4 != 0 || mpi.size(4) % 4 != 0) throw ShapeError("embed: H and W must be multiples of 4");

    auto s_rgb = fuse_features(branch_features(mpi.narrow(2, 0, 3)), mpi.select(2, 3));
    auto s_alpha = act(alpha2(act(alpha1(mpi.select(2, 3)))));
    auto s_ref = act(ref2(act(ref1(reference))));
    auto fused = torch::cat({s_rgb, s_alpha, s_ref}, 1);

    auto d1 = act(down1(fused));
    auto x = act(down2(d1));
    for (const auto& block : *blocks) x = block->as<ResidualBlock>()->forward(x);
    x = act(up1(torch::cat({upsample_to(x, d1), d1}, 1)));
    x = act(up2(torch::cat({upsample_to(x, fused), fused}, 1)));
    // Residual in logit space around the reference: a fresh network embeds nothing and
    // reproduces the reference.
    return torch::sigmoid(torch::logit(reference, kLogitEps) + head(x));
}

RestorerImpl::RestorerImpl(const RestorerOptions& o) : options(o) {
    stem = register_module("stem", conv3x3(3, o.full_res));
    down1 = register_module("down1", conv3x3(o.full_res, o.trunk, 2));
    down2 = register_module("down2", conv3x3(o.trunk, o.trunk, 2));
    blocks = register_module("blocks", torch::nn::ModuleList());
    for (int i = 0; i < o.res_blocks; ++i) blocks->push_back(ResidualBlock(o.trunk));
    flat = register_module("flat", conv3x3(o.trunk, o.trunk));
    up1 = register_module("up1", conv3x3(2 * o.trunk, o.trunk));
    up2 = register_module("up2", conv3x3(o.trunk + o.full_res, o.full_res));
    head = register_module("head", Conv2d(Conv2dOptions(o.full_res, o.planes * kPlaneChannels, 1)));
    shrink_init(head);
}

torch::Tensor RestorerImpl::forward(const torch::Tensor& embedding) {
    if (embedding.dim() != 4 || embedding.size(1) != 3) throw ShapeError("restore: expected B x 3 x H x W");
    const auto b = embedding.size(0), h = embedding.size(2), w = embedding.size(3);
    if (h % 8 != 0 || w % 8 != 0 || h == 0 || w == 0) throw ShapeError("restore: H and W must be multiples of 8");
    auto f0 = act(stem(embedding));
    auto f1 = act(down1(f0));
    auto d = act(down2(f1));
    auto x = d;
    for (const auto& block : *blocks) x = block->as<ResidualBlock>()->forward(x);
    x = act(flat(x)) + d;
    x = act(up1(torch::cat({upsample_to(x, f1), f1}, 1)));
    x = act(up2(torch::cat({upsample_to(x, f0), f0}, 1)));
    // Plane colors start from the received image, alphas from 0.5.
    auto logits = head(x).reshape({b, options.planes, kPlaneChannels, h, w});
    auto parts = logits.split_with_sizes({3, 1}, 2);
    auto colors = torch::sigmoid(parts[0] + torch::logit(embedding, kLogitEps).unsqueeze(1));
    return torch::cat({colors, torch::sigmoid(parts[1])}, 2);
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorOptions& o) : options(o) {
    for (int s = 0; s < o.scales; ++s) {
        torch::nn::Sequential seq;
        int in = 3, width = o.base;
        for (int l = 0; l < o.layers; ++l) {
            seq->push_back(Conv2d(Conv2dOptions(in, width, 4).stride(2).padding(1)));
            seq->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)));
            in = width;
            width *= 2;
        }
        seq->push_back(Conv2d(Conv2dOptions(in, 1, 3).padding(1)));
        heads.push_back(register_module("scale" + std::to_string(s), seq));
    }
}

std::vector<torch::Tensor> DiscriminatorImpl::forward(const torch::Tensor& image) {
    if (image.dim() != 4 || image.size(1) != 3) throw ShapeError("discriminate: expected B x 3 x H x W");
    if (image.size(2) < 64 || image.size(3) < 64) throw ShapeError("discriminate: input must be at least 64x64");
    std::vector<torch::Tensor> out;
    auto x = image;
    for (std::size_t s = 0; s < heads.size(); ++s) {
        if (s > 0) {
            x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(3).stride(2).padding(1).count_include_pad(false));
        }
        out.push_back(heads[s]->forward(x));
    }
    return out;
}

PerceptualImpl::PerceptualImpl(const PerceptualOptions& o) : options(o) {
    const int convs_per_stage[4] = {2, 2, 4, 4};
    int in = 3;
    for (int stage = 0; stage < 4; ++stage) {
        if (stage > 0) features->push_back(torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2).stride(2)));
        const int width = o.base << stage;
        for (int c = 0; c < convs_per_stage[stage]; ++c) {
            features->push_back(conv3x3(in, width));
            features->push_back(torch::nn::ReLU());
            in = width;
        }
        taps.push_back(static_cast<int64_t>(features->size()) - 1);
    }
    register_module("features", features);
    freeze();
}

void PerceptualImpl::freeze() {
    for (auto& p : parameters()) p.set_requires_grad(false);
}

std::vector<torch::Tensor> PerceptualImpl::forward(const torch::Tensor& image) {
    if (image.dim() != 4 || image.size(1) != 3) throw ShapeError("perceptual_features: expected B x 3 x H x W");
    auto opts = torch::TensorOptions().dtype(image.scalar_type());
    const auto mean = torch::tensor({0.485, 0.456, 0.406}, opts).view({1, 3, 1, 1});
    const auto stdev = torch::tensor({0.229, 0.224, 0.225}, opts).view({1, 3, 1, 1});
    auto x = (image - mean) / stdev;
    std::vector<torch::Tensor> out;
    std::size_t next = 0;
    int64_t i = 0;
    for (auto& layer : *features) {
        x = layer.forward(x);
        if (next < taps.size() && i == taps[next]) {
            out.push_back(x);
            ++next;
        }
        ++i;
    }
    return out;
}

nlohmann::json to_json(const EmbedderOptions& o) {
    return {{"planes", o.planes}, {"branch_hidden", o.branch_hidden}, {"branch_out", o.branch_out},
            {"branch_kernel", o.branch_kernel}, {"extractor_hidden", o.extractor_hidden},
            {"extractor_out", o.extractor_out}, {"trunk", o.trunk},
            {"res_blocks", o.res_blocks}, {"full_res", o.full_res}};
}
nlohmann::json to_json(const RestorerOptions& o) {
    return {{"planes", o.planes}, {"full_res", o.full_res}, {"trunk", o.trunk}, {"res_blocks", o.res_blocks}};
}
nlohmann::json to_json(const DiscriminatorOptions& o) {
    return {{"base", o.base}, {"layers", o.layers}, {"scales", o.scales}};
}
nlohmann::json to_json(const PerceptualOptions& o) { return {{"base", o.base}}; }

void from_json(const nlohmann::json& j, EmbedderOptions& o) {
    o.planes = j.value("planes", o.planes);
    o.branch_hidden = j.value("branch_hidden", o.branch_hidden);
    o.branch_out = j.value("branch_out", o.branch_out);
    o.branch_kernel = j.value("branch_kernel", o.branch_kernel);
    o.extractor_hidden = j.value("extractor_hidden", o.extractor_hidden);
    o.extractor_out = j.value("extractor_out", o.extractor_out);
    o.trunk = j.value("trunk", o.trunk);
    o.res_blocks = j.value("res_blocks", o.res_blocks);
    o.full_res = j.value("full_res", o.full_res);
}
void from_json(const nlohmann::json& j, RestorerOptions& o) {
    o.planes = j.value("planes", o.planes);
    o.full_res = j.value("full_res", o.full_res);
    o.trunk = j.value("trunk", o.trunk);
    o.res_blocks = j.value("res_blocks", o.res_blocks);
}
void from_json(const nlohmann::json& j, DiscriminatorOptions& o) {
    o.base = j.value("base", o.base);
    o.layers = j.value("layers", o.layers);
    o.scales = j.value("scales", o.scales);
}
void from_json(const nlohmann::json& j, PerceptualOptions& o) { o.base = j.value("base", o.base); }

}  // namespace mpijpeg::nn
