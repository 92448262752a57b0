#include "mpijpeg/nn/model.hpp"

#include "mpijpeg/nn/diff_jpeg.hpp"
#include "mpijpeg/nn/tensor.hpp"

namespace mpijpeg::nn {

MpiStack Decoder::restore(const Image& embedding) {
    if (embedding.channels() != 3) throw ShapeError("restore: expected an RGB image");
    torch::NoGradGuard guard;
    auto out = restorer->forward(to_tensor(embedding).unsqueeze(0)).squeeze(0);
    return tensor_to_mpi(out, depths);
}

Image Codec::embed(const MpiStack& mpi, const Image& reference) {
    if (reference.channels() != 3 || reference.width() != mpi.width() || reference.height() != mpi.height()) {
        throw ShapeError("embed: reference must be RGB with the MPI's dimensions");
    }
    torch::NoGradGuard guard;
    auto e = embedder->forward(mpi_to_tensor(mpi).unsqueeze(0), to_tensor(reference).unsqueeze(0));
    return to_image(e.squeeze(0));
}

namespace {

std::vector<double> depths_from(const nlohmann::json& meta) {
    try {
        return meta.at("depths").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint: missing depths: ") + e.what());
    }
}

template <typename Options>
Options options_from(const nlohmann::json& meta, const char* key) {
    Options o;
    try {
        from_json(meta.at("architecture").at(key), o);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint: missing architecture for ") + key + ": " + e.what());
    }
    return o;
}

std::string kind_of(const CheckpointData& data) { return data.meta.value("kind", std::string()); }

}  // namespace

Decoder load_decoder(const std::filesystem::path& path) {
    const auto data = read_checkpoint_file(path);
    const auto kind = kind_of(data);
    if (kind != "full" && kind != "decoder") throw CheckpointError("checkpoint: '" + kind + "' holds no restorer");
    Decoder d;
    d.restorer = Restorer(options_from<RestorerOptions>(data.meta, "restorer"));
    d.depths = depths_from(data.meta);
    if (static_cast<int>(d.depths.size()) != d.restorer->options.planes) {
        throw CheckpointError("checkpoint: depth count does not match the restorer's plane count");
    }
    check_tensors(*d.restorer, "restorer", data);
    apply_tensors(*d.restorer, "restorer", data);
    d.restorer->eval();
    return d;
}

Codec load_codec(const std::filesystem::path& path) {
    const auto data = read_checkpoint_file(path);
    if (kind_of(data) != "full") throw CheckpointError("checkpoint: embedding needs a full checkpoint");
    Codec c;
    c.embedder = Embedder(options_from<EmbedderOptions>(data.meta, "embedder"));
    c.decoder.restorer = Restorer(options_from<RestorerOptions>(data.meta, "restorer"));
    c.decoder.depths = depths_from(data.meta);
    check_tensors(*c.embedder, "embedder", data);
    check_tensors(*c.decoder.restorer, "restorer", data);
    apply_tensors(*c.embedder, "embedder", data);
    apply_tensors(*c.decoder.restorer, "restorer", data);
    c.embedder->eval();
    c.decoder.restorer->eval();
    return c;
}

void save_decoder(const std::filesystem::path& path, const Decoder& decoder) {
    CheckpointData data;
    data.meta = {{"kind", "decoder"},
                 {"architecture", {{"restorer", to_json(decoder.restorer->options)}}},
                 {"depths", decoder.depths}};
    collect_tensors(*decoder.restorer, "restorer", data);
    write_checkpoint_file(path, data);
}

void save_perceptual_weights(const std::filesystem::path& path, const Perceptual& net) {
    CheckpointData data;
    data.meta = {{"kind", "perceptual"}, {"architecture", {{"perceptual", to_json(net->options)}}}};
    collect_tensors(*net, "perceptual", data);
    write_checkpoint_file(path, data);
}

void load_perceptual_weights(const std::filesystem::path& path, Perceptual& net) {
    const auto data = read_checkpoint_file(path);
    check_tensors(*net, "perceptual", data);
    apply_tensors(*net, "perceptual", data);
}

Image transmit(const Image& embedding, const Channel& channel) {
    Image received;
    switch (channel.mode) {
        case CodecMode::kBitExact: {
            const auto bytes = jpeg::encode(quantize_8bit(embedding), channel.jpeg);
            received = jpeg::decode(bytes);
            break;
        }
        case CodecMode::kSimulated: {
            torch::NoGradGuard guard;
            received = quantize_8bit(to_image(jpeg_simulate(to_tensor(quantize_8bit(embedding), torch::kFloat64), channel.jpeg)));
            break;
        }
        case CodecMode::kNone:
            received = quantize_8bit(embedding);
            break;
    }
    if (channel.jitter.is_identity()) return received;
    torch::NoGradGuard guard;
    return quantize_8bit(to_image(color_jitter(to_tensor(received, torch::kFloat64), channel.jitter)));
}

TorchSceneModel::TorchSceneModel(Codec codec, Channel channel) : codec_(std::move(codec)), channel_(channel) {}

Image TorchSceneModel::embed(const MpiStack& mpi, const Image& reference) {
    return transmit(codec_.embed(mpi, reference), channel_);
}

MpiStack TorchSceneModel::restore(const Image& embedding) { return codec_.decoder.restore(embedding); }

metrics::QualityScores cropped_render_scores(Decoder& decoder, const Image& received, const Rect& rect,
                                             const MpiStack& truth, const CameraModel& cam,
                                             const std::vector<RelativePose>& poses) {
    if (poses.empty()) throw std::invalid_argument("cropped_render_scores: no poses");
    const auto restored = decoder.restore(crop(received, rect));
    std::vector<Image> planes;
    for (const auto& p : truth.planes()) planes.push_back(crop(p, rect));
    const MpiStack truth_crop(std::move(planes), truth.depths(), truth.num_planes() != kNumPlanes);
    const auto cam_crop = crop_camera(cam, rect);
    metrics::QualityScores mean;
    for (const auto& pose : poses) {
        const auto a = render_novel_view(restored, pose, cam_crop);
        const auto b = render_novel_view(truth_crop, pose, cam_crop);
        mean.psnr += metrics::psnr(a, b);
        mean.ssim += metrics::ssim(a, b);
    }
    mean.psnr /= static_cast<double>(poses.size());
    mean.ssim /= static_cast<double>(poses.size());
    return mean;
}

RobustnessScores robustness_scores(Codec& codec, const MpiStack& mpi, const Image& reference, const CameraModel& cam,
                                   const jpeg::JpegConfig& jpeg, const PerturbConfig& perturb, Rng& rng,
                                   const std::vector<RelativePose>& poses) {
    RobustnessScores out;
    out.jitter = sample_color_jitter(perturb, rng);
    out.crop = perturb.crop ? sample_crop(mpi.width(), mpi.height(), perturb, rng) : Rect{0, 0, mpi.width(), mpi.height()};
    const auto embedding = codec.embed(mpi, reference);
    const Rect full{0, 0, mpi.width(), mpi.height()};
    out.clean = cropped_render_scores(codec.decoder, transmit(embedding, {CodecMode::kBitExact, jpeg, {}}), full, mpi,
                                      cam, poses);
    out.perturbed = cropped_render_scores(codec.decoder, transmit(embedding, {CodecMode::kBitExact, jpeg, out.jitter}),
                                          out.crop, mpi, cam, poses);
    return out;
}

}  // namespace mpijpeg::nn
