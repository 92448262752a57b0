#include "mpijpeg/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "mpijpeg/io.hpp"
#include "mpijpeg/nn/diff_jpeg.hpp"
#include "mpijpeg/nn/diff_render.hpp"
#include "mpijpeg/nn/tensor.hpp"

namespace mpijpeg::nn {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument(where + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) throw std::invalid_argument(where + ": unknown key '" + key + "'");
    }
}

json jpeg_to_json(const jpeg::JpegConfig& c) {
    return {{"quality", c.quality},
            {"chroma_subsampling", c.subsampling == jpeg::ChromaSubsampling::k420 ? "4:2:0" : "4:4:4"}};
}

jpeg::JpegConfig jpeg_from_json(const json& j) {
    reject_unknown(j, {"quality", "chroma_subsampling"}, "jpeg");
    jpeg::JpegConfig c;
    c.quality = j.value("quality", c.quality);
    const auto s = j.value("chroma_subsampling", std::string("4:2:0"));
    if (s == "4:2:0") {
        c.subsampling = jpeg::ChromaSubsampling::k420;
    } else if (s == "4:4:4") {
        c.subsampling = jpeg::ChromaSubsampling::k444;
    } else {
        throw std::invalid_argument("jpeg: chroma_subsampling must be \"4:2:0\" or \"4:4:4\"");
    }
    return c;
}

json perturb_to_json(const PerturbConfig& c) {
    return {{"brightness_delta", c.brightness_delta}, {"contrast_range", c.contrast_range},
            {"saturation_range", c.saturation_range}, {"hue_delta_deg", c.hue_delta_deg},
            {"crop_fraction", c.crop_fraction},       {"brightness", c.brightness},
            {"contrast", c.contrast},                 {"saturation", c.saturation},
            {"hue", c.hue},                           {"crop", c.crop},
            {"apply_probability", c.apply_probability}};
}

PerturbConfig perturb_from_json(const json& j) {
    reject_unknown(j,
                   {"brightness_delta", "contrast_range", "saturation_range", "hue_delta_deg", "crop_fraction",
                    "brightness", "contrast", "saturation", "hue", "crop", "apply_probability"},
                   "perturb");
    PerturbConfig c;
    c.brightness_delta = j.value("brightness_delta", c.brightness_delta);
    c.contrast_range = j.value("contrast_range", c.contrast_range);
    c.saturation_range = j.value("saturation_range", c.saturation_range);
    c.hue_delta_deg = j.value("hue_delta_deg", c.hue_delta_deg);
    c.crop_fraction = j.value("crop_fraction", c.crop_fraction);
    c.brightness = j.value("brightness", c.brightness);
    c.contrast = j.value("contrast", c.contrast);
    c.saturation = j.value("saturation", c.saturation);
    c.hue = j.value("hue", c.hue);
    c.crop = j.value("crop", c.crop);
    c.apply_probability = j.value("apply_probability", c.apply_probability);
    return c;
}

double item(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

double psnr_from_mse(double mse) { return mse <= 0.0 ? 100.0 : std::min(100.0, 10.0 * std::log10(1.0 / mse)); }

std::string dump(const LossRecord& r) {
    std::ostringstream s;
    s << std::setprecision(9) << "step " << r.step << ": total_g=" << r.total_g << " reg=" << r.reg
      << " perceptual=" << r.perceptual << " freq=" << r.freq << " restore=" << r.restore << " render=" << r.render
      << " render_mse=" << r.render_mse << " render_perceptual=" << r.render_perceptual
      << " adversarial_g=" << r.adversarial_g << " adversarial_d=" << r.adversarial_d;
    return s.str();
}

bool finite(const LossRecord& r) {
    for (double v : {r.total_g, r.reg, r.perceptual, r.freq, r.restore, r.render, r.render_mse, r.render_perceptual,
                     r.adversarial_g, r.adversarial_d}) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool grads_finite(const std::vector<torch::Tensor>& params) {
    for (const auto& p : params) {
        if (p.grad().defined() && !torch::isfinite(p.grad()).all().item<bool>()) return false;
    }
    return true;
}

std::string serialize(const torch::optim::Optimizer& opt) {
    torch::serialize::OutputArchive archive;
    opt.save(archive);
    std::ostringstream s;
    archive.save_to(s);
    return s.str();
}

}  // namespace

void TrainConfig::validate() const {
    if (width <= 0 || height <= 0 || width % 8 != 0 || height % 8 != 0) {
        throw std::invalid_argument("train: width and height must be positive multiples of 8");
    }
    if (width < 64 || height < 64) throw std::invalid_argument("train: resolution must be at least 64x64");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (steps < 0) throw std::invalid_argument("train: steps must be >= 0");
    if (!(lr_g > 0.0) || !(lr_d > 0.0)) throw std::invalid_argument("train: learning rates must be positive");
    if (lr_schedule != "constant" && lr_schedule != "cosine") {
        throw std::invalid_argument("train: lr_schedule must be \"constant\" or \"cosine\"");
    }
    if (jpeg.quality < 1 || jpeg.quality > 100) throw std::invalid_argument("train: jpeg quality must be in [1,100]");
    if (poses.translation_range < 0 || poses.rotation_range_deg < 0) {
        throw std::invalid_argument("train: pose ranges must be non-negative");
    }
    if (embedder.planes != restorer.planes) throw std::invalid_argument("train: embedder and restorer plane counts differ");
    if (synthetic_scenes < 1) throw std::invalid_argument("train: synthetic_scenes must be >= 1");
    if (checkpoint_every < 0 || log_every < 0) throw std::invalid_argument("train: cadences must be >= 0");
    weights.validate();
    perturb.validate();
}

json to_json(const TrainConfig& c) {
    return {{"width", c.width},
            {"height", c.height},
            {"batch_size", c.batch_size},
            {"steps", c.steps},
            {"lr_g", c.lr_g},
            {"lr_d", c.lr_d},
            {"lr_schedule", c.lr_schedule},
            {"seed", c.seed},
            {"weights", to_json(c.weights)},
            {"perturb", perturb_to_json(c.perturb)},
            {"perturbations", c.perturbations},
            {"jpeg", jpeg_to_json(c.jpeg)},
            {"poses", {{"translation_range", c.poses.translation_range},
                       {"rotation_range_deg", c.poses.rotation_range_deg}}},
            {"embedder", to_json(c.embedder)},
            {"restorer", to_json(c.restorer)},
            {"discriminator", to_json(c.discriminator)},
            {"perceptual", to_json(c.perceptual)},
            {"perceptual_weights", c.perceptual_weights},
            {"dataset_root", c.dataset_root},
            {"synthetic_scenes", c.synthetic_scenes},
            {"checkpoint_every", c.checkpoint_every},
            {"checkpoint_path", c.checkpoint_path},
            {"metrics_path", c.metrics_path},
            {"log_every", c.log_every}};
}

TrainConfig train_config_from_json(const json& j) {
    reject_unknown(j,
                   {"width", "height", "batch_size", "steps", "lr_g", "lr_d", "lr_schedule", "seed", "weights", "perturb",
                    "perturbations", "jpeg", "poses", "embedder", "restorer", "discriminator", "perceptual",
                    "perceptual_weights", "dataset_root", "synthetic_scenes", "checkpoint_every", "checkpoint_path",
                    "metrics_path", "log_every"},
                   "train config");
    TrainConfig c;
    try {
        c.width = j.value("width", c.width);
        c.height = j.value("height", c.height);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.steps = j.value("steps", c.steps);
        c.lr_g = j.value("lr_g", c.lr_g);
        c.lr_d = j.value("lr_d", c.lr_d);
        c.lr_schedule = j.value("lr_schedule", c.lr_schedule);
        c.seed = j.value("seed", c.seed);
        if (j.contains("weights")) {
            reject_unknown(j["weights"],
                           {"reg", "perceptual", "freq", "restore", "render", "rgb", "render_mse",
                            "render_perceptual", "adversarial"},
                           "weights");
            from_json(j["weights"], c.weights);
        }
        if (j.contains("perturb")) c.perturb = perturb_from_json(j["perturb"]);
        c.perturbations = j.value("perturbations", c.perturbations);
        if (j.contains("jpeg")) c.jpeg = jpeg_from_json(j["jpeg"]);
        if (j.contains("poses")) {
            reject_unknown(j["poses"], {"translation_range", "rotation_range_deg"}, "poses");
            c.poses.translation_range = j["poses"].value("translation_range", c.poses.translation_range);
            c.poses.rotation_range_deg = j["poses"].value("rotation_range_deg", c.poses.rotation_range_deg);
        }
        if (j.contains("embedder")) from_json(j["embedder"], c.embedder);
        if (j.contains("restorer")) from_json(j["restorer"], c.restorer);
        if (j.contains("discriminator")) from_json(j["discriminator"], c.discriminator);
        if (j.contains("perceptual")) from_json(j["perceptual"], c.perceptual);
        c.perceptual_weights = j.value("perceptual_weights", c.perceptual_weights);
        c.dataset_root = j.value("dataset_root", c.dataset_root);
        c.synthetic_scenes = j.value("synthetic_scenes", c.synthetic_scenes);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        c.checkpoint_path = j.value("checkpoint_path", c.checkpoint_path);
        c.metrics_path = j.value("metrics_path", c.metrics_path);
        c.log_every = j.value("log_every", c.log_every);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

DatasetScan ingest_dataset(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw std::runtime_error("dataset: " + root.string() + " is not a directory");
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());

    DatasetScan scan;
    for (const auto& dir : dirs) {
        SceneRecord rec{dir.filename().string(), dir / "manifest.json", dir / "reference.png"};
        try {
            const auto loaded = io::load_mpi(rec.manifest);
            const auto ref = io::read_png(rec.reference);
            if (ref.width() != loaded.manifest.width || ref.height() != loaded.manifest.height) {
                throw io::ManifestError("reference is " + std::to_string(ref.width()) + "x" +
                                        std::to_string(ref.height()) + ", MPI is " +
                                        std::to_string(loaded.manifest.width) + "x" +
                                        std::to_string(loaded.manifest.height));
            }
            scan.records.push_back(std::move(rec));
        } catch (const std::exception& e) {
            scan.warnings.push_back("skipping scene '" + rec.id + "': " + e.what());
        }
    }
    if (scan.records.empty()) throw std::runtime_error("dataset: no usable scenes under " + root.string());
    return scan;
}

TrainScene load_scene(const SceneRecord& record) {
    const auto loaded = io::load_mpi(record.manifest);
    auto mpi = loaded.stack.num_planes() == kPreMergePlanes ? merge_planes(loaded.stack) : loaded.stack;
    auto ref = io::read_png(record.reference);
    if (ref.channels() == 4) ref = select_channels(ref, 0, 3);
    if (ref.width() != mpi.width() || ref.height() != mpi.height()) {
        throw ShapeError("scene '" + record.id + "': reference dimensions differ from the MPI");
    }
    return {record.id, mpi_to_tensor(mpi), to_tensor(ref), mpi.depths(), loaded.manifest.intrinsics};
}

TrainScene scene_from_synthetic(const SyntheticScene& scene, std::string id) {
    return {std::move(id), mpi_to_tensor(scene.mpi), to_tensor(scene.reference), scene.mpi.depths(), scene.camera};
}

Rect sample_patch(int width, int height, int patch_w, int patch_h, Rng& rng) {
    if (patch_w % 8 != 0 || patch_h % 8 != 0) throw ShapeError("sample_patch: patch dimensions must be multiples of 8");
    if (patch_w > width || patch_h > height) throw ShapeError("sample_patch: scene smaller than the patch");
    std::uniform_int_distribution<int> ox(0, (width - patch_w) / 8), oy(0, (height - patch_h) / 8);
    const int x = ox(rng) * 8;
    const int y = oy(rng) * 8;
    return {x, y, patch_w, patch_h};
}

std::vector<TrainScene> scenes_for(const TrainConfig& config, std::vector<std::string>* warnings) {
    std::vector<TrainScene> scenes;
    if (config.dataset_root.empty()) {
        for (int i = 1; i <= config.synthetic_scenes; ++i) {
            const auto seed = config.seed + static_cast<std::uint64_t>(i);
            scenes.push_back(scene_from_synthetic(
                generate_synthetic_scene(seed, config.width, config.height, config.embedder.planes),
                "synthetic_" + std::to_string(seed)));
        }
        return scenes;
    }
    auto scan = ingest_dataset(config.dataset_root);
    if (warnings) *warnings = scan.warnings;
    for (const auto& rec : scan.records) scenes.push_back(load_scene(rec));
    return scenes;
}

void write_metrics_header(std::ostream& out) {
    out << "step,total_g,reg,perceptual,freq,restore,render,render_mse,render_perceptual,adversarial_g,"
           "adversarial_d,embed_psnr,render_psnr\n";
}

void write_metrics_row(std::ostream& out, const LossRecord& r) {
    out << r.step << std::setprecision(9);
    for (double v : {r.total_g, r.reg, r.perceptual, r.freq, r.restore, r.render, r.render_mse, r.render_perceptual,
                     r.adversarial_g, r.adversarial_d, r.embed_psnr, r.render_psnr}) {
        out << ',' << v;
    }
    out << '\n';
}

Trainer::Trainer(TrainConfig config, std::vector<TrainScene> scenes)
    : config_(std::move(config)), scenes_(std::move(scenes)), rng_(config_.seed) {
    config_.validate();
    if (scenes_.empty()) throw std::invalid_argument("train: no scenes");
    depths_ = scenes_.front().depths;
    for (const auto& s : scenes_) {
        if (s.mpi.size(0) != config_.embedder.planes) {
            throw std::invalid_argument("train: scene '" + s.id + "' has " + std::to_string(s.mpi.size(0)) +
                                        " planes, expected " + std::to_string(config_.embedder.planes));
        }
        if (s.mpi.size(3) < config_.width || s.mpi.size(2) < config_.height) {
            throw std::invalid_argument("train: scene '" + s.id + "' is smaller than the training resolution");
        }
        if (s.depths != depths_) throw std::invalid_argument("train: scenes use different plane depths");
    }

    torch::manual_seed(config_.seed);
    embedder = Embedder(config_.embedder);
    restorer = Restorer(config_.restorer);
    discriminator = Discriminator(config_.discriminator);
    perceptual = Perceptual(config_.perceptual);
    if (!config_.perceptual_weights.empty()) load_perceptual_weights(config_.perceptual_weights, perceptual);

    std::vector<torch::Tensor> g_params = embedder->parameters();
    for (auto& p : restorer->parameters()) g_params.push_back(p);
    opt_g_ = std::make_unique<torch::optim::Adam>(g_params, torch::optim::AdamOptions(config_.lr_g));
    opt_d_ = std::make_unique<torch::optim::Adam>(discriminator->parameters(), torch::optim::AdamOptions(config_.lr_d));
}

std::vector<torch::Tensor> Trainer::features(const torch::Tensor& x) { return perceptual->forward(x); }

Batch Trainer::sample_batch() {
    std::vector<torch::Tensor> mpis, refs;
    Batch batch;
    std::uniform_int_distribution<std::size_t> pick(0, scenes_.size() - 1);
    for (int b = 0; b < config_.batch_size; ++b) {
        const auto& s = scenes_[pick(rng_)];
        const auto rect = sample_patch(static_cast<int>(s.mpi.size(3)), static_cast<int>(s.mpi.size(2)), config_.width,
                                       config_.height, rng_);
        mpis.push_back(crop_tensor(s.mpi, rect));
        refs.push_back(crop_tensor(s.reference, rect));
        batch.cameras.push_back(crop_camera(s.camera, rect));
    }
    batch.mpi = torch::stack(mpis);
    batch.reference = torch::stack(refs);
    return batch;
}

double lr_factor(const TrainConfig& config, std::int64_t step) {
    if (config.lr_schedule != "cosine" || config.steps <= 0) return 1.0;
    const double t = static_cast<double>(std::min(step, config.steps)) / static_cast<double>(config.steps);
    return 0.5 * (1.0 + std::cos(M_PI * t));
}

namespace {

void set_lr(torch::optim::Adam& opt, double lr) {
    for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

}  // namespace

LossRecord Trainer::train_step(const Batch& batch) {
    const auto& w = config_.weights;
    const double factor = lr_factor(config_, step_);
    set_lr(*opt_g_, config_.lr_g * factor);
    set_lr(*opt_d_, config_.lr_d * factor);
    const int64_t n = batch.mpi.size(0);
    if (static_cast<int64_t>(batch.cameras.size()) != n || batch.reference.size(0) != n) {
        throw ShapeError("train_step: batch members disagree on the batch size");
    }
    LossRecord rec;
    rec.step = step_ + 1;

    auto embedding = embedder->forward(batch.mpi, batch.reference);

    // Discriminator: reference images are real, detached embeddings are fake.
    const bool adversarial = w.adversarial > 0.0;
    if (adversarial) {
        opt_d_->zero_grad();
        auto ld = loss_adversarial_d(discriminator->forward(batch.reference),
                                     discriminator->forward(embedding.detach()));
        rec.adversarial_d = ld.item<double>();
        if (!std::isfinite(rec.adversarial_d)) throw NonFiniteLoss("non-finite discriminator loss: " + dump(rec));
        ld.backward();
        opt_d_->step();
    }

    // Generator pipeline: quantize -> JPEG -> color jitter -> crop -> restore.
    auto x = jpeg_simulate(quantize_8bit(embedding), config_.jpeg);
    auto truth = batch.mpi;
    auto cameras = batch.cameras;
    if (config_.perturbations) {
        std::vector<torch::Tensor> items;
        bool any = false;
        std::vector<ColorJitterParams> params;
        for (int64_t b = 0; b < n; ++b) {
            params.push_back(sample_color_jitter(config_.perturb, rng_, config_.perturb.apply_probability));
            any = any || !params.back().is_identity();
        }
        if (any) {
            for (int64_t b = 0; b < n; ++b) items.push_back(color_jitter(x[b], params[b]));
            x = torch::stack(items);
        }
        std::bernoulli_distribution do_crop(config_.perturb.apply_probability);
        if (do_crop(rng_) && config_.perturb.crop) {
            const auto rect = sample_crop(static_cast<int>(x.size(3)), static_cast<int>(x.size(2)), config_.perturb, rng_);
            x = crop_tensor(x, rect);
            truth = crop_tensor(truth, rect);
            for (auto& c : cameras) c = crop_camera(c, rect);
        }
    }
    auto restored = restorer->forward(x);

    const FeatureFn feats = [this](const torch::Tensor& t) { return features(t); };
    GeneratorTerms terms;
    if (w.reg > 0) terms.reg = loss_reg(embedding, batch.reference);
    if (w.freq > 0) terms.freq = loss_freq(embedding, batch.reference);
    if (w.perceptual > 0) terms.perceptual = loss_perceptual(embedding, batch.reference, feats);
    if (w.restore > 0) terms.restore = loss_restore(restored, truth, w.rgb);
    if (w.render > 0) {
        std::vector<RelativePose> poses;
        for (int64_t b = 0; b < n; ++b) poses.push_back(sample_render_pose(config_.poses, rng_));
        auto r = loss_render(restored, truth, depths_, poses, cameras, w.render_perceptual > 0 ? feats : FeatureFn{},
                             w.render_mse, w.render_perceptual);
        terms.render = r.total;
        rec.render_mse = r.mse.item<double>();
        rec.render_perceptual = r.perceptual.item<double>();
    }
    if (adversarial) terms.adversarial = loss_adversarial_g(discriminator->forward(embedding));
    auto total = loss_total_g(terms, w);

    rec.total_g = item(total);
    rec.reg = item(terms.reg);
    rec.freq = item(terms.freq);
    rec.perceptual = item(terms.perceptual);
    rec.restore = item(terms.restore);
    rec.render = item(terms.render);
    rec.adversarial_g = item(terms.adversarial);
    if (!finite(rec)) throw NonFiniteLoss("non-finite generator loss: " + dump(rec));

    opt_g_->zero_grad();
    if (total.requires_grad()) {
        total.backward();
        std::vector<torch::Tensor> params = embedder->parameters();
        for (auto& p : restorer->parameters()) params.push_back(p);
        if (!grads_finite(params)) throw NonFiniteLoss("non-finite generator gradient: " + dump(rec));
        opt_g_->step();
    }

    {
        torch::NoGradGuard guard;
        rec.embed_psnr = psnr_from_mse((embedding - batch.reference).square().mean().item<double>());
        rec.render_psnr = psnr_from_mse((composite(restored) - composite(truth)).square().mean().item<double>());
    }
    ++step_;
    return rec;
}

void Trainer::save(const std::filesystem::path& path) const {
    CheckpointData data;
    std::ostringstream rng_state;
    rng_state << rng_;
    data.meta = {{"kind", "full"},
                 {"architecture",
                  {{"embedder", to_json(config_.embedder)},
                   {"restorer", to_json(config_.restorer)},
                   {"discriminator", to_json(config_.discriminator)},
                   {"perceptual", to_json(config_.perceptual)}}},
                 {"depths", depths_},
                 {"step", step_},
                 {"rng", rng_state.str()},
                 {"config", to_json(config_)}};
    collect_tensors(*embedder, "embedder", data);
    collect_tensors(*restorer, "restorer", data);
    collect_tensors(*discriminator, "discriminator", data);
    collect_tensors(*perceptual, "perceptual", data);
    data.blobs["optimizer_g"] = serialize(*opt_g_);
    data.blobs["optimizer_d"] = serialize(*opt_d_);
    write_checkpoint_file(path, data);
}

void Trainer::load(const std::filesystem::path& path) {
    const auto data = read_checkpoint_file(path);
    if (data.meta.value("kind", std::string()) != "full") throw CheckpointError("checkpoint: not a full training checkpoint");
    const json arch = {{"embedder", to_json(config_.embedder)},
                       {"restorer", to_json(config_.restorer)},
                       {"discriminator", to_json(config_.discriminator)},
                       {"perceptual", to_json(config_.perceptual)}};
    if (data.meta.value("architecture", json()) != arch) {
        throw CheckpointError("checkpoint: architecture does not match the training config");
    }
    if (data.meta.value("depths", std::vector<double>()) != depths_) {
        throw CheckpointError("checkpoint: plane depths do not match the training scenes");
    }
    check_tensors(*embedder, "embedder", data);
    check_tensors(*restorer, "restorer", data);
    check_tensors(*discriminator, "discriminator", data);
    check_tensors(*perceptual, "perceptual", data);

    // Parse everything before touching live state so a bad file leaves the trainer unchanged.
    torch::serialize::InputArchive arch_g, arch_d;
    Rng rng;
    std::int64_t step = 0;
    try {
        std::istringstream sg(data.blobs.at("optimizer_g")), sd(data.blobs.at("optimizer_d"));
        arch_g.load_from(sg);
        arch_d.load_from(sd);
        std::istringstream rs(data.meta.at("rng").get<std::string>());
        rs >> rng;
        if (!rs) throw CheckpointError("checkpoint: malformed RNG state");
        step = data.meta.at("step").get<std::int64_t>();
    } catch (const std::out_of_range&) {
        throw CheckpointError("checkpoint: missing optimizer state");
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint: ") + e.what());
    } catch (const c10::Error& e) {
        throw CheckpointError(std::string("checkpoint: bad optimizer state: ") + e.what_without_backtrace());
    }

    apply_tensors(*embedder, "embedder", data);
    apply_tensors(*restorer, "restorer", data);
    apply_tensors(*discriminator, "discriminator", data);
    apply_tensors(*perceptual, "perceptual", data);
    opt_g_->load(arch_g);
    opt_d_->load(arch_d);
    rng_ = rng;
    step_ = step;
}

Codec Trainer::codec() const {
    Codec c;
    c.embedder = Embedder(config_.embedder);
    c.decoder.restorer = Restorer(config_.restorer);
    c.decoder.depths = depths_;
    CheckpointData data;
    collect_tensors(*embedder, "embedder", data);
    collect_tensors(*restorer, "restorer", data);
    apply_tensors(*c.embedder, "embedder", data);
    apply_tensors(*c.decoder.restorer, "restorer", data);
    c.embedder->eval();
    c.decoder.restorer->eval();
    return c;
}

void run_training(Trainer& trainer, const std::function<void(const LossRecord&)>& progress) {
    const auto& cfg = trainer.config();
    std::ofstream metrics;
    if (!cfg.metrics_path.empty()) {
        const bool resume = trainer.steps_done() > 0 && std::filesystem::exists(cfg.metrics_path);
        metrics.open(cfg.metrics_path, resume ? std::ios::app : std::ios::trunc);
        if (!metrics) throw std::runtime_error("train: cannot write " + cfg.metrics_path);
        if (!resume) write_metrics_header(metrics);
    }
    while (trainer.steps_done() < cfg.steps) {
        const auto rec = trainer.step();
        if (metrics.is_open()) write_metrics_row(metrics, rec);
        if (progress && cfg.log_every > 0 && (rec.step % cfg.log_every == 0 || rec.step == cfg.steps)) progress(rec);
        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 && rec.step % cfg.checkpoint_every == 0) {
            metrics.flush();
            trainer.save(cfg.checkpoint_path);
        }
    }
    if (!cfg.checkpoint_path.empty()) trainer.save(cfg.checkpoint_path);
}

}  // namespace mpijpeg::nn
