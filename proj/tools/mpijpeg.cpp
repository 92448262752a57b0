// mpijpeg: embed an MPI into a JPEG, restore it, render views, train and evaluate.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mpijpeg/image.hpp"
#include "mpijpeg/io.hpp"
#include "mpijpeg/jpeg.hpp"
#include "mpijpeg/metrics.hpp"
#include "mpijpeg/mpi.hpp"
#include "mpijpeg/nn/checkpoint.hpp"
#include "mpijpeg/nn/model.hpp"
#include "mpijpeg/nn/perturb.hpp"
#include "mpijpeg/nn/train.hpp"
#include "mpijpeg/synthetic.hpp"

namespace fs = std::filesystem;
using namespace mpijpeg;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kInputError = 2, kValidationError = 3, kRuntimeError = 4 };

void require_file(const fs::path& p) {
    if (!fs::is_regular_file(p)) throw io::IoError("no such file: " + p.string());
}

jpeg::JpegConfig jpeg_config(int quality, const std::string& subsampling) {
    jpeg::JpegConfig cfg;
    cfg.quality = quality;
    cfg.subsampling = subsampling == "444" ? jpeg::ChromaSubsampling::k444 : jpeg::ChromaSubsampling::k420;
    return cfg;
}

Image rgb_only(const Image& img) {
    if (img.channels() == 4) return select_channels(img, 0, 3);
    if (img.channels() != 3) throw ShapeError("expected an RGB image");
    return img;
}

MpiStack load_stack(const fs::path& manifest, CameraModel* cam = nullptr) {
    require_file(manifest);
    auto loaded = io::load_mpi(manifest);
    if (cam) *cam = loaded.manifest.intrinsics;
    return loaded.stack.num_planes() == kPreMergePlanes ? merge_planes(loaded.stack) : loaded.stack;
}

RelativePose pose_from(const std::vector<double>& p) {
    return RelativePose::from_euler_deg(p[0], p[1], p[2], p[3], p[4], p[5]);
}

json pose_json(const std::vector<double>& p) {
    return {{"tx", p[0]}, {"ty", p[1]}, {"tz", p[2]}, {"rx_deg", p[3]}, {"ry_deg", p[4]}, {"rz_deg", p[5]}};
}

// Poses of the viewer conformance renders.
const std::vector<std::vector<double>> kGoldenPoses = {
    {0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
    {0.3, -0.2, 0.0, 0.0, 0.0, 0.0},
    {-0.25, 0.15, 0.2, 3.0, -4.0, 2.0},
};

struct EvalScene {
    std::string id;
    MpiStack mpi;
    Image reference;
    CameraModel camera;
};

std::vector<EvalScene> eval_scenes(const std::string& dataset, int synthetic, std::uint64_t seed, int width,
                                   int height) {
    std::vector<EvalScene> out;
    if (dataset.empty()) {
        for (int i = 1; i <= synthetic; ++i) {
            const auto s = seed + static_cast<std::uint64_t>(i);
            auto scene = generate_synthetic_scene(s, width, height);
            out.push_back({"synthetic_" + std::to_string(s), scene.mpi, scene.reference, scene.camera});
        }
        return out;
    }
    const auto scan = nn::ingest_dataset(dataset);
    for (const auto& w : scan.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& rec : scan.records) {
        CameraModel cam;
        auto mpi = load_stack(rec.manifest, &cam);
        out.push_back({rec.id, mpi, rgb_only(io::read_png(rec.reference)), cam});
    }
    return out;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw io::IoError("cannot write " + path.string());
    f << j.dump(2) << "\n";
}

// ---- subcommands ----

struct EmbedArgs {
    std::string manifest, reference, checkpoint, out, subsampling = "420";
    int quality = 90;
};

void cmd_embed(const EmbedArgs& a) {
    require_file(a.checkpoint);
    require_file(a.reference);
    const auto mpi = load_stack(a.manifest);
    const auto ref = rgb_only(io::read_png(a.reference));
    auto codec = nn::load_codec(a.checkpoint);
    if (static_cast<int>(codec.decoder.depths.size()) != mpi.num_planes()) {
        throw ShapeError("checkpoint expects " + std::to_string(codec.decoder.depths.size()) + " planes");
    }
    const auto embedding = quantize_8bit(codec.embed(mpi, ref));
    io::write_bytes(a.out, jpeg::encode(embedding, jpeg_config(a.quality, a.subsampling)));
}

struct RestoreArgs {
    std::string in, checkpoint, out, intrinsics_from;
};

void cmd_restore(const RestoreArgs& a) {
    require_file(a.in);
    require_file(a.checkpoint);
    const auto image = jpeg::decode(io::read_bytes(a.in));
    auto decoder = nn::load_decoder(a.checkpoint);
    const auto mpi = decoder.restore(image);
    auto cam = CameraModel::for_size(image.width(), image.height());
    if (!a.intrinsics_from.empty()) {
        require_file(a.intrinsics_from);
        cam = io::read_manifest(a.intrinsics_from).intrinsics;
    }
    io::save_mpi(a.out, mpi, cam);
}

struct RenderArgs {
    std::string manifest, out;
    std::vector<double> pose = std::vector<double>(6, 0.0);
};

void cmd_render(const RenderArgs& a) {
    CameraModel cam;
    const auto mpi = load_stack(a.manifest, &cam);
    io::write_png(a.out, render_novel_view(mpi, pose_from(a.pose), cam));
}

struct ExportArgs {
    std::string manifest, out;
};

void cmd_export_viewer(const ExportArgs& a) {
    CameraModel cam;
    const auto mpi = load_stack(a.manifest, &cam);
    fs::create_directories(a.out);
    const auto manifest = io::save_mpi(a.out, mpi, cam);
    const PoseSamplerConfig ranges;
    json golden = json::array();
    for (std::size_t i = 0; i < kGoldenPoses.size(); ++i) {
        const std::string name = "golden_" + std::to_string(i) + ".png";
        io::write_png(fs::path(a.out) / name, render_novel_view(mpi, pose_from(kGoldenPoses[i]), cam));
        golden.push_back({{"image", name}, {"pose", pose_json(kGoldenPoses[i])}});
    }
    const json config = {
        {"version", 1},
        {"manifest", "manifest.json"},
        {"width", manifest.width},
        {"height", manifest.height},
        {"num_planes", manifest.num_planes},
        {"depths", manifest.depths},
        {"intrinsics", {{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx}, {"cy", cam.cy}}},
        {"pose_convention", "X_target = R * X_ref + t; R = Rx * Ry * Rz (intrinsic XYZ, degrees)"},
        {"pixel_convention", "pixel centers at integer coordinates; bilinear sampling; outside is transparent"},
        {"translation_units", manifest.translation_units},
        {"pose_ranges", {{"translation", ranges.translation_range}, {"rotation_deg", ranges.rotation_range_deg}}},
        {"clamp_to_ranges", true},
        {"golden", golden},
        {"golden_tolerance", 2.0 / 255.0},
    };
    write_json(fs::path(a.out) / "viewer_config.json", config);
}

struct TrainArgs {
    std::string config, resume, checkpoint, metrics, export_decoder;
    std::int64_t steps = -1;
};

void cmd_train(const TrainArgs& a) {
    nn::TrainConfig cfg;
    if (!a.config.empty()) {
        require_file(a.config);
        std::ifstream f(a.config);
        json j;
        try {
            j = json::parse(f);
        } catch (const json::exception& e) {
            throw io::IoError("cannot parse " + a.config + ": " + e.what());
        }
        cfg = nn::train_config_from_json(j);
    }
    if (a.steps >= 0) cfg.steps = a.steps;
    if (!a.checkpoint.empty()) cfg.checkpoint_path = a.checkpoint;
    if (!a.metrics.empty()) cfg.metrics_path = a.metrics;
    cfg.validate();

    std::vector<std::string> warnings;
    auto scenes = nn::scenes_for(cfg, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    nn::Trainer trainer(cfg, std::move(scenes));
    if (!a.resume.empty()) {
        require_file(a.resume);
        trainer.load(a.resume);
    }
    std::cout << "training " << trainer.scenes().size() << " scenes at " << cfg.width << "x" << cfg.height
              << " from step " << trainer.steps_done() << " to " << cfg.steps << std::endl;
    nn::run_training(trainer, [](const nn::LossRecord& r) {
        std::printf("step %lld  G %.5f  D %.5f  embed %.2f dB  render %.2f dB\n", static_cast<long long>(r.step),
                    r.total_g, r.adversarial_d, r.embed_psnr, r.render_psnr);
        std::fflush(stdout);
    });
    if (!a.export_decoder.empty()) nn::save_decoder(a.export_decoder, trainer.codec().decoder);
}

struct EvalArgs {
    std::string checkpoint, dataset, csv, summary, codec = "bitexact", subsampling = "420";
    int synthetic = 4, width = 128, height = 72, quality = 90;
    std::uint64_t seed = 1;
    bool perturb = false;
};

void cmd_eval(const EvalArgs& a) {
    require_file(a.checkpoint);
    const auto scenes = eval_scenes(a.dataset, a.synthetic, a.seed, a.width, a.height);
    auto codec = nn::load_codec(a.checkpoint);
    nn::Channel channel;
    channel.jpeg = jpeg_config(a.quality, a.subsampling);
    channel.mode = a.codec == "simulated" ? nn::CodecMode::kSimulated
                   : a.codec == "none"    ? nn::CodecMode::kNone
                                          : nn::CodecMode::kBitExact;
    nn::TorchSceneModel model(codec, channel);
    Rng rng(a.seed);

    std::ofstream csv;
    if (!a.csv.empty()) {
        csv.open(a.csv);
        if (!csv) throw io::IoError("cannot write " + a.csv);
        csv << "scene,embed_psnr,embed_ssim,render_psnr,render_ssim";
        if (a.perturb) csv << ",perturbed_render_psnr,perturbed_render_ssim";
        csv << "\n";
    }
    double sums[6] = {0, 0, 0, 0, 0, 0};
    for (const auto& s : scenes) {
        const auto scores = metrics::eval_scene(model, s.mpi, s.reference, s.camera);
        double row[6] = {scores.embedding.psnr, scores.embedding.ssim, scores.render.psnr, scores.render.ssim, 0, 0};
        if (a.perturb) {
            const auto r = nn::robustness_scores(codec, s.mpi, s.reference, s.camera, channel.jpeg, {}, rng);
            row[4] = r.perturbed.psnr;
            row[5] = r.perturbed.ssim;
        }
        for (int i = 0; i < 6; ++i) sums[i] += row[i];
        if (csv.is_open()) {
            csv << s.id;
            for (int i = 0; i < (a.perturb ? 6 : 4); ++i) csv << ',' << row[i];
            csv << "\n";
        }
        std::printf("%s  embed %.2f dB / %.4f  render %.2f dB / %.4f", s.id.c_str(), row[0], row[1], row[2], row[3]);
        if (a.perturb) std::printf("  perturbed %.2f dB / %.4f", row[4], row[5]);
        std::printf("\n");
    }
    const double n = static_cast<double>(scenes.size());
    json summary = {{"scenes", scenes.size()},
                    {"codec", a.codec},
                    {"quality", a.quality},
                    {"embed_psnr", sums[0] / n},
                    {"embed_ssim", sums[1] / n},
                    {"render_psnr", sums[2] / n},
                    {"render_ssim", sums[3] / n},
                    {"poses", "3x3 grid of (tx, ty) in {-0.4, 0, 0.4}, identity rotation"}};
    if (a.perturb) {
        summary["perturbed_render_psnr"] = sums[4] / n;
        summary["perturbed_render_ssim"] = sums[5] / n;
    }
    if (!a.summary.empty()) write_json(a.summary, summary);
    std::cout << summary.dump(2) << std::endl;
}

struct PerturbArgs {
    std::string in, out;
    std::uint64_t seed = 1;
    bool no_jitter = false, no_crop = false;
};

void cmd_perturb(const PerturbArgs& a) {
    require_file(a.in);
    const auto img = rgb_only(a.in.size() > 4 && (a.in.ends_with(".jpg") || a.in.ends_with(".jpeg"))
                                  ? jpeg::decode(io::read_bytes(a.in))
                                  : io::read_png(a.in));
    nn::PerturbConfig cfg;
    cfg.crop = !a.no_crop;
    Rng rng(a.seed);
    nn::ColorJitterParams jitter;
    if (!a.no_jitter) jitter = nn::sample_color_jitter(cfg, rng);
    nn::Channel identity_codec{nn::CodecMode::kNone, {}, jitter};
    auto out = nn::transmit(img, identity_codec);
    Rect rect{0, 0, out.width(), out.height()};
    if (cfg.crop) {
        auto cropped = nn::random_crop(out, cfg, rng);
        out = cropped.image;
        rect = cropped.rect;
    }
    io::write_png(a.out, out);
    std::cout << json{{"brightness", jitter.brightness},
                      {"contrast", jitter.contrast},
                      {"saturation", jitter.saturation},
                      {"hue_deg", jitter.hue_deg},
                      {"crop", {{"x", rect.x}, {"y", rect.y}, {"width", rect.width}, {"height", rect.height}}}}
                     .dump()
              << std::endl;
}

struct MergeArgs {
    std::string manifest, out;
};

void cmd_merge_planes(const MergeArgs& a) {
    require_file(a.manifest);
    const auto loaded = io::load_mpi(a.manifest);
    io::save_mpi(a.out, merge_planes(loaded.stack), loaded.manifest.intrinsics);
}

struct RoundtripArgs {
    std::string in, jpg, png, subsampling = "420";
    int quality = 90;
};

void cmd_jpeg_roundtrip(const RoundtripArgs& a) {
    require_file(a.in);
    const auto img = rgb_only(io::read_png(a.in));
    const auto bytes = jpeg::encode(img, jpeg_config(a.quality, a.subsampling));
    if (!a.jpg.empty()) io::write_bytes(a.jpg, bytes);
    const auto back = jpeg::decode(bytes);
    if (!a.png.empty()) io::write_png(a.png, back);
    std::printf("%zu bytes, PSNR %.3f dB\n", bytes.size(), metrics::psnr(quantize_8bit(img), back));
}

struct DecodeArgs {
    std::string in, png;
};

void cmd_jpeg_decode(const DecodeArgs& a) {
    require_file(a.in);
    io::write_png(a.png, jpeg::decode(io::read_bytes(a.in)));
}

struct SynthArgs {
    std::string out;
    std::uint64_t seed = 1;
    int width = 128, height = 72, planes = kNumPlanes;
};

void cmd_synth(const SynthArgs& a) {
    const auto scene = generate_synthetic_scene(a.seed, a.width, a.height, a.planes);
    io::save_mpi(a.out, scene.mpi, scene.camera);
    io::write_png(fs::path(a.out) / "reference.png", scene.reference);
}

struct ExportDecoderArgs {
    std::string checkpoint, out;
};

void cmd_export_decoder(const ExportDecoderArgs& a) {
    require_file(a.checkpoint);
    nn::save_decoder(a.out, nn::load_decoder(a.checkpoint));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Embed multiplane images into JPEG files and restore them."};
    app.require_subcommand(1);
    const std::vector<std::string> sampling{"420", "444"};

    EmbedArgs embed;
    auto* s_embed = app.add_subcommand("embed", "Embed an MPI into a JPEG image");
    s_embed->add_option("--mpi", embed.manifest, "MPI manifest.json")->required();
    s_embed->add_option("--reference", embed.reference, "Reference image (PNG)")->required();
    s_embed->add_option("--checkpoint", embed.checkpoint, "Full checkpoint")->required();
    s_embed->add_option("--out", embed.out, "Output JPEG")->required();
    s_embed->add_option("--quality", embed.quality, "JPEG quality")->check(CLI::Range(1, 100));
    s_embed->add_option("--subsampling", embed.subsampling, "Chroma subsampling")->check(CLI::IsMember(sampling));

    RestoreArgs restore;
    auto* s_restore = app.add_subcommand("restore", "Restore an MPI from an embedding JPEG");
    s_restore->add_option("--in", restore.in, "Embedding JPEG")->required();
    s_restore->add_option("--checkpoint", restore.checkpoint, "Full or decoder-only checkpoint")->required();
    s_restore->add_option("--out", restore.out, "Output directory")->required();
    s_restore->add_option("--intrinsics-from", restore.intrinsics_from,
                          "Manifest whose intrinsics are copied (default: fx = fy = width, centered)");

    RenderArgs render;
    auto* s_render = app.add_subcommand("render", "Render a novel view of an MPI");
    s_render->add_option("--manifest", render.manifest, "MPI manifest.json")->required();
    s_render->add_option("--pose", render.pose, "tx ty tz rx ry rz (scene units, degrees)")->expected(6);
    s_render->add_option("--out", render.out, "Output PNG")->required();
    s_render->footer("Poses outside the training ranges are rendered as-is (extrapolation).");

    ExportArgs exportv;
    auto* s_export = app.add_subcommand("export-viewer", "Write a static bundle for the viewer");
    s_export->add_option("--manifest", exportv.manifest, "MPI manifest.json")->required();
    s_export->add_option("--out", exportv.out, "Output directory")->required();

    TrainArgs train;
    auto* s_train = app.add_subcommand("train", "Train the embedding and restoration networks");
    s_train->add_option("--config", train.config, "Training config JSON");
    s_train->add_option("--steps", train.steps, "Override the step count");
    s_train->add_option("--checkpoint", train.checkpoint, "Checkpoint path");
    s_train->add_option("--metrics", train.metrics, "Metrics CSV path");
    s_train->add_option("--resume", train.resume, "Resume from a full checkpoint");
    s_train->add_option("--export-decoder", train.export_decoder, "Also write a decoder-only checkpoint");

    EvalArgs eval;
    auto* s_eval = app.add_subcommand("eval", "Score embedding and rendered views over nine poses per scene");
    s_eval->add_option("--checkpoint", eval.checkpoint, "Full checkpoint")->required();
    s_eval->add_option("--dataset", eval.dataset, "Dataset root (default: synthetic scenes)");
    s_eval->add_option("--synthetic", eval.synthetic, "Number of synthetic scenes");
    s_eval->add_option("--seed", eval.seed, "Synthetic scene base seed (scene i uses seed + i)");
    s_eval->add_option("--width", eval.width, "Synthetic scene width");
    s_eval->add_option("--height", eval.height, "Synthetic scene height");
    s_eval->add_option("--codec", eval.codec, "Channel model")->check(CLI::IsMember({"bitexact", "simulated", "none"}));
    s_eval->add_option("--quality", eval.quality, "JPEG quality")->check(CLI::Range(1, 100));
    s_eval->add_option("--subsampling", eval.subsampling, "Chroma subsampling")->check(CLI::IsMember(sampling));
    s_eval->add_flag("--perturb", eval.perturb, "Also score restoration after random jitter and crop");
    s_eval->add_option("--csv", eval.csv, "Per-scene CSV");
    s_eval->add_option("--summary", eval.summary, "Aggregate JSON");

    PerturbArgs perturb;
    auto* s_perturb = app.add_subcommand("perturb", "Apply a random color jitter and crop to an image");
    s_perturb->add_option("--in", perturb.in, "Input PNG or JPEG")->required();
    s_perturb->add_option("--out", perturb.out, "Output PNG")->required();
    s_perturb->add_option("--seed", perturb.seed, "Random seed");
    s_perturb->add_flag("--no-jitter", perturb.no_jitter, "Skip the color jitter");
    s_perturb->add_flag("--no-crop", perturb.no_crop, "Skip the crop");

    MergeArgs merge;
    auto* s_merge = app.add_subcommand("merge-planes", "Merge a 128-plane MPI into 32 planes");
    s_merge->add_option("--manifest", merge.manifest, "128-plane manifest.json")->required();
    s_merge->add_option("--out", merge.out, "Output directory")->required();

    RoundtripArgs roundtrip;
    auto* s_rt = app.add_subcommand("jpeg-roundtrip", "Encode a PNG as baseline JPEG and decode it again");
    s_rt->add_option("--in", roundtrip.in, "Input PNG")->required();
    s_rt->add_option("--jpg", roundtrip.jpg, "Write the JPEG stream here");
    s_rt->add_option("--png", roundtrip.png, "Write the decoded image here");
    s_rt->add_option("--quality", roundtrip.quality, "JPEG quality")->check(CLI::Range(1, 100));
    s_rt->add_option("--subsampling", roundtrip.subsampling, "Chroma subsampling")->check(CLI::IsMember(sampling));

    DecodeArgs decode;
    auto* s_decode = app.add_subcommand("jpeg-decode", "Decode a baseline JPEG to PNG");
    s_decode->add_option("--in", decode.in, "Input JPEG")->required();
    s_decode->add_option("--png", decode.png, "Output PNG")->required();

    SynthArgs synth;
    auto* s_synth = app.add_subcommand("synth", "Write a synthetic scene (manifest, layers, reference.png)");
    s_synth->add_option("--out", synth.out, "Output directory")->required();
    s_synth->add_option("--seed", synth.seed, "Random seed");
    s_synth->add_option("--width", synth.width, "Width");
    s_synth->add_option("--height", synth.height, "Height");
    s_synth->add_option("--planes", synth.planes, "Plane count (32 or 128)");

    ExportDecoderArgs exportd;
    auto* s_exportd = app.add_subcommand("export-decoder", "Write a decoder-only checkpoint");
    s_exportd->add_option("--checkpoint", exportd.checkpoint, "Full checkpoint")->required();
    s_exportd->add_option("--out", exportd.out, "Output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kInputError;
    }

    try {
        if (*s_embed) cmd_embed(embed);
        else if (*s_restore) cmd_restore(restore);
        else if (*s_render) cmd_render(render);
        else if (*s_export) cmd_export_viewer(exportv);
        else if (*s_train) cmd_train(train);
        else if (*s_eval) cmd_eval(eval);
        else if (*s_perturb) cmd_perturb(perturb);
        else if (*s_merge) cmd_merge_planes(merge);
        else if (*s_rt) cmd_jpeg_roundtrip(roundtrip);
        else if (*s_decode) cmd_jpeg_decode(decode);
        else if (*s_synth) cmd_synth(synth);
        else if (*s_exportd) cmd_export_decoder(exportd);
    } catch (const io::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const jpeg::ParseError& e) {
        std::cerr << "error: malformed JPEG: " << e.what() << "\n";
        return kInputError;
    } catch (const io::ManifestError& e) {
        std::cerr << "error: invalid manifest: " << e.what() << "\n";
        return kValidationError;
    } catch (const nn::CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidationError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidationError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kOk;
}
