#include "test.hpp"

#include <fstream>
#include <sstream>

#include "mpijpeg/io.hpp"
#include "mpijpeg/nn/model.hpp"
#include "mpijpeg/nn/train.hpp"
#include "mpijpeg/synthetic.hpp"
#include "support.hpp"

using namespace mpijpeg;
using namespace mpijpeg::nn;

namespace {

TrainConfig tiny_config() {
    TrainConfig c;
    c.width = 64;
    c.height = 64;
    c.batch_size = 1;
    c.steps = 4;
    c.seed = 3;
    c.embedder = {32, 4, 8, 1, 8, 8, 16, 1, 16};
    c.restorer = {32, 8, 16, 1};
    c.discriminator = {4, 2, 2};
    c.perceptual = {4};
    c.synthetic_scenes = 2;
    return c;
}

bool same(const LossRecord& a, const LossRecord& b) {
    return a.step == b.step && a.total_g == b.total_g && a.reg == b.reg && a.perceptual == b.perceptual &&
           a.freq == b.freq && a.restore == b.restore && a.render == b.render && a.adversarial_g == b.adversarial_g &&
           a.adversarial_d == b.adversarial_d && a.embed_psnr == b.embed_psnr && a.render_psnr == b.render_psnr;
}

std::vector<torch::Tensor> snapshot(const torch::nn::Module& m) {
    std::vector<torch::Tensor> out;
    for (const auto& p : m.parameters()) out.push_back(p.detach().clone());
    return out;
}

bool unchanged(const torch::nn::Module& m, const std::vector<torch::Tensor>& before) {
    const auto now = m.parameters();
    for (std::size_t i = 0; i < now.size(); ++i)
        if (!torch::equal(now[i], before[i])) return false;
    return true;
}

void write_scene(const std::filesystem::path& dir, std::uint64_t seed) {
    const auto s = generate_synthetic_scene(seed, 64, 64);
    io::save_mpi(dir, s.mpi, s.camera);
    io::write_png(dir / "reference.png", s.reference);
}

}  // namespace

TEST_CASE("training is deterministic for a fixed seed") {
    const auto cfg = tiny_config();
    Trainer a(cfg, scenes_for(cfg)), b(cfg, scenes_for(cfg));
    for (int i = 0; i < 10; ++i) {
        const auto ra = a.step(), rb = b.step();
        CHECK(same(ra, rb));
        CHECK(std::isfinite(ra.total_g));
    }
    CHECK(a.steps_done() == 10);
}

TEST_CASE("all-zero weights leave the generator untouched") {
    auto cfg = tiny_config();
    cfg.weights = {0, 0, 0, 0, 0, 0, 0, 0, 0};
    Trainer t(cfg, scenes_for(cfg));
    const auto emb = snapshot(*t.embedder), res = snapshot(*t.restorer), disc = snapshot(*t.discriminator);
    for (int i = 0; i < 3; ++i) CHECK(t.step().total_g == 0.0);
    CHECK(unchanged(*t.embedder, emb));
    CHECK(unchanged(*t.restorer, res));
    CHECK(unchanged(*t.discriminator, disc));
}

TEST_CASE("regularization alone pulls the embedding onto the reference") {
    auto cfg = tiny_config();
    cfg.weights = {1, 0, 0, 0, 0, 0, 0, 0, 0};
    cfg.perturbations = false;
    cfg.lr_g = 1e-3;
    Trainer t(cfg, scenes_for(cfg));
    const auto batch = t.sample_batch();
    const double first = t.train_step(batch).reg;
    double last = first;
    for (int i = 1; i < 200; ++i) last = t.train_step(batch).reg;
    INFO("first " << first << " last " << last);
    CHECK(last <= 0.5 * first);
}

TEST_CASE("patches sit on the 8-pixel grid") {
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const auto r = sample_patch(200, 120, 64, 64, rng);
        CHECK(r.x % 8 == 0);
        CHECK(r.y % 8 == 0);
        CHECK(r.x + 64 <= 200);
        CHECK(r.y + 64 <= 120);
    }
    CHECK_THROWS(sample_patch(60, 60, 64, 64, rng));
}

TEST_CASE("dataset ingestion skips broken scenes") {
    testing::TempDir root("ingest");
    write_scene(root / "a", 1);
    write_scene(root / "b", 2);
    write_scene(root / "c", 3);
    write_scene(root / "d", 4);
    std::ofstream(root / "d" / "manifest.json") << "{ not json";
    std::filesystem::create_directories(root / "e");  // no manifest at all
    const auto scan = ingest_dataset(root.path());
    REQUIRE(scan.records.size() == 3);
    CHECK(scan.records[0].id == "a");
    CHECK(scan.records[2].id == "c");
    CHECK(scan.warnings.size() >= 1);

    const auto scene = load_scene(scan.records[1]);
    CHECK(scene.mpi.sizes() == torch::IntArrayRef({32, 4, 64, 64}));
    CHECK(scene.reference.sizes() == torch::IntArrayRef({3, 64, 64}));

    testing::TempDir empty("ingest_empty");
    CHECK_THROWS_AS(ingest_dataset(empty.path()), std::runtime_error);
}

TEST_CASE("dataset scenes drive training") {
    testing::TempDir root("dataset_train");
    write_scene(root / "s1", 5);
    write_scene(root / "s2", 6);
    auto cfg = tiny_config();
    cfg.dataset_root = root.path().string();
    std::vector<std::string> warnings;
    const auto scenes = scenes_for(cfg, &warnings);
    CHECK(scenes.size() == 2);
    CHECK(warnings.empty());
    Trainer t(cfg, scenes);
    CHECK(std::isfinite(t.step().total_g));
}

TEST_CASE("checkpoint round trip resumes bit-exactly") {
    testing::TempDir dir("ckpt");
    const auto cfg = tiny_config();
    Trainer a(cfg, scenes_for(cfg));
    a.step();
    a.step();
    a.save(dir / "full.ckpt");
    const auto next_a = a.step();

    Trainer b(cfg, scenes_for(cfg));
    b.load(dir / "full.ckpt");
    CHECK(b.steps_done() == 2);
    CHECK(same(b.step(), next_a));
}

TEST_CASE("damaged checkpoints are rejected without side effects") {
    testing::TempDir dir("ckpt_bad");
    const auto cfg = tiny_config();
    Trainer a(cfg, scenes_for(cfg));
    a.save(dir / "full.ckpt");
    auto bytes = io::read_bytes(dir / "full.ckpt");

    auto cut = bytes;
    cut.resize(bytes.size() - 100);
    io::write_bytes(dir / "cut.ckpt", cut);
    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x40;
    io::write_bytes(dir / "flip.ckpt", flipped);
    io::write_bytes(dir / "tiny.ckpt", std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 10));

    Trainer b(cfg, scenes_for(cfg));
    b.step();
    const auto before = snapshot(*b.embedder);
    for (const char* name : {"cut.ckpt", "flip.ckpt", "tiny.ckpt", "missing.ckpt"}) {
        CAPTURE(name);
        CHECK_THROWS_AS(b.load(dir / name), CheckpointError);
    }
    CHECK(unchanged(*b.embedder, before));
    CHECK(b.steps_done() == 1);

    auto other = cfg;
    other.restorer.trunk = 24;
    Trainer c(other, scenes_for(other));
    CHECK_THROWS_AS(c.load(dir / "full.ckpt"), CheckpointError);
}

TEST_CASE("decoder-only checkpoints restore like the full model") {
    testing::TempDir dir("decoder");
    const auto cfg = tiny_config();
    Trainer t(cfg, scenes_for(cfg));
    t.step();
    t.save(dir / "full.ckpt");
    auto full = load_codec(dir / "full.ckpt");
    save_decoder(dir / "dec.ckpt", full.decoder);
    auto dec = load_decoder(dir / "dec.ckpt");
    CHECK(dec.depths == default_depths());

    const auto scene = generate_synthetic_scene(9, 64, 64);
    const auto e = transmit(full.embed(scene.mpi, scene.reference), {});
    const auto a = full.decoder.restore(e), b = dec.restore(e);
    for (int i = 0; i < a.num_planes(); ++i) CHECK(a.plane(i) == b.plane(i));
    CHECK_THROWS_AS(load_codec(dir / "dec.ckpt"), CheckpointError);
    // The in-memory codec matches the one read back from disk.
    auto live = t.codec();
    CHECK(live.embed(scene.mpi, scene.reference) == full.embed(scene.mpi, scene.reference));
}

TEST_CASE("run_training writes metrics and a final checkpoint, then resumes") {
    testing::TempDir dir("run");
    auto cfg = tiny_config();
    cfg.steps = 3;
    cfg.checkpoint_path = (dir / "run.ckpt").string();
    cfg.metrics_path = (dir / "metrics.csv").string();
    cfg.log_every = 1;
    int seen = 0;
    {
        Trainer t(cfg, scenes_for(cfg));
        run_training(t, [&](const LossRecord&) { ++seen; });
    }
    CHECK(seen == 3);
    CHECK(std::filesystem::exists(cfg.checkpoint_path));
    cfg.steps = 5;
    Trainer t(cfg, scenes_for(cfg));
    t.load(cfg.checkpoint_path);
    run_training(t);
    std::ifstream in(cfg.metrics_path);
    std::string line;
    int rows = 0;
    std::getline(in, line);
    CHECK(line.rfind("step,", 0) == 0);
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 5);
}

TEST_CASE("config json round trip and strictness") {
    auto cfg = tiny_config();
    cfg.jpeg = {75, jpeg::ChromaSubsampling::k444};
    cfg.perturb.hue = false;
    const auto j = to_json(cfg);
    const auto back = train_config_from_json(j);
    CHECK(to_json(back) == j);
    CHECK(back.jpeg.quality == 75);
    CHECK_FALSE(back.perturb.hue);

    auto bad = j;
    bad["learning_rate"] = 0.1;
    CHECK_THROWS_AS(train_config_from_json(bad), std::invalid_argument);
    bad = j;
    bad["jpeg"]["chroma_subsampling"] = "4:1:1";
    CHECK_THROWS_AS(train_config_from_json(bad), std::invalid_argument);

    auto small = cfg;
    small.width = 60;
    CHECK_THROWS_AS(small.validate(), std::invalid_argument);
    small.width = 56;
    CHECK_THROWS_AS(small.validate(), std::invalid_argument);
}

TEST_CASE("cosine learning-rate schedule") {
    auto cfg = tiny_config();
    cfg.steps = 100;
    CHECK(lr_factor(cfg, 50) == 1.0);
    cfg.lr_schedule = "cosine";
    CHECK(lr_factor(cfg, 0) == 1.0);
    CHECK(lr_factor(cfg, 50) == doctest::Approx(0.5));
    CHECK(lr_factor(cfg, 100) == doctest::Approx(0.0));
    CHECK(lr_factor(cfg, 150) == doctest::Approx(0.0));
    CHECK(train_config_from_json(to_json(cfg)).lr_schedule == "cosine");
    cfg.lr_schedule = "step";
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("trainer rejects mismatched scenes") {
    const auto cfg = tiny_config();
    auto scenes = scenes_for(cfg);
    scenes[1].depths[0] = 90.0;
    CHECK_THROWS_AS(Trainer(cfg, scenes), std::invalid_argument);
    CHECK_THROWS_AS(Trainer(cfg, {}), std::invalid_argument);
}
