#include <doctest.h>

#include <fstream>
#include <limits>

#include "cyclehair/errors.hpp"
#include "cyclehair/tensor_io.hpp"
#include "cyclehair/trainer.hpp"
#include "test_support.hpp"

using namespace cyclehair;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(ConditionMode mode, const std::string& regime) {
  ExperimentConfig c;
  c.name = "tiny";
  c.generator_family = GeneratorFamily::ResNet;
  c.n_blocks = 6;
  c.n_train_images = 2;
  c.n_test_images = 1;
  c.image_size = 32;
  c.condition_mode = mode;
  c.loss_regime = LossRegime::from_code(regime);
  c.schedule = {2, 1, 2e-4};
  c.seed = 3;
  c.base_width = 8;
  c.checkpoint_every = 1;
  return c;
}

struct Batch {
  torch::Tensor x;
  torch::Tensor y;
  std::vector<ConditionVector> cond;
};

Batch make_batch(std::uint64_t seed, std::size_t vocab) {
  torch::manual_seed(seed);
  Batch b{torch::rand({1, 3, 32, 32}) * 2 - 1, torch::rand({1, 3, 32, 32}) * 2 - 1, {}};
  ConditionVector c;
  for (std::size_t i = 0; i < vocab; ++i) c.bits.push_back(i % 2 == 0);
  b.cond.push_back(c);
  return b;
}

std::vector<torch::Tensor> snapshot(torch::nn::Module& m) {
  std::vector<torch::Tensor> out;
  for (const auto& p : m.parameters()) out.push_back(p.detach().clone());
  return out;
}

bool unchanged(torch::nn::Module& m, const std::vector<torch::Tensor>& before) {
  const auto now = m.parameters();
  for (std::size_t i = 0; i < now.size(); ++i) {
    if (!torch::equal(now[i], before[i])) return false;
  }
  return true;
}

void set_lr(torch::optim::Adam& opt, double lr) {
  for (auto& g : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("learning-rate schedule") {
    const Schedule s{200, 100, 2e-4};
    CHECK(lr_at(0, s) == 2e-4);
    CHECK(lr_at(99, s) == 2e-4);
    CHECK(lr_at(150, s) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(lr_at(200, s) == 0.0);
    CHECK_THROWS_AS(lr_at(-1, s), ConfigError);
    CHECK_THROWS_AS(lr_at(201, s), ConfigError);
  }

  TEST_CASE("property: lr_at is non-increasing and ends at zero") {
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
      const int total = 1 + static_cast<int>(uniform_index(rng, 300));
      const int hold = static_cast<int>(uniform_index(rng, total + 1));
      const Schedule s{total, hold, uniform_unit(rng) * 1e-3 + 1e-6};
      double previous = lr_at(0, s);
      for (int e = 1; e <= total; ++e) {
        const double lr = lr_at(e, s);
        REQUIRE(lr <= previous);
        previous = lr;
      }
      REQUIRE(lr_at(total, s) == 0.0);
    }
  }

  TEST_CASE("image pool: pass-through, fill phase and swap rate") {
    Rng rng(1);
    ImagePool passthrough(0);
    const auto fresh = torch::randn({2, 3, 4, 4});
    CHECK(torch::equal(passthrough.query(fresh, rng), fresh));
    CHECK(passthrough.size() == 0);

    ImagePool pool(50);
    for (int i = 0; i < 50; ++i) {
      const auto img = torch::full({1, 3, 2, 2}, static_cast<float>(i));
      REQUIRE(torch::equal(pool.query(img, rng), img));
    }
    CHECK(pool.size() == 50);

    int swapped = 0;
    const int calls = 10000;
    for (int i = 0; i < calls; ++i) {
      const auto img = torch::full({1, 3, 2, 2}, -1.0f - static_cast<float>(i));
      if (!torch::equal(pool.query(img, rng), img)) ++swapped;
    }
    CHECK(pool.size() == 50);
    CHECK(static_cast<double>(swapped) / calls == doctest::Approx(0.5).epsilon(0.04));
  }

  TEST_CASE("image pool stores detached images with their conditions") {
    Rng rng(2);
    ImagePool pool(3);
    auto leaf = torch::randn({2, 3, 4, 4}, torch::requires_grad());
    const auto fake = leaf * 2.0;
    const std::vector<ConditionVector> conds{{{1, 0}}, {{0, 1}}};
    const auto [images, chosen] = pool.query(fake, conds, rng);
    CHECK_FALSE(images.requires_grad());
    CHECK(chosen == conds);
    for (const auto& e : pool.entries()) {
      CHECK_FALSE(e.image.requires_grad());
      CHECK_FALSE(e.image.grad_fn());
    }
    CHECK(pool.entries()[1].condition == conds[1]);
    CHECK_THROWS_AS(pool.query(fake, {conds[0]}, rng), ShapeError);
  }

  TEST_CASE("train steps replay identically") {
    const auto config = tiny_config(ConditionMode::Four, "C");
    auto a = TrainState::initialize(config);
    auto b = TrainState::initialize(config);
    for (int step = 0; step < 2; ++step) {
      const auto batch = make_batch(100 + step, 4);
      const auto ra = train_step(a, batch.x, batch.y, batch.cond, nullptr);
      const auto rb = train_step(b, batch.x, batch.y, batch.cond, nullptr);
      CHECK(ra.terms == rb.terms);
      CHECK(ra.loss_G == rb.loss_G);
    }
    CHECK(a.step == 2);
  }

  TEST_CASE("regime P reports perceptual terms and no cycle terms") {
    const auto config = tiny_config(ConditionMode::Four, "P");
    auto state = TrainState::initialize(config);
    auto fx = make_extractor_for(config, std::nullopt);
    REQUIRE_FALSE(fx.is_empty());
    const auto batch = make_batch(5, 4);
    const auto report = train_step(state, batch.x, batch.y, batch.cond, fx.get());
    CHECK_FALSE(report.has("cyc_x"));
    CHECK_FALSE(report.has("cyc_y"));
    CHECK(report.has("perc_x"));
    CHECK(report.has("perc_y"));
    CHECK(report.has("d_x"));
    CHECK(report.all_finite());
    CHECK_THROWS_AS(train_step(state, batch.x, batch.y, batch.cond, nullptr), ConfigError);
  }

  TEST_CASE("discriminator updates never touch generators and vice versa") {
    const auto config = tiny_config(ConditionMode::Four, "C");
    const auto batch = make_batch(9, 4);

    auto frozen_g = TrainState::initialize(config);
    train_step(frozen_g, batch.x, batch.y, batch.cond, nullptr);  // populate optimizer state
    set_lr(*frozen_g.opt_G, 0.0);
    const auto g_before = snapshot(*frozen_g.G);
    const auto f_before = snapshot(*frozen_g.F);
    const auto e_before = snapshot(*frozen_g.embedding);
    const auto dy_before = snapshot(*frozen_g.Dy);
    train_step(frozen_g, batch.x, batch.y, batch.cond, nullptr);
    CHECK(unchanged(*frozen_g.G, g_before));
    CHECK(unchanged(*frozen_g.F, f_before));
    CHECK(unchanged(*frozen_g.embedding, e_before));
    CHECK_FALSE(unchanged(*frozen_g.Dy, dy_before));

    auto frozen_d = TrainState::initialize(config);
    train_step(frozen_d, batch.x, batch.y, batch.cond, nullptr);
    set_lr(*frozen_d.opt_Dx, 0.0);
    set_lr(*frozen_d.opt_Dy, 0.0);
    const auto dx = snapshot(*frozen_d.Dx);
    const auto dy = snapshot(*frozen_d.Dy);
    const auto g = snapshot(*frozen_d.G);
    train_step(frozen_d, batch.x, batch.y, batch.cond, nullptr);
    CHECK(unchanged(*frozen_d.Dx, dx));
    CHECK(unchanged(*frozen_d.Dy, dy));
    CHECK_FALSE(unchanged(*frozen_d.G, g));
  }

  TEST_CASE("unconditional steps inject nothing") {
    const auto config = tiny_config(ConditionMode::None, "C");
    auto state = TrainState::initialize(config);
    CHECK(state.plane_width() == 0);
    CHECK(state.generator_spec().in_channels == 3);
    const auto batch = make_batch(4, 0);
    const auto report = train_step(state, batch.x, batch.y, batch.cond, nullptr);
    CHECK(report.all_finite());
    CHECK_THROWS_AS(train_step(state, batch.x, batch.y, {ConditionVector{{1, 0, 1, 0}}}, nullptr), ShapeError);
  }

  TEST_CASE("non-finite parameters abort with the last checkpoint") {
    const auto config = tiny_config(ConditionMode::Four, "C");
    auto state = TrainState::initialize(config);
    state.last_checkpoint = "/ckpt/epoch_3";
    {
      torch::NoGradGuard no_grad;
      state.G->parameters()[0].view({-1})[0] = std::numeric_limits<float>::quiet_NaN();
    }
    const auto batch = make_batch(1, 4);
    try {
      train_step(state, batch.x, batch.y, batch.cond, nullptr);
      FAIL("expected NumericAbort");
    } catch (const NumericAbort& e) {
      CHECK(e.last_good_checkpoint() == "/ckpt/epoch_3");
    }
    CHECK(state.step == 0);
  }

  TEST_CASE("checkpoint save, load, save is byte-identical") {
    testing::TempDir dir("ckpt");
    const auto config = tiny_config(ConditionMode::Four, "C");
    auto state = TrainState::initialize(config);
    for (int i = 0; i < 2; ++i) {
      const auto batch = make_batch(30 + i, 4);
      train_step(state, batch.x, batch.y, batch.cond, nullptr);
    }
    state.epoch = 1;
    state.save(dir / "a");
    const auto loaded = TrainState::load(dir / "a");
    CHECK(loaded.step == 2);
    CHECK(loaded.epoch == 1);
    CHECK(loaded.pool_x.size() == 2);
    loaded.save(dir / "b");
    for (const auto& name : {"G.bin", "F.bin", "Dx.bin", "Dy.bin", "embedding.bin", "config.snapshot", "rng.state",
                             "train_state.bin"}) {
      CAPTURE(name);
      CHECK(testing::slurp(dir / "a" / name) == testing::slurp(dir / "b" / name));
    }

    // The restored state continues exactly like the original.
    auto resumed = TrainState::load(dir / "a");
    const auto batch = make_batch(77, 4);
    const auto r1 = train_step(state, batch.x, batch.y, batch.cond, nullptr);
    const auto r2 = train_step(resumed, batch.x, batch.y, batch.cond, nullptr);
    CHECK(r1.terms == r2.terms);
  }

  TEST_CASE("damaged checkpoints are rejected") {
    testing::TempDir dir("bad-ckpt");
    auto state = TrainState::initialize(tiny_config(ConditionMode::Four, "C"));
    state.save(dir / "c");
    const auto bytes = testing::slurp(dir / "c" / "G.bin");
    {
      std::ofstream(dir / "c" / "G.bin", std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() / 2);
    }
    CHECK_THROWS_AS(TrainState::load(dir / "c"), CheckpointError);
    CHECK_THROWS_AS(resolve_checkpoint(dir / "nothing"), CheckpointError);
  }

  TEST_CASE("preset 1 wires an unconditional 256 px ResNet-9 with cycle loss only") {
    const auto c = preset(1);
    const auto g = generator_spec_for(c);
    CHECK(g.family == GeneratorFamily::ResNet);
    CHECK(g.n_blocks == 9);
    CHECK(g.image_size == 256);
    CHECK(g.in_channels == 3);
    CHECK(discriminator_spec_for(c).in_channels == 3);
    CHECK(make_extractor_for(c, std::nullopt).is_empty());
    CHECK(generator_spec_for(preset(5)).in_channels == 11);
    CHECK(generator_spec_for(preset(10)).family == GeneratorFamily::UNet);
  }

  TEST_CASE("metrics lines are tab separated in term order") {
    LossReport r;
    r.loss_G = 6.5;
    r.terms = {{"gan_G_xy", 0.25}, {"gan_G_yx", 0.5}, {"d_x", 0.125}, {"d_y", 1.0}, {"cyc_x", 0.2}, {"cyc_y", 0.3}};
    CHECK(format_metrics_line(12, 3, r, 2e-4) ==
          "12\t3\tgan_G_xy=0.25\tgan_G_yx=0.5\td_x=0.125\td_y=1\tcyc_x=0.2\tcyc_y=0.3\tloss_G=6.5\tlr=0.0002");
  }

  TEST_CASE("desk smoke run writes five network files per checkpoint") {
    testing::TempDir dir("run");
    const auto data = testing::make_desk_data(dir.path(), ConditionMode::None, 4, 2);
    const auto config = desk_preset("smoke");
    RunOptions options;
    options.out_dir = dir / "ck";
    std::vector<std::string> lines;
    options.on_step = [&](const std::string& l) { lines.push_back(l); };
    const auto final_dir = run(config, load_training_data(data.prepared, config), options);
    CHECK(final_dir == dir / "ck" / "smoke" / "epoch_2");
    int networks = 0;
    for (const auto& e : fs::directory_iterator(final_dir)) {
      if (e.path().extension() == ".bin" && e.path().filename() != "train_state.bin") ++networks;
    }
    CHECK(networks == 5);
    for (const auto& name : {"manifest.txt", "config.snapshot", "rng.state"}) CHECK(fs::exists(final_dir / name));
    CHECK(fs::exists(dir / "ck" / "smoke" / "manifest.txt"));
    CHECK(lines.size() == 8);
    const auto metrics = testing::read_metrics(dir / "ck" / "smoke" / "metrics.log");
    REQUIRE(metrics.size() == 8);
    CHECK(metrics.front().at("step") == 1);
    CHECK(metrics.front().at("epoch") == 1);
    CHECK(metrics.back().at("epoch") == 2);
    CHECK(metrics.back().count("cyc_x") == 1);
  }

  TEST_CASE("only the latest two checkpoints are kept") {
    testing::TempDir dir("retain");
    const auto data = testing::make_desk_data(dir.path(), ConditionMode::None, 2, 1, 30);
    auto config = tiny_config(ConditionMode::None, "C");
    config.schedule = {3, 3, 2e-4};
    RunOptions options;
    options.out_dir = dir / "ck";
    run(config, load_training_data(data.prepared, config), options);
    CHECK_FALSE(fs::exists(dir / "ck" / "tiny" / "epoch_1"));
    CHECK(fs::exists(dir / "ck" / "tiny" / "epoch_2"));
    CHECK(fs::exists(dir / "ck" / "tiny" / "epoch_3"));
    CHECK(resolve_checkpoint(dir / "ck" / "tiny") == dir / "ck" / "tiny" / "epoch_3");

    auto other = config;
    other.seed = 99;
    RunOptions resume = options;
    resume.resume_from = dir / "ck" / "tiny" / "epoch_2";
    CHECK_THROWS_AS(run(other, load_training_data(data.prepared, other), resume), ConfigError);
  }

  TEST_CASE("training data needs enough listed images") {
    testing::TempDir dir("short");
    const auto data = testing::make_desk_data(dir.path(), ConditionMode::Four, 2, 1, 30);
    auto config = tiny_config(ConditionMode::Four, "C");
    const auto loaded = load_training_data(data.prepared, config);
    CHECK(loaded.x_images.size() == 2);
    CHECK(loaded.y_conditions.size() == 2);
    for (const auto& c : loaded.y_conditions) CHECK(c.size() == 4);
    config.n_train_images = 5;
    CHECK_THROWS_AS(load_training_data(data.prepared, config), InsufficientRecords);
  }
}
