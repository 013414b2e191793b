#include <doctest.h>

#include "cyclehair/errors.hpp"
#include "cyclehair/registry.hpp"
#include "cyclehair/random.hpp"
#include "table_rows.hpp"

using namespace cyclehair;

TEST_SUITE("registry") {
  TEST_CASE("presets equal the experiment table row for row") {
    for (const auto& row : testing::experiment_table()) {
      CAPTURE(row.id);
      const auto c = preset(row.id);
      CHECK(generator_label(c) == row.generator);
      CHECK(c.n_train_images == row.images);
      CHECK(c.image_size == row.size);
      CHECK(c.condition_mode == row.mode);
      CHECK(c.loss_regime.code() == row.loss);
      CHECK(c.schedule.total_epochs == 200);
      CHECK(c.n_test_images == 100);
      CHECK(validate(c).empty());
    }
    CHECK_THROWS_AS(preset(0), UnknownPreset);
    CHECK_THROWS_AS(preset(13), UnknownPreset);
  }

  TEST_CASE("spot checks on presets 5, 9 and 12") {
    const auto p5 = preset(5);
    CHECK(p5.generator_family == GeneratorFamily::ResNet);
    CHECK(p5.n_blocks == 6);
    CHECK(p5.n_train_images == 2000);
    CHECK(p5.image_size == 128);
    CHECK(p5.condition_mode == ConditionMode::Four);
    CHECK(p5.loss_regime.use_cycle);
    CHECK_FALSE(p5.loss_regime.use_perceptual);
    const auto p9 = preset(9);
    CHECK_FALSE(p9.loss_regime.use_cycle);
    CHECK(p9.loss_regime.use_perceptual);
    const auto p12 = preset(12);
    CHECK(p12.n_train_images == 4430);
    CHECK(p12.loss_regime.code() == "P");
    CHECK(preset(1).n_blocks == 9);
    CHECK(preset(1).condition_mode == ConditionMode::None);
  }

  TEST_CASE("desk presets") {
    const auto smoke = desk_preset("smoke");
    CHECK(smoke.n_train_images == 4);
    CHECK(smoke.image_size == 64);
    CHECK(smoke.schedule.total_epochs == 2);
    CHECK(smoke.loss_regime.code() == "C");
    const auto overfit = desk_preset("overfit");
    CHECK(overfit.n_train_images == 2);
    CHECK(overfit.image_size == 64);
    CHECK(overfit.loss_regime.code() == "C");
    CHECK(overfit.schedule.total_epochs * steps_per_epoch(overfit) == 300);
    const auto cond = desk_preset("cond-smoke");
    CHECK(cond.n_train_images == 8);
    CHECK(cond.image_size == 64);
    CHECK(cond.condition_mode == ConditionMode::Four);
    CHECK(cond.loss_regime.code() == "P");
    for (const auto& name : desk_preset_names()) CHECK(validate(desk_preset(name)).empty());
    CHECK_THROWS_AS(desk_preset("huge"), UnknownPreset);
    CHECK(preset_by_name("7") == preset(7));
    CHECK(preset_by_name("smoke") == smoke);
  }

  TEST_CASE("validate reports violations") {
    auto c = preset(5);
    c.image_size = 256;
    CHECK_FALSE(validate(c).empty());
    c.n_blocks = 9;
    CHECK(validate(c).empty());

    auto r = preset(5);
    r.loss_regime.use_cycle = false;
    r.loss_regime.use_perceptual = false;
    CHECK_FALSE(validate(r).empty());

    auto u = preset(10);
    u.image_size = 96;
    CHECK_FALSE(validate(u).empty());

    auto n = preset(2);
    n.n_train_images = 0;
    CHECK_FALSE(validate(n).empty());

    auto e = preset(2);
    e.embedding_dim = 0;
    CHECK_FALSE(validate(e).empty());

    auto s = preset(2);
    s.schedule.hold_epochs = 300;
    CHECK_FALSE(validate(s).empty());
  }

  TEST_CASE("presets round-trip through the config format") {
    for (int k = 1; k <= 12; ++k) {
      CAPTURE(k);
      const auto c = preset(k);
      CHECK(parse_config(format_config(c)) == c);
    }
    for (const auto& name : desk_preset_names()) CHECK(parse_config(format_config(desk_preset(name))) == desk_preset(name));
  }

  TEST_CASE("property: random configs round-trip through the config format") {
    Rng rng(404);
    for (int trial = 0; trial < 200; ++trial) {
      ExperimentConfig c = preset(1 + static_cast<int>(uniform_index(rng, 12)));
      c.name = "r" + std::to_string(trial);
      c.seed = rng();
      c.n_train_images = 1 + static_cast<int>(uniform_index(rng, 5000));
      c.loss_regime.lambda_cyc = uniform_unit(rng) * 20.0 + 1e-3;
      c.loss_regime.lambda_perc = 1.0 / (1.0 + uniform_unit(rng));
      c.schedule.base_lr = uniform_unit(rng) * 1e-3 + 1e-9;
      c.embedding_dim = 1 + static_cast<int>(uniform_index(rng, 16));
      REQUIRE(parse_config(format_config(c)) == c);
    }
  }

  TEST_CASE("config parser errors name the key") {
    try {
      parse_config("image_size = 64\nimage_szie = 64\n");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("image_szie") != std::string::npos);
    }
    try {
      parse_config("seed = banana\n");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("seed") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("no equals sign\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("loss_regime = Q\n"), ConfigError);
  }

  TEST_CASE("comments and blank lines are ignored") {
    const auto c = parse_config("# desk\n\nname = mine\n  image_size = 64  \n");
    CHECK(c.name == "mine");
    CHECK(c.image_size == 64);
  }
}
