#include <doctest.h>

#include <cmath>
#include <limits>

#include "cyclehair/errors.hpp"
#include "cyclehair/objectives.hpp"
#include "gradcheck.hpp"

using namespace cyclehair;

namespace {

using Volume = std::vector<std::vector<std::vector<double>>>;  // [c][y][x]

Volume to_volume(const torch::Tensor& chw) {
  const auto t = chw.to(torch::kFloat64).contiguous();
  Volume v(t.size(0), std::vector<std::vector<double>>(t.size(1), std::vector<double>(t.size(2))));
  for (std::int64_t c = 0; c < t.size(0); ++c)
    for (std::int64_t y = 0; y < t.size(1); ++y)
      for (std::int64_t x = 0; x < t.size(2); ++x) v[c][y][x] = t[c][y][x].item<double>();
  return v;
}

Volume conv3x3_relu(const Volume& in, const torch::Tensor& weight, const torch::Tensor& bias) {
  const int out_c = static_cast<int>(weight.size(0));
  const int h = static_cast<int>(in[0].size());
  const int w = static_cast<int>(in[0][0].size());
  Volume out(out_c, std::vector<std::vector<double>>(h, std::vector<double>(w)));
  for (int o = 0; o < out_c; ++o) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = bias[o].item<double>();
        for (std::size_t c = 0; c < in.size(); ++c) {
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const int yy = y + dy;
              const int xx = x + dx;
              if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
              acc += weight[o][c][dy + 1][dx + 1].item<double>() * in[c][yy][xx];
            }
          }
        }
        out[o][y][x] = std::max(acc, 0.0);
      }
    }
  }
  return out;
}

Volume max_pool2(const Volume& in) {
  Volume out(in.size());
  for (std::size_t c = 0; c < in.size(); ++c) {
    const std::size_t h = in[c].size() / 2;
    const std::size_t w = in[c][0].size() / 2;
    out[c].assign(h, std::vector<double>(w));
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out[c][y][x] = std::max({in[c][2 * y][2 * x], in[c][2 * y][2 * x + 1], in[c][2 * y + 1][2 * x],
                                 in[c][2 * y + 1][2 * x + 1]});
  }
  return out;
}

// Scalar re-derivation of the perceptual term for one-image batches.
double brute_perceptual(const torch::Tensor& a, const torch::Tensor& b, FeatureExtractorImpl& fx) {
  const double mean[3] = {0.485, 0.456, 0.406};
  const double std[3] = {0.229, 0.224, 0.225};
  std::vector<std::vector<Volume>> taps(2);
  for (int which = 0; which < 2; ++which) {
    Volume h = to_volume((which == 0 ? a : b)[0]);
    for (int c = 0; c < 3; ++c)
      for (auto& row : h[c])
        for (auto& v : row) v = ((v + 1.0) * 0.5 - mean[c]) / std[c];
    for (std::size_t s = 0; s < fx.stage_widths().size(); ++s) {
      if (s > 0) h = max_pool2(h);
      const auto params = fx.named_children()[s].value()->named_parameters();
      for (std::size_t layer = 0; layer < fx.stage_widths()[s].size(); ++layer) {
        h = conv3x3_relu(h, params[2 * layer].value(), params[2 * layer + 1].value());
      }
      taps[which].push_back(h);
    }
  }
  double total = 0.0;
  for (std::size_t t = 0; t < taps[0].size(); ++t) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < taps[0][t].size(); ++c)
      for (std::size_t y = 0; y < taps[0][t][c].size(); ++y)
        for (std::size_t x = 0; x < taps[0][t][c][y].size(); ++x) {
          const double d = taps[0][t][c][y][x] - taps[1][t][c][y][x];
          sum += d * d;
          ++count;
        }
    total += sum / static_cast<double>(count);
  }
  return total / static_cast<double>(taps[0].size());
}

FeatureExtractor tiny_extractor() {
  auto fx = make_random_extractor({{4}, {5, 3}}, 17, true);
  fx->to(torch::kFloat64);
  return fx;
}

GeneratorParts parts_with(double gan_xy, double gan_yx, double cyc_x, double cyc_y) {
  const auto d = torch::TensorOptions().dtype(torch::kFloat64);
  GeneratorParts p;
  p.gan_xy = torch::tensor(gan_xy, d);
  p.gan_yx = torch::tensor(gan_yx, d);
  p.x = torch::zeros({1}, d);
  p.rec_x = torch::full({1}, cyc_x, d);
  p.y = torch::zeros({1}, d);
  p.rec_y = torch::full({1}, cyc_y, d);
  return p;
}

}  // namespace

TEST_SUITE("objectives") {
  TEST_CASE("least-squares adversarial loss") {
    CHECK(gan_loss(torch::ones({2, 1, 3, 3}), true).item<double>() == 0.0);
    CHECK(gan_loss(torch::zeros({2, 1, 3, 3}), true).item<double>() == 1.0);
    CHECK(gan_loss(torch::tensor({0.0, 1.0}), false).item<double>() == 0.5);
    CHECK_THROWS_AS(gan_loss(torch::tensor({0.0, std::numeric_limits<double>::quiet_NaN()}), true), NumericError);
  }

  TEST_CASE("cycle loss") {
    const auto x = torch::randn({2, 3, 8, 8});
    CHECK(cycle_loss(x, x).item<double>() == 0.0);
    CHECK(cycle_loss(torch::zeros({1, 3, 4, 4}), torch::full({1, 3, 4, 4}, 0.5)).item<double>() == 0.5);
    CHECK_THROWS_AS(cycle_loss(torch::zeros({1, 3, 4, 4}), torch::zeros({1, 3, 4, 5})), ShapeError);

    const auto a = torch::randn({2, 3, 5, 4}, torch::kFloat64);
    const auto b = torch::randn({2, 3, 5, 4}, torch::kFloat64);
    double sum = 0.0;
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 5; ++y)
          for (int xx = 0; xx < 4; ++xx) sum += std::abs(a[n][c][y][xx].item<double>() - b[n][c][y][xx].item<double>());
    CHECK(cycle_loss(a, b).item<double>() == doctest::Approx(sum / 120.0).epsilon(1e-12));
  }

  TEST_CASE("perceptual loss: identity, sign and scalar oracle") {
    auto fx = tiny_extractor();
    const auto x = torch::rand({1, 3, 8, 8}, torch::kFloat64) * 2 - 1;
    const auto y = torch::rand({1, 3, 8, 8}, torch::kFloat64) * 2 - 1;
    CHECK(perceptual_loss(x, x, *fx).item<double>() == 0.0);
    const double value = perceptual_loss(x, y, *fx).item<double>();
    CHECK(value >= 0.0);
    CHECK(value == doctest::Approx(brute_perceptual(x, y, *fx)).epsilon(1e-10));
  }

  TEST_CASE("extractor is frozen and taps every stage") {
    auto fx = make_random_extractor({{4}, {5}, {6}}, 1, true);
    for (const auto& p : fx->parameters()) CHECK_FALSE(p.requires_grad());
    const auto taps = fx->forward(torch::zeros({1, 3, 8, 8}));
    REQUIRE(taps.size() == 3);
    CHECK(taps[2].sizes().vec() == std::vector<std::int64_t>{1, 6, 2, 2});
    CHECK(fx->minimum_input_size() == 4);
    CHECK_THROWS_AS(fx->forward(torch::zeros({1, 3, 2, 2})), ShapeError);
  }

  TEST_CASE("VGG16 stand-in has thirteen convs in five stages") {
    const auto widths = vgg16_stage_widths();
    std::size_t convs = 0;
    for (const auto& s : widths) convs += s.size();
    CHECK(widths.size() == 5);
    CHECK(convs == 13);
    auto fx = make_vgg16_extractor(3);
    CHECK(fx->provenance().find("vgg16-random") == 0);
  }

  TEST_CASE("gradients match central differences") {
    const auto target = torch::rand({1, 3, 8, 8}, torch::kFloat64) * 2 - 1;
    // Keep every element away from the |.| kink.
    const auto offset = (torch::rand({1, 3, 8, 8}, torch::kFloat64) * 0.5 + 0.1) *
                        torch::where(torch::rand({1, 3, 8, 8}) > 0.5, 1.0, -1.0).to(torch::kFloat64);
    const auto x0 = target + offset;

    const auto cyc = testing::check_gradient([&](const torch::Tensor& x) { return cycle_loss(target, x); }, x0);
    CHECK(cyc.checked == 192);
    CHECK(cyc.max_relative_error < 1e-3);

    const auto gan = testing::check_gradient([](const torch::Tensor& x) { return gan_loss(x, true); }, x0);
    CHECK(gan.max_relative_error < 1e-3);
    const auto gan_fake = testing::check_gradient([](const torch::Tensor& x) { return gan_loss(x, false); }, x0);
    CHECK(gan_fake.max_relative_error < 1e-3);

    auto fx = tiny_extractor();
    const auto perc =
        testing::check_gradient([&](const torch::Tensor& x) { return perceptual_loss(target, x, *fx); }, x0);
    CHECK(perc.max_relative_error < 1e-3);
  }

  TEST_CASE("regime C weighted sum") {
    const auto out = generator_objective(LossRegime::from_code("C"), parts_with(0.5, 0.5, 0.2, 0.3), nullptr);
    CHECK(out.total.item<double>() == 6.0);
    std::vector<std::string> names;
    for (const auto& [name, value] : out.terms) names.push_back(name);
    CHECK(names == std::vector<std::string>{"gan_G_xy", "gan_G_yx", "cyc_x", "cyc_y"});
  }

  TEST_CASE("regime P ignores cycle inputs") {
    auto fx = tiny_extractor();
    GeneratorParts p;
    const auto d = torch::TensorOptions().dtype(torch::kFloat64);
    p.gan_xy = torch::tensor(0.25, d);
    p.gan_yx = torch::tensor(0.75, d);
    p.x = torch::rand({1, 3, 8, 8}, d);
    p.y = torch::rand({1, 3, 8, 8}, d);
    p.rec_x = torch::rand({1, 3, 8, 8}, d).requires_grad_(true);
    p.rec_y = torch::rand({1, 3, 8, 8}, d);
    const auto regime = LossRegime::from_code("P");
    const auto out = generator_objective(regime, p, fx.get());
    for (const auto& [name, value] : out.terms) CHECK(name.rfind("cyc", 0) != 0);
    const double perc = perceptual_loss(p.x, p.rec_x, *fx).item<double>() + perceptual_loss(p.y, p.rec_y, *fx).item<double>();
    CHECK(out.total.item<double>() == doctest::Approx(1.0 + regime.lambda_perc * perc).epsilon(1e-12));

    // The gradient reaching rec_x is exactly the perceptual one.
    out.total.backward();
    auto leaf = p.rec_x.detach().clone().requires_grad_(true);
    (regime.lambda_perc * perceptual_loss(p.x, leaf, *fx)).backward();
    CHECK(torch::allclose(p.rec_x.grad(), leaf.grad(), 1e-12, 1e-14));
  }

  TEST_CASE("regime C+P adds exactly lambda_perc times the perceptual terms") {
    auto fx = tiny_extractor();
    const auto d = torch::TensorOptions().dtype(torch::kFloat64);
    GeneratorParts p;
    p.gan_xy = torch::tensor(0.3, d);
    p.gan_yx = torch::tensor(0.6, d);
    p.x = torch::rand({1, 3, 8, 8}, d) * 2 - 1;
    p.y = torch::rand({1, 3, 8, 8}, d) * 2 - 1;
    p.rec_x = torch::rand({1, 3, 8, 8}, d) * 2 - 1;
    p.rec_y = torch::rand({1, 3, 8, 8}, d) * 2 - 1;
    const auto c = generator_objective(LossRegime::from_code("C"), p, fx.get());
    const auto cp_regime = LossRegime::from_code("C+P");
    const auto cp = generator_objective(cp_regime, p, fx.get());
    double perc = 0.0;
    for (const auto& [name, value] : cp.terms) {
      if (name.rfind("perc", 0) == 0) perc += value.item<double>();
    }
    const auto perc_sum = perceptual_loss(p.x, p.rec_x, *fx) + perceptual_loss(p.y, p.rec_y, *fx);
    CHECK(perc_sum.item<double>() == perc);
    CHECK((c.total + cp_regime.lambda_perc * perc_sum).item<double>() == cp.total.item<double>());
  }

  TEST_CASE("objective preconditions") {
    CHECK_THROWS_AS(generator_objective(LossRegime::from_code("P"), parts_with(0, 0, 0, 0), nullptr), ConfigError);
    GeneratorParts missing;
    CHECK_THROWS_AS(generator_objective(LossRegime::from_code("C"), missing, nullptr), ConfigError);
    LossRegime none;
    none.use_cycle = false;
    none.use_perceptual = false;
    CHECK_THROWS_AS(generator_objective(none, parts_with(0, 0, 0, 0), nullptr), ConfigError);
  }

  TEST_CASE("discriminator objective") {
    const auto ones = torch::ones({1, 1, 6, 6});
    const auto zeros = torch::zeros({1, 1, 6, 6});
    CHECK(discriminator_objective(ones, zeros).item<double>() == 0.0);
    CHECK(discriminator_objective(zeros, ones).item<double>() == 1.0);
    const auto half = torch::full({1, 1, 6, 6}, 0.5);
    CHECK(discriminator_objective(half, half).item<double>() == 0.25);
  }

  TEST_CASE("term order is stable") {
    CHECK(term_order() == std::vector<std::string>{"gan_G_xy", "gan_G_yx", "d_x", "d_y", "cyc_x", "cyc_y", "perc_x",
                                                   "perc_y"});
  }
}
