#include <doctest.h>

#include "cyclehair/conditioning.hpp"
#include "cyclehair/errors.hpp"
#include "cyclehair/random.hpp"

using namespace cyclehair;

namespace {

corpus::AttributeManifest hair_manifest() {
  corpus::AttributeManifest m;
  m.attributes = {"Black_Hair", "Blond_Hair", "Brown_Hair", "Gray_Hair", "Straight_Hair", "Wavy_Hair"};
  return m;
}

}  // namespace

TEST_SUITE("conditioning") {
  TEST_CASE("vocabularies list colors before styles") {
    const auto four = ConditionVocabulary::for_mode(ConditionMode::Four);
    CHECK(four.classes == std::vector<std::string>{"Black_Hair", "Blond_Hair", "Straight_Hair", "Wavy_Hair"});
    CHECK(four.n_colors == 2);
    const auto six = ConditionVocabulary::for_mode(ConditionMode::Six);
    CHECK(six.classes.size() == 6);
    CHECK(six.n_colors == 4);
    CHECK(ConditionVocabulary::for_mode(ConditionMode::None).empty());
  }

  TEST_CASE("encode follows the record flags") {
    auto m = hair_manifest();
    corpus::AttributeRecord r{"a", {1, -1, -1, -1, 1, -1}};
    CHECK(encode(m, r, ConditionVocabulary::for_mode(ConditionMode::Four)).bits ==
          std::vector<std::uint8_t>{1, 0, 1, 0});
    corpus::AttributeRecord none{"b", {-1, -1, -1, -1, -1, -1}};
    CHECK(encode(m, none, ConditionVocabulary::for_mode(ConditionMode::Four)).bits ==
          std::vector<std::uint8_t>{0, 0, 0, 0});
    corpus::AttributeRecord black_wavy{"c", {1, -1, -1, -1, -1, 1}};
    CHECK(encode(m, black_wavy, ConditionVocabulary::for_mode(ConditionMode::Six)).bits ==
          std::vector<std::uint8_t>{1, 0, 0, 0, 0, 1});
  }

  TEST_CASE("contradictory style labels keep both bits") {
    auto m = hair_manifest();
    corpus::AttributeRecord r{"a", {-1, 1, -1, -1, 1, 1}};
    CHECK(encode(m, r, ConditionVocabulary::for_mode(ConditionMode::Four)).bits ==
          std::vector<std::uint8_t>{0, 1, 1, 1});
  }

  TEST_CASE("encode needs the vocabulary columns") {
    corpus::AttributeManifest m;
    m.attributes = {"Bald", "Male"};
    corpus::AttributeRecord r{"a", {1, 1}};
    CHECK_THROWS_AS(encode(m, r, ConditionVocabulary::for_mode(ConditionMode::Four)), UnknownAttribute);
  }

  TEST_CASE("parse_condition takes one color and one style") {
    const auto four = ConditionVocabulary::for_mode(ConditionMode::Four);
    CHECK(parse_condition("black,straight", four).bits == std::vector<std::uint8_t>{1, 0, 1, 0});
    CHECK(parse_condition("Blond, Wavy", four).bits == std::vector<std::uint8_t>{0, 1, 0, 1});
    CHECK(parse_condition("wavy,blond", four).bits == std::vector<std::uint8_t>{0, 1, 0, 1});
    CHECK_THROWS_AS(parse_condition("black,blond", four), ConditionError);
    CHECK_THROWS_AS(parse_condition("black", four), ConditionError);
    CHECK_THROWS_AS(parse_condition("gray,wavy", four), ConditionError);
    CHECK_THROWS_AS(parse_condition("", four), ConditionError);
    const auto six = ConditionVocabulary::for_mode(ConditionMode::Six);
    CHECK(parse_condition("gray,wavy", six).bits == std::vector<std::uint8_t>{0, 0, 0, 1, 0, 1});
    CHECK_THROWS_AS(parse_condition("black,straight", ConditionVocabulary::for_mode(ConditionMode::None)),
                    ConditionError);
  }

  TEST_CASE("condition labels") {
    const auto four = ConditionVocabulary::for_mode(ConditionMode::Four);
    CHECK(condition_label(parse_condition("black,straight", four), four) == "Black-Straight");
    CHECK(condition_label(parse_condition("blond,wavy", four), four) == "Blond-Wavy");
    CHECK(short_class_name("Straight_Hair") == "straight");
  }

  TEST_CASE("embedding table is seeded") {
    ConditionEmbedding a(4, 8);
    ConditionEmbedding b(4, 8);
    a->reset_parameters(42);
    b->reset_parameters(42);
    CHECK(torch::equal(a->table, b->table));
    b->reset_parameters(43);
    CHECK_FALSE(torch::equal(a->table, b->table));
    CHECK(a->n_classes() == 4);
    CHECK(a->dim() == 8);
  }

  TEST_CASE("embed_broadcast: empty sum, single row, scalar-loop oracle") {
    ConditionEmbedding e(4, 8);
    e->reset_parameters(7);
    const auto table = e->table.detach();

    const auto zero = embed_broadcast(ConditionVector{{0, 0, 0, 0}}, table, 5, 6);
    CHECK(zero.sizes().vec() == std::vector<std::int64_t>{8, 5, 6});
    CHECK(zero.abs().max().item<float>() == 0.0f);

    const auto one = embed_broadcast(ConditionVector{{0, 0, 1, 0}}, table, 5, 6);
    for (int d = 0; d < 8; ++d) {
      CHECK(torch::all(one[d] == table[2][d]).item<bool>());
    }

    const auto two = embed_broadcast(ConditionVector{{1, 0, 1, 0}}, table, 4, 3);
    const auto t = table.contiguous();
    const float* rows = t.data_ptr<float>();
    for (int d = 0; d < 8; ++d) {
      float expected = 0.0f;
      const std::uint8_t bits[4] = {1, 0, 1, 0};
      for (int k = 0; k < 4; ++k) {
        if (bits[k]) expected += rows[k * 8 + d];
      }
      for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 3; ++x) CHECK(two[d][y][x].item<float>() == doctest::Approx(expected).epsilon(1e-6));
      }
    }
    CHECK_THROWS_AS(embed_broadcast(ConditionVector{{1, 0}}, table, 4, 4), ShapeError);
  }

  TEST_CASE("batched embed_broadcast stacks per-item planes") {
    ConditionEmbedding e(4, 3);
    e->reset_parameters(1);
    const std::vector<ConditionVector> conds{{{1, 0, 0, 1}}, {{0, 1, 1, 0}}};
    const auto planes = embed_broadcast(conds, e->table, 2, 2);
    CHECK(planes.sizes().vec() == std::vector<std::int64_t>{2, 3, 2, 2});
    CHECK(torch::allclose(planes[1], embed_broadcast(conds[1], e->table, 2, 2)));
  }

  TEST_CASE("inject concatenates behind the image channels") {
    const auto batch = torch::randn({1, 3, 64, 64});
    const auto planes = torch::randn({8, 64, 64});
    const auto out = inject(batch, planes);
    CHECK(out.sizes().vec() == std::vector<std::int64_t>{1, 11, 64, 64});
    CHECK(torch::equal(out.slice(1, 0, 3), batch));
    CHECK(torch::equal(out.slice(1, 3, 11)[0], planes));

    const auto empty = torch::zeros({0, 64, 64});
    CHECK(inject(batch, empty).is_same(batch));
    CHECK_THROWS_AS(inject(batch, torch::zeros({8, 32, 64})), ShapeError);
  }

  TEST_CASE("unconditional mode injects nothing") {
    CHECK(embedding_width(ConditionMode::None, 8) == 0);
    ConditionEmbedding e(0, 0);
    const auto planes = embed_broadcast(std::vector<ConditionVector>(2), e->table, 16, 16);
    const auto batch = torch::randn({2, 3, 16, 16});
    CHECK(torch::equal(inject(batch, planes), batch));
  }

  TEST_CASE("property: planes are linear in the condition bits") {
    Rng rng(31);
    ConditionEmbedding e(6, 5);
    e->reset_parameters(3);
    for (int trial = 0; trial < 50; ++trial) {
      ConditionVector a;
      ConditionVector b;
      ConditionVector both;
      for (int k = 0; k < 6; ++k) {
        const bool in_a = uniform_unit(rng) < 0.5;
        const bool in_b = !in_a && uniform_unit(rng) < 0.5;
        a.bits.push_back(in_a);
        b.bits.push_back(in_b);
        both.bits.push_back(in_a || in_b);
      }
      const auto sum = embed_broadcast(a, e->table, 3, 3) + embed_broadcast(b, e->table, 3, 3);
      REQUIRE(torch::allclose(sum, embed_broadcast(both, e->table, 3, 3), 1e-6, 1e-7));
    }
  }
}
