#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "wmforge/detector.hpp"
#include "wmforge/errors.hpp"
#include "wmforge/watermark.hpp"

using namespace wmforge;

namespace {

double green_fraction(const std::vector<TokenId>& s, const ColorCode& c) {
  long g = 0;
  for (auto t : s) g += c[static_cast<std::size_t>(t)];
  return double(g) / double(s.size());
}

}  // namespace

TEST_SUITE("watermark") {
  TEST_CASE("split cardinality is exactly floor(gamma m)") {
    CHECK(derive_split(WatermarkKey{99}, 0.5, 4).green_count() == 2);
    for (std::uint64_t key : {0ULL, 1ULL, 77ULL, 0xdeadbeefULL})
      for (double gamma : {0.1, 0.25, 0.3, 0.5, 0.75, 0.9})
        for (std::size_t m : {2, 3, 10, 97, 500, 1000}) {
          const auto s = derive_split(WatermarkKey{key}, gamma, m);
          CHECK(s.green_count() == static_cast<std::size_t>(std::floor(gamma * double(m) + 1e-9)));
          CHECK(s.green_tokens().size() == s.green_count());
        }
  }

  TEST_CASE("split is a pure function of key, gamma and m") {
    CHECK(derive_split(WatermarkKey{5}, 0.25, 300).color == derive_split(WatermarkKey{5}, 0.25, 300).color);
    CHECK(derive_split(WatermarkKey{5}, 0.25, 300).color != derive_split(WatermarkKey{6}, 0.25, 300).color);
  }

  TEST_CASE("gamma outside (0,1) is rejected") {
    CHECK_THROWS_AS(derive_split(WatermarkKey{1}, 0.0, 10), ConfigError);
    CHECK_THROWS_AS(derive_split(WatermarkKey{1}, 1.0, 10), ConfigError);
    CHECK_THROWS_AS(derive_split(WatermarkKey{1}, -0.2, 10), ConfigError);
  }

  TEST_CASE("independent keys overlap like random subsets") {
    // Overlap of two random 250-subsets of 1000 is hypergeometric with mean 62.5.
    double total = 0;
    for (std::uint64_t k = 0; k < 100; ++k) {
      const auto a = derive_split(WatermarkKey{2 * k + 1}, 0.25, 1000);
      const auto b = derive_split(WatermarkKey{2 * k + 2}, 0.25, 1000);
      int both = 0;
      for (std::size_t j = 0; j < 1000; ++j) both += a.color[j] & b.color[j];
      CHECK(std::abs(both - 62.5) <= 25.0);
      total += both;
    }
    CHECK(std::abs(total / 100 - 62.5) < 3.0);
  }

  TEST_CASE("delta = 0 reproduces unwatermarked sampling") {
    const auto model = build_model(4, 100, 8);
    const auto split = derive_split(WatermarkKey{3}, 0.25, 100);
    Rng a(10), b(10);
    CHECK(sample_watermarked_sentence(model, split, 0.0, 80, a) == sample_natural_sentence(model, 80, b));
  }

  TEST_CASE("large delta on uniform logits matches the closed-form green rate") {
    const auto model = fixture::uniform_model(200);
    const auto split = derive_split(WatermarkKey{8}, 0.25, 200);
    const double expect = 0.25 * std::exp(10.0) / (0.25 * std::exp(10.0) + 0.75);
    std::vector<double> fr;
    for (std::uint64_t s = 0; s < 40; ++s) {
      Rng rng(s);
      fr.push_back(green_fraction(sample_watermarked_sentence(model, split, 10.0, 100, rng), split.color));
    }
    CHECK(fixture::mean(fr) > 0.95);
    CHECK(std::abs(fixture::mean(fr) - expect) < 0.01);
  }

  TEST_CASE("green count grows with delta") {
    const auto model = build_model(2, 300, 16);
    const auto split = derive_split(WatermarkKey{21}, 0.25, 300);
    double prev = -1;
    for (double delta : {0.0, 2.0, 4.0}) {
      std::vector<double> fr;
      for (std::uint64_t s = 0; s < 500; ++s) {
        Rng rng(stream_seed(77, s));
        fr.push_back(green_fraction(sample_watermarked_sentence(model, split, delta, 50, rng), split.color));
      }
      CHECK(fixture::mean(fr) > prev);
      prev = fixture::mean(fr);
    }
  }

  TEST_CASE("gamma=0.5, delta=2 lifts green counts well above half") {
    const auto model = build_model(6, 300, 16);
    const auto split = derive_split(WatermarkKey{4}, 0.5, 300);
    std::vector<double> fr;
    for (std::uint64_t s = 0; s < 100; ++s) {
      Rng rng(stream_seed(5, s));
      fr.push_back(green_fraction(sample_watermarked_sentence(model, split, 2.0, 100, rng), split.color));
    }
    CHECK(fixture::mean(fr) > 0.55);
  }

  TEST_CASE("one key reduces to single-key sampling") {
    const auto model = build_model(3, 80, 8);
    WatermarkParams p;
    p.keys = {WatermarkKey{42}};
    const auto split = derive_split(p.keys[0], p.gamma, 80);
    const auto out = sample_multikey_corpus(model, p, 10, {20, 30}, 9);
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out[i].key_index == 0);
      Rng rng(stream_seed(9, i));
      rng.below(1);
      const auto len = 20 + rng.below(11);
      CHECK(out[i].tokens == sample_watermarked_sentence(model, split, p.delta, len, rng));
    }
  }

  TEST_CASE("keys are drawn uniformly") {
    const auto model = fixture::uniform_model(20);
    WatermarkParams p;
    p.keys = {WatermarkKey{1}, WatermarkKey{2}, WatermarkKey{3}};
    const auto out = sample_multikey_corpus(model, p, 3000, {20, 20}, 17, 2);
    std::size_t per[3] = {0, 0, 0};
    for (const auto& s : out) ++per[s.key_index];
    for (auto c : per) CHECK(std::abs(double(c) - 1000.0) <= 100.0);
  }

  TEST_CASE("multikey sampling does not depend on thread count") {
    const auto model = build_model(3, 60, 8);
    WatermarkParams p;
    p.keys = {WatermarkKey{1}, WatermarkKey{2}};
    const auto a = sample_multikey_corpus(model, p, 40, {20, 40}, 5, 1);
    const auto b = sample_multikey_corpus(model, p, 40, {20, 40}, 5, 4);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].tokens == b[i].tokens);
      CHECK(a[i].key_index == b[i].key_index);
    }
  }
}
