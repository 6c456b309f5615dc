#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "fixtures.hpp"
#include "wmforge/errors.hpp"
#include "wmforge/vocab_lm.hpp"

using namespace wmforge;

namespace {

// All-pairs cosine, sorted descending with lower id first on ties.
std::vector<std::vector<Neighbor>> brute_synonyms(const Matrix& e, std::size_t k) {
  const std::size_t m = e.rows;
  std::vector<double> norm(m);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0;
    for (std::size_t c = 0; c < e.cols; ++c) s += e(i, c) * e(i, c);
    norm[i] = std::sqrt(s);
  }
  std::vector<std::vector<Neighbor>> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      double dot = 0;
      for (std::size_t c = 0; c < e.cols; ++c) dot += e(i, c) * e(j, c);
      out[i].push_back({static_cast<TokenId>(j), dot / (norm[i] * norm[j])});
    }
    std::stable_sort(out[i].begin(), out[i].end(), [](auto& a, auto& b) { return a.cosine > b.cosine; });
    out[i].resize(std::min(k, out[i].size()));
  }
  return out;
}

void check_synonyms(const ToyLanguageModel& model) {
  const auto ref = brute_synonyms(model.embeddings(), model.config().synonym_k);
  for (std::size_t i = 0; i < model.vocab_size(); ++i) {
    const auto got = model.synonyms().synonyms(static_cast<TokenId>(i));
    REQUIRE(got.size() == ref[i].size());
    for (std::size_t r = 0; r < got.size(); ++r) {
      CHECK(got[r].token != static_cast<TokenId>(i));
      CHECK(got[r].cosine == doctest::Approx(ref[i][r].cosine).epsilon(1e-12));
      if (r + 1 < got.size()) CHECK(got[r].cosine >= got[r + 1].cosine);
      // Ids must agree unless the oracle saw a near-tie.
      if (got[r].token != ref[i][r].token) CHECK(std::abs(got[r].cosine - ref[i][r].cosine) < 1e-12);
    }
  }
}

}  // namespace

TEST_SUITE("vocab_lm") {
  TEST_CASE("build_model is deterministic and seed sensitive") {
    const auto a = build_model(1, 200, 16);
    const auto b = build_model(1, 200, 16);
    CHECK(model_to_bytes(a) == model_to_bytes(b));
    const auto c = build_model(2, 200, 16);
    CHECK(a.unigram_logits() != c.unigram_logits());
  }

  TEST_CASE("parallel build matches serial build") {
    CHECK(model_to_bytes(build_model(5, 150, 16, {}, 1)) == model_to_bytes(build_model(5, 150, 16, {}, 3)));
  }

  TEST_CASE("invalid sizes are configuration errors") {
    CHECK_THROWS_AS(build_model(1, 1, 16), ConfigError);
    CHECK_THROWS_AS(build_model(1, 10, 1), ConfigError);
  }

  TEST_CASE("synonym lists agree with all-pairs cosine") {
    check_synonyms(build_model(7, 50, 16));
    check_synonyms(build_model(11, 100, 16));
  }

  TEST_CASE("model invariants") {
    const auto model = build_model(3, 120, 16);
    for (double v : model.unigram_logits()) CHECK(std::isfinite(v));
    for (double v : model.bigram_logits().data) CHECK(std::isfinite(v));
    for (std::size_t i = 0; i < model.vocab_size(); ++i) {
      double s = 0;
      for (std::size_t c = 0; c < model.embedding_dim(); ++c) s += model.embeddings()(i, c) * model.embeddings()(i, c);
      CHECK(s > 0.0);
    }
  }

  TEST_CASE("uniform logits with zero bias give 1/m") {
    const auto model = fixture::uniform_model(8);
    const auto p = next_token_distribution(model, std::nullopt, std::vector<double>(8, 0.0));
    for (double v : p) CHECK(v == doctest::Approx(1.0 / 8).epsilon(1e-12));
  }

  TEST_CASE("a huge bias concentrates all mass") {
    const auto model = fixture::uniform_model(8);
    std::vector<double> bias(8, 0.0);
    bias[5] = 60.0;
    const auto p = next_token_distribution(model, TokenId{2}, bias);
    for (std::size_t j = 0; j < 8; ++j)
      if (j != 5) CHECK(p[j] < 1e-20);
  }

  TEST_CASE("m=5 hand instance") {
    std::vector<double> uni = {0.5, -1.0, 0.0, 2.0, 0.25};
    Matrix bi(5, 5, 0.0);
    bi(3, 0) = 1.5;
    bi(3, 4) = -0.75;
    Matrix emb(5, 2, 1.0);
    ModelConfig cfg;
    cfg.temperature = 2.0;
    cfg.synonym_k = 4;
    const ToyLanguageModel model(0, cfg, uni, bi, emb);
    std::vector<double> bias = {0.0, 1.0, 0.0, 0.0, 0.0};
    const auto p = next_token_distribution(model, TokenId{3}, bias);
    // logits: 2.0, 0.0, 0.0, 2.0, -0.5 ; over T=2: 1, 0, 0, 1, -0.25
    const double z = 2 * std::exp(1.0) + 2 + std::exp(-0.25);
    CHECK(p[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(1.0 / z).epsilon(1e-14));
    CHECK(p[4] == doctest::Approx(std::exp(-0.25) / z).epsilon(1e-14));
  }

  TEST_CASE("distributions are proper for any prev and finite bias") {
    const auto model = build_model(9, 300, 16);
    Rng rng(4);
    std::vector<double> bias(300);
    for (int trial = 0; trial < 50; ++trial) {
      for (auto& b : bias) b = 5.0 * rng.normal();
      std::optional<TokenId> prev;
      if (trial % 5) prev = static_cast<TokenId>(rng.below(300));
      const auto p = next_token_distribution(model, prev, bias);
      double s = 0;
      for (double v : p) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
  }

  TEST_CASE("bias must match vocabulary and be finite") {
    const auto model = fixture::uniform_model(6);
    CHECK_THROWS_AS(next_token_distribution(model, std::nullopt, std::vector<double>(5, 0.0)), InputError);
    std::vector<double> bad(6, 0.0);
    bad[1] = INFINITY;
    CHECK_THROWS_AS(next_token_distribution(model, std::nullopt, bad), InputError);
  }

  TEST_CASE("sentence log-likelihood") {
    const auto uni4 = fixture::uniform_model(4);
    CHECK(sentence_log_likelihood(uni4, std::vector<TokenId>{2}) == doctest::Approx(std::log(0.25)));
    CHECK_THROWS_AS(sentence_log_likelihood(uni4, std::vector<TokenId>{}), InputError);

    const auto model = fixture::random_model(5, 21);
    const std::vector<TokenId> seq = {4, 1, 3};
    const auto p0 = next_token_distribution(model, std::nullopt, std::vector<double>(5, 0.0));
    const auto p1 = next_token_distribution(model, TokenId{4}, std::vector<double>(5, 0.0));
    const auto p2 = next_token_distribution(model, TokenId{1}, std::vector<double>(5, 0.0));
    CHECK(sentence_log_likelihood(model, seq) ==
          doctest::Approx(std::log(p0[4]) + std::log(p1[1]) + std::log(p2[3])).epsilon(1e-12));
  }

  TEST_CASE("persistence round trips in both formats") {
    const auto model = build_model(12, 60, 8);
    const auto dir = std::filesystem::temp_directory_path() / "wmforge_vocab_test";
    std::filesystem::create_directories(dir);
    for (const char* name : {"m.bin", "m.json"}) {
      save_model(model, dir / name);
      const auto back = load_model(dir / name);
      CHECK(model_to_bytes(back) == model_to_bytes(model));
      CHECK(back.synonyms() == model.synonyms());
    }
    std::filesystem::remove_all(dir);
  }
}
