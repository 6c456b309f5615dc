#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "fixtures.hpp"
#include "wmforge/corpus.hpp"
#include "wmforge/detector.hpp"
#include "wmforge/errors.hpp"

using namespace wmforge;

namespace {

WatermarkParams params(double gamma, double delta, std::uint64_t key = 11) {
  WatermarkParams p;
  p.gamma = gamma;
  p.delta = delta;
  p.keys = {WatermarkKey{key}};
  return p;
}

std::string bytes(const Corpus& c) {
  std::ostringstream o;
  write_corpus(c, o);
  return o.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("generation sizes, labels and record invariants") {
    const auto model = build_model(1, 120, 8);
    const auto c = generate_corpus(model, params(0.25, 2.0), 100, 100, {20, 60}, 5);
    REQUIRE(c.records.size() == 200);
    std::size_t wm = 0;
    for (std::size_t i = 0; i < c.records.size(); ++i) {
      const auto& r = c.records[i];
      wm += r.truth == Label::watermarked;
      CHECK(r.claimed == r.truth);
      CHECK(r.id == i);
      long sum = 0;
      for (const auto& [t, n] : r.counts) {
        CHECK(n > 0);
        sum += n;
      }
      CHECK(sum == r.length);
      REQUIRE(r.tokens.has_value());
      CHECK(counts_from_tokens(*r.tokens) == r.counts);
      CHECK(r.length >= 20);
      CHECK(r.length <= 60);
    }
    CHECK(wm == 100);
  }

  TEST_CASE("regeneration is byte identical, also across thread counts") {
    const auto model = build_model(2, 100, 8);
    const auto a = generate_corpus(model, params(0.25, 2.0), 30, 30, {20, 40}, 9, true, 1);
    const auto b = generate_corpus(model, params(0.25, 2.0), 30, 30, {20, 40}, 9, true, 3);
    CHECK(bytes(a) == bytes(b));
  }

  TEST_CASE("natural green fraction is close to gamma") {
    const auto model = build_model(stream_seed(2, 1), 500, 16);
    const auto c = generate_corpus(model, params(0.25, 2.0), 0, 200, {200, 200}, 4, false);
    const auto split = derive_split(WatermarkKey{11}, 0.25, 500);
    double g = 0;
    for (const auto& r : c.records) g += double(green_count(r.counts, split.color)) / double(r.length);
    CHECK(std::abs(g / 200 - 0.25) <= 0.03);
  }

  TEST_CASE("error injection flips exactly floor(r_c n) per class") {
    const auto model = fixture::uniform_model(20);
    const auto c = generate_corpus(model, params(0.25, 2.0), 1000, 1000, {20, 20}, 3, false);
    CHECK(inject_errors(c, 0.0, 1).records == c.records);
    const auto e = inject_errors(c, 0.3, 8);
    std::size_t flip_wm = 0, flip_nat = 0, truth_wm = 0;
    for (const auto& r : e.records) {
      truth_wm += r.truth == Label::watermarked;
      if (r.claimed != r.truth) (r.truth == Label::watermarked ? flip_wm : flip_nat)++;
    }
    CHECK(flip_wm == 300);
    CHECK(flip_nat == 300);
    CHECK(truth_wm == 1000);
    CHECK(e.records.size() == c.records.size());
    CHECK(bytes(inject_errors(c, 0.3, 8)) == bytes(e));
    CHECK(bytes(inject_errors(c, 0.3, 9)) != bytes(e));
    CHECK_THROWS_AS(inject_errors(c, 1.0, 8), ConfigError);
  }

  TEST_CASE("token weights") {
    // token 0: 9 natural, 19 watermarked ; token 3 appears nowhere
    std::vector<TokenId> wm(19, 0), nat(9, 0);
    wm.push_back(1);
    nat.push_back(2);
    const auto c = fixture::make_corpus(4, {fixture::record(0, wm, Label::watermarked),
                                            fixture::record(1, nat, Label::natural)});
    const auto w = compute_token_weights(c);
    CHECK(w.w[0] == doctest::Approx(0.5));
    CHECK(w.w[3] == 1.0);
    CHECK(w.w[1] == doctest::Approx(0.5));
    CHECK(w.w[2] == doctest::Approx(2.0));

    auto rev = c;
    std::reverse(rev.records.begin(), rev.records.end());
    CHECK(compute_token_weights(rev).w == w.w);

    const auto one = fixture::make_corpus(4, {fixture::record(0, wm, Label::watermarked)});
    CHECK_THROWS_AS(compute_token_weights(one), InputError);
  }

  TEST_CASE("green tokens get smaller weights on a strong watermark") {
    const auto model = build_model(3, 300, 16);
    const auto c = generate_corpus(model, params(0.25, 4.0), 200, 200, {100, 100}, 6, false);
    const auto split = derive_split(WatermarkKey{11}, 0.25, 300);
    const auto w = compute_token_weights(c);
    std::vector<double> g, r;
    for (std::size_t j = 0; j < 300; ++j) (split.color[j] ? g : r).push_back(w.w[j]);
    CHECK(median(g) < median(r));
  }

  TEST_CASE("frequency baseline") {
    const auto c = fixture::make_corpus(
        4, {fixture::record(0, {0, 0, 1, 2}, Label::watermarked), fixture::record(1, {1, 2, 3}, Label::natural)});
    const auto s = frequency_baseline_split(c);
    CHECK(s == ColorCode{1, 0, 0, 0});
    const auto sym = fixture::make_corpus(
        3, {fixture::record(0, {0, 1, 2}, Label::watermarked), fixture::record(1, {2, 1, 0}, Label::natural)});
    CHECK(frequency_baseline_split(sym) == ColorCode{0, 0, 0});
    // top-2 by watermarked frequency, lower id on ties
    CHECK(frequency_baseline_split(c, 2) == ColorCode{1, 1, 0, 0});
  }

  TEST_CASE("persistence round trip") {
    const auto model = build_model(4, 90, 8);
    auto c = generate_corpus(model, params(0.25, 2.0), 20, 20, {20, 30}, 2);
    c = inject_errors(c, 0.1, 3);
    c.records[3].key_index.reset();
    c.records[5].tokens.reset();
    const auto path = std::filesystem::temp_directory_path() / "wmforge_corpus_test.jsonl";
    save_corpus(c, path);
    const auto back = load_corpus(path);
    CHECK(back == c);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_corpus(path), IoError);
  }

  TEST_CASE("malformed corpus files fail loudly") {
    std::istringstream bad("{\"version\": 1}\n");
    CHECK_THROWS_AS(read_corpus(bad), IoError);
    std::istringstream junk("not json\n");
    CHECK_THROWS_AS(read_corpus(junk), IoError);
  }
}
