#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "wmforge/errors.hpp"
#include "wmforge/feasibility.hpp"
#include "wmforge/stealer.hpp"

using namespace wmforge;
using fixture::make_corpus;
using fixture::record;

namespace {

StealConfig as1(double gamma, double z_star = 4.0) {
  StealConfig c;
  c.gamma = gamma;
  c.z_star = z_star;
  return c;
}

std::vector<TokenId> repeat(TokenId t, std::size_t n) { return std::vector<TokenId>(n, t); }

TokenWeights unit_weights(std::size_t m) { return TokenWeights{std::vector<double>(m, 1.0)}; }

std::vector<double> as_x(const StealModel& sm, const ColorCode& color) {
  std::vector<double> x(sm.model.num_variables(), 0.0);
  for (std::size_t j = 0; j < sm.m; ++j) x[sm.c_var(0, j)] = color[j];
  return x;
}

// Small generated corpus whose labels the detector agrees with.
struct Desk {
  Corpus corpus;
  ColorCode truth;
  std::vector<Label> labels;
};

Desk desk(std::size_t m, std::size_t n, std::uint64_t seed, double gamma = 0.25, double delta = 4.0) {
  const auto model = fixture::random_model(m, seed);
  WatermarkParams p;
  p.gamma = gamma;
  p.delta = delta;
  p.keys = {WatermarkKey{seed + 11}};
  Desk d;
  d.corpus = generate_corpus(model, p, n, n, LengthRange{60, 60}, seed, false);
  d.truth = derive_split(p.keys[0], gamma, m).color;
  d.labels = detector_labels(d.corpus, d.truth, DetectorConfig{4.0, gamma});
  return d;
}

}  // namespace

TEST_SUITE("stealer") {
  TEST_CASE("vanilla forces a token that fills a watermarked sentence") {
    auto c = make_corpus(8, {record(0, repeat(3, 100), Label::watermarked), record(1, repeat(5, 100), Label::natural)});
    const auto res = steal_vanilla(c, claimed_labels(c), unit_weights(8), as1(0.25));
    REQUIRE(res.stolen.size() == 1);
    CHECK(res.stolen[0][3] == 1);
    CHECK(res.stolen[0][5] == 0);
    CHECK(res.stages[0].audit_ok);
  }

  TEST_CASE("no watermarked sentences gives the empty list") {
    auto c = make_corpus(8, {record(0, {1, 2, 3, 4}, Label::natural), record(1, {5, 6, 7}, Label::natural)});
    const auto res = steal_vanilla(c, claimed_labels(c), unit_weights(8), as1(0.25));
    CHECK(evaluate_split(res.stolen[0], ColorCode(8, 1)).n_g == 0);
  }

  TEST_CASE("vanilla matches exhaustive search over every list") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
      const std::size_t m = 12;
      Rng rng(seed);
      std::vector<SentenceRecord> recs;
      for (std::size_t i = 0; i < 6; ++i) {
        std::vector<TokenId> toks;
        const bool wm = i < 3;
        for (int t = 0; t < 40; ++t) {
          // watermarked sentences lean on tokens 0..3
          toks.push_back(static_cast<TokenId>(wm && rng.uniform() < 0.8 ? rng.below(4) : rng.below(m)));
        }
        recs.push_back(record(i, toks, wm ? Label::watermarked : Label::natural));
      }
      const auto c = make_corpus(m, recs);
      const auto labels = claimed_labels(c);
      const auto w = weights_for_labels(c, labels);
      const auto cfg = as1(0.5, 1.0);

      // brute force straight from the definitions
      std::optional<double> best;
      for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
        ColorCode col(m);
        double size = 0.0, cost = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          col[j] = (mask >> j) & 1u;
          size += col[j];
          cost += col[j] * w.w[j];
        }
        if (size > 0.5 * double(m)) continue;
        bool ok = true;
        for (const auto& r : c.records) {
          const double g = green_count(r.counts, col);
          const double thr = watermark_threshold(r.length, 0.5, 1.0);
          if (r.claimed == Label::watermarked ? g < thr : g > thr) ok = false;
        }
        if (ok && (!best || cost < *best)) best = cost;
      }
      if (!best) {
        CHECK_THROWS_AS(steal_vanilla(c, labels, w, cfg), InfeasibleError);
        continue;
      }
      const auto res = steal_vanilla(c, labels, w, cfg);
      double cost = 0.0;
      for (std::size_t j = 0; j < m; ++j) cost += res.stolen[0][j] * w.w[j];
      CHECK(cost == doctest::Approx(*best).epsilon(1e-9));
      CHECK(oracle::enumerate_binary(build_vanilla_as1(c, labels, w, cfg).model) == doctest::Approx(*best));
    }
  }

  TEST_CASE("oracle with counts at the threshold is vanilla") {
    // gamma .5, length 100, z* 4: threshold 50 + 4 * 5 = 70
    CHECK(watermark_threshold(100, 0.5, 4.0) == doctest::Approx(70.0));
    Rng rng(5);
    std::vector<SentenceRecord> recs;
    for (std::size_t i = 0; i < 6; ++i) {
      std::vector<TokenId> toks;
      for (int t = 0; t < 100; ++t) toks.push_back(static_cast<TokenId>(rng.below(10)));
      recs.push_back(record(i, toks, i % 2 ? Label::natural : Label::watermarked));
    }
    const auto c = make_corpus(10, recs, 0.5);
    const auto labels = claimed_labels(c);
    const auto w = weights_for_labels(c, labels);
    OracleCounts oc{std::vector<long>(6, 70)};
    CHECK(build_oracle_as1(c, labels, oc, w, as1(0.5)).model == build_vanilla_as1(c, labels, w, as1(0.5)).model);
  }

  TEST_CASE("the true split is feasible for the oracle formulation") {
    const auto d = desk(40, 15, 3);
    const auto oc = oracle_counts(d.corpus, d.truth);
    const auto sm = build_oracle_as1(d.corpus, d.labels, oc, weights_for_labels(d.corpus, d.labels), as1(0.25));
    CHECK(audit_assignment(sm.model, as_x(sm, d.truth)).ok);
    const auto res = steal_oracle(d.corpus, d.labels, oc, weights_for_labels(d.corpus, d.labels), as1(0.25));
    for (std::size_t i = 0; i < d.corpus.records.size(); ++i) {
      const long g = green_count(d.corpus.records[i].counts, res.stolen[0]);
      if (d.labels[i] == Label::watermarked)
        CHECK(g >= oc.green[i]);
      else
        CHECK(g <= oc.green[i]);
    }
  }

  TEST_CASE("pro stage one") {
    const auto d = desk(40, 15, 4);
    const auto cfg = as1(0.25);
    const auto s1 = build_pro_as1_stage1(d.corpus, d.labels, cfg);
    const auto sol = solve_mip(s1.model, cfg.solver);
    REQUIRE(sol.status == MipStatus::optimal);
    const auto b = extract_bounds(s1, sol.x);

    // b_abs is the absolute deviation of the natural aggregate from its mean
    double nat_len = 0.0;
    for (const auto i : b.tilde_records) nat_len += double(d.corpus.records[i].length);
    CHECK(b.b_abs == doctest::Approx(std::abs(b.b_tilde_sum - 0.25 * nat_len)).epsilon(1e-7));

    // every bound is met by the stage-one list itself
    const auto col = extract_colors(s1, sol.x)[0];
    for (std::size_t k = 0; k < b.hat_records.size(); ++k) {
      const auto& r = d.corpus.records[b.hat_records[k]];
      CHECK(double(green_count(r.counts, col)) >= b.b_hat[k] - 1e-6);
      CHECK(b.b_hat[k] >= watermark_threshold(r.length, 0.25, 4.0) - 1e-6);
    }

    // stage one's point satisfies stage two
    const auto s2 = build_pro_as1_stage2(d.corpus, d.labels, b, weights_for_labels(d.corpus, d.labels), cfg);
    CHECK(s2.model.num_variables() == s1.model.num_variables());
    CHECK(audit_assignment(s2.model, sol.x).ok);
  }

  TEST_CASE("pro with a single watermarked sentence saturates its bound") {
    std::vector<TokenId> toks;
    for (int t = 0; t < 50; ++t) toks.push_back(static_cast<TokenId>(t % 3));
    auto c = make_corpus(20, {record(0, toks, Label::watermarked)});
    const auto res = steal_pro(c, claimed_labels(c), unit_weights(20), as1(0.25));
    REQUIRE(res.bounds);
    CHECK(res.bounds->b_hat.size() == 1);
    CHECK(res.bounds->b_hat[0] == doctest::Approx(50.0));
    CHECK(res.stolen[0][0] + res.stolen[0][1] + res.stolen[0][2] == 3);
  }

  TEST_CASE("zero aggregate weight leaves stage two unconstrained by stage one") {
    const auto d = desk(40, 10, 6);
    auto cfg = as1(0.25);
    cfg.beta_hat = 0.0;
    StageOneBounds b;
    b.b_hat_sum = 1e9;
    b.b_tilde_sum = 0.0;
    const auto s2 = build_pro_as1_stage2(d.corpus, d.labels, b, weights_for_labels(d.corpus, d.labels), cfg);
    for (const auto& row : s2.model.constraints()) {
      if (row.name == "sum_b_hat") CHECK(row.rhs == 0.0);
    }
  }

  TEST_CASE("AS1 modes need gamma and z*") {
    auto c = make_corpus(8, {record(0, repeat(3, 100), Label::watermarked)});
    StealConfig cfg;
    CHECK_THROWS_AS(steal_vanilla(c, claimed_labels(c), unit_weights(8), cfg), ConfigError);
    CHECK_THROWS_AS(steal_pro(c, claimed_labels(c), unit_weights(8), cfg), ConfigError);
    cfg = as1(0.25);
    cfg.p_l = 0.5;
    cfg.p_u = 0.4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }

  TEST_CASE("AS2 gate: an excluded sentence contributes nothing") {
    auto c = make_corpus(12, {record(0, repeat(0, 30), Label::watermarked), record(1, repeat(6, 30), Label::natural)});
    StealConfig cfg;
    cfg.p_l = 0.0;
    cfg.use_separation = false;
    const auto sm = build_as2_stage1(c, claimed_labels(c), cfg);
    std::vector<double> x(sm.model.num_variables(), 0.0);
    x[6] = 1.0;  // green token of the natural sentence; fine once it is excluded
    CHECK(audit_assignment(sm.model, x).ok);
    x[static_cast<std::size_t>(sm.b_hat_var[0])] = 1.0;
    CHECK_FALSE(audit_assignment(sm.model, x).ok);
  }

  TEST_CASE("AS2 keeps every sentence when forced to") {
    std::vector<SentenceRecord> recs;
    for (std::uint64_t i = 0; i < 4; ++i) recs.push_back(record(i, {0, 1, 2, 0, 1, 2, 7, 0}, Label::watermarked));
    for (std::uint64_t i = 4; i < 8; ++i) recs.push_back(record(i, {6, 7, 8, 9, 10, 11, 6, 8}, Label::natural));
    const auto c = make_corpus(12, recs);
    StealConfig cfg;
    cfg.p_l = cfg.p_u = 1.0;
    const auto res = steal_as2(c, claimed_labels(c), weights_for_labels(c, claimed_labels(c)), cfg);
    CHECK(res.relaxations.empty());
    for (const auto l : res.lambda) CHECK(l == 1);
  }

  TEST_CASE("AS2 drops a mislabelled sentence") {
    std::vector<SentenceRecord> recs;
    for (std::uint64_t i = 0; i < 3; ++i) recs.push_back(record(i, repeat(0, 20), Label::watermarked));
    auto bad = record(3, repeat(6, 20), Label::watermarked);
    bad.truth = Label::natural;
    recs.push_back(bad);
    for (std::uint64_t i = 4; i < 8; ++i) recs.push_back(record(i, repeat(6, 20), Label::natural));
    const auto c = make_corpus(12, recs);
    StealConfig cfg;
    cfg.p_l = 0.75;
    const auto labels = claimed_labels(c);
    const auto res = steal_as2(c, labels, weights_for_labels(c, labels), cfg);
    CHECK(res.relaxations.empty());
    CHECK(res.lambda[3] == 0);
    CHECK(res.stolen[0][0] == 1);
    CHECK(res.stolen[0][6] == 0);
    for (const auto& s : res.stages) CHECK(s.audit_ok);
  }

  TEST_CASE("AS2 relaxes instead of failing") {
    // watermarked and natural sentences are identical, so no margin exists
    std::vector<SentenceRecord> recs;
    for (std::uint64_t i = 0; i < 4; ++i) recs.push_back(record(i, {0, 1, 2, 3}, i < 2 ? Label::watermarked : Label::natural));
    const auto c = make_corpus(8, recs);
    StealConfig cfg;
    cfg.p_l = cfg.p_u = 1.0;
    const auto res = steal_as2(c, claimed_labels(c), unit_weights(8), cfg);
    REQUIRE_FALSE(res.relaxations.empty());
    CHECK(res.relaxations[0].find("separation") != std::string::npos);
  }

  TEST_CASE("precision") {
    ColorCode truth(10, 0);
    for (int j = 0; j < 4; ++j) truth[j] = 1;
    auto pm = evaluate_split(truth, truth);
    CHECK(pm.n_g == 4);
    CHECK(pm.n_t == 4);
    CHECK(*pm.precision == 1.0);
    CHECK_FALSE(evaluate_split(ColorCode(10, 0), truth).precision.has_value());
    CHECK_THROWS_AS(evaluate_split(ColorCode(9, 0), truth), InputError);

    ColorCode big(5000, 0), st(5000, 0);
    for (int j = 0; j < 2003; ++j) big[j] = st[j] = 1;
    for (int j = 2003; j < 2749; ++j) st[j] = 1;
    for (int j = 3000; j < 3500; ++j) big[j] = 1;
    pm = evaluate_split(st, big);
    CHECK(pm.n_g == 2749);
    CHECK(pm.n_t == 2003);
    CHECK(*pm.precision == doctest::Approx(0.7286).epsilon(1e-4));
  }

  TEST_CASE("a random list scores about gamma") {
    const auto truth = derive_split(WatermarkKey{9}, 0.25, 1000).color;
    Rng rng(9);
    std::vector<double> p;
    for (int s = 0; s < 200; ++s) {
      ColorCode col(1000, 0);
      for (auto& v : col) v = rng.uniform() < 0.1 ? 1 : 0;
      if (auto pm = evaluate_split(col, truth); pm.precision) p.push_back(*pm.precision);
    }
    CHECK(fixture::mean(p) == doctest::Approx(0.25).epsilon(0.04));
  }

  TEST_CASE("multi-key matching") {
    std::vector<ColorCode> truth(3, ColorCode(9, 0));
    for (int k = 0; k < 3; ++k)
      for (int j = 0; j < 3; ++j) truth[k][3 * k + j] = 1;
    const std::vector<ColorCode> stolen{truth[2], truth[0], truth[1]};
    const auto mk = evaluate_multikey(stolen, truth);
    CHECK(mk.assignment == std::vector<std::size_t>{2, 0, 1});
    for (const auto& pm : mk.per_key) CHECK(*pm.precision == 1.0);
    CHECK_THROWS_AS(evaluate_multikey({truth[0]}, truth), InputError);
  }

  TEST_CASE("frequency baseline needs no solver") {
    const auto d = desk(40, 20, 7);
    const auto res = steal_frequency(d.corpus);
    CHECK(res.stages.empty());
    CHECK(res.stolen[0] == frequency_baseline_split(d.corpus));
  }

  TEST_CASE("ground-truth fields do not leak into the attack") {
    const auto d = desk(40, 15, 8);
    auto blind = d.corpus;
    for (auto& r : blind.records) {
      r.key_index.reset();
      r.truth = r.truth == Label::natural ? Label::watermarked : Label::natural;
    }
    blind.meta.keys.clear();
    const auto w = weights_for_labels(d.corpus, d.labels);
    CHECK(steal_pro(d.corpus, d.labels, w, as1(0.25)).stolen == steal_pro(blind, d.labels, w, as1(0.25)).stolen);
    StealConfig cfg;
    CHECK(steal_as2(d.corpus, claimed_labels(d.corpus), w, cfg).stolen ==
          steal_as2(blind, claimed_labels(blind), w, cfg).stolen);
  }
}

TEST_SUITE("multikey") {
  // Two keys own disjoint token blocks; natural text uses neither.
  Corpus blocks(std::size_t per_key) {
    Rng rng(21);
    std::vector<SentenceRecord> recs;
    std::uint64_t id = 0;
    for (std::size_t k = 0; k < 2; ++k) {
      for (std::size_t i = 0; i < per_key; ++i) {
        std::vector<TokenId> toks;
        for (int t = 0; t < 30; ++t) toks.push_back(static_cast<TokenId>(10 * k + rng.below(10)));
        auto r = record(id++, toks, Label::watermarked);
        r.key_index = k;
        recs.push_back(r);
      }
    }
    for (std::size_t i = 0; i < per_key; ++i) {
      std::vector<TokenId> toks;
      for (int t = 0; t < 30; ++t) toks.push_back(static_cast<TokenId>(20 + rng.below(40)));
      recs.push_back(record(id++, toks, Label::natural));
    }
    return make_corpus(60, recs);
  }

  std::vector<ColorCode> block_truth() {
    std::vector<ColorCode> t(2, ColorCode(60, 0));
    for (int j = 0; j < 10; ++j) {
      t[0][j] = 1;
      t[1][10 + j] = 1;
    }
    return t;
  }

  StealConfig block_config() {
    StealConfig cfg;
    cfg.eta = 10.5 / 60.0;  // cap 10.5, so exactly 10 tokens with the floor
    cfg.mu = 10;
    return cfg;
  }

  TEST_CASE("the right assignment recovers both blocks") {
    const auto c = blocks(20);
    const auto labels = claimed_labels(c);
    std::vector<int> rho;
    for (const auto& r : c.records) rho.push_back(r.key_index ? static_cast<int>(*r.key_index) : -1);
    const auto cfg = block_config();
    const auto s1 = build_multikey_stage1(c, labels, rho, 2, cfg);
    const auto o1 = solve_mip(s1.model, cfg.solver);
    REQUIRE(o1.status == MipStatus::optimal);
    const auto s2 = build_multikey_stage2(c, labels, rho, 2, extract_bounds(s1, o1.x), cfg);
    const auto o2 = solve_mip(s2.model, cfg.solver);
    REQUIRE(o2.status == MipStatus::optimal);
    CHECK(extract_colors(s2, o2.x) == block_truth());
    CHECK(reassign_keys(c, labels, block_truth()) == rho);
  }

  TEST_CASE("alternation ends on a fixed point") {
    const auto c = blocks(20);
    const auto labels = claimed_labels(c);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      auto cfg = block_config();
      cfg.seed = seed;
      cfg.max_iterations = 6;
      cfg.solver.lp_iteration_limit = 5000;
      const auto res = steal_multikey(c, labels, 2, cfg);
      REQUIRE(res.stolen.size() == 2);
      if (res.converged) CHECK(reassign_keys(c, labels, res.stolen) == res.rho);
      for (const auto& s : res.stages) CHECK((!s.has_solution || s.audit_ok));
      const auto mk = evaluate_multikey(res.stolen, block_truth());
      for (const auto& pm : mk.per_key) CHECK(pm.n_g == 10);
    }
  }

  TEST_CASE("reassignment is idempotent") {
    const auto c = blocks(8);
    const auto labels = claimed_labels(c);
    const auto rho = reassign_keys(c, labels, block_truth());
    std::vector<ColorCode> same = block_truth();
    CHECK(reassign_keys(c, labels, same) == rho);
    for (std::size_t i = 0; i < rho.size(); ++i) {
      if (labels[i] == Label::natural) CHECK(rho[i] == -1);
    }
    // ties go to the lowest key
    const std::vector<ColorCode> blank(2, ColorCode(60, 0));
    for (const int k : reassign_keys(c, labels, blank)) CHECK(k <= 0);
  }

  TEST_CASE("one key reduces to AS2 with unit weights") {
    std::vector<SentenceRecord> recs;
    Rng rng(4);
    for (std::uint64_t i = 0; i < 10; ++i) {
      std::vector<TokenId> toks;
      for (int t = 0; t < 20; ++t) toks.push_back(static_cast<TokenId>(i < 5 ? rng.below(6) : 4 + rng.below(8)));
      recs.push_back(record(i, toks, i < 5 ? Label::watermarked : Label::natural));
    }
    const auto c = make_corpus(12, recs);
    const auto labels = claimed_labels(c);
    std::vector<int> rho(labels.size(), -1);
    for (std::size_t i = 0; i < 5; ++i) rho[i] = 0;
    StealConfig cfg;
    cfg.p_l = 0.8;
    const auto a1 = build_as2_stage1(c, labels, cfg);
    const auto m1 = build_multikey_stage1(c, labels, rho, 1, cfg);
    const auto sa = solve_mip(a1.model, cfg.solver), sm = solve_mip(m1.model, cfg.solver);
    REQUIRE(sa.status == MipStatus::optimal);
    REQUIRE(sm.status == MipStatus::optimal);
    CHECK(sa.objective == doctest::Approx(sm.objective));
    const auto a2 = build_as2_stage2(c, labels, extract_bounds(a1, sa.x), unit_weights(12), cfg);
    const auto m2 = build_multikey_stage2(c, labels, rho, 1, extract_bounds(m1, sm.x), cfg);
    CHECK(solve_mip(a2.model, cfg.solver).objective == doctest::Approx(solve_mip(m2.model, cfg.solver).objective));
  }

  TEST_CASE("multikey input errors") {
    const auto c = blocks(4);
    const auto labels = claimed_labels(c);
    CHECK_THROWS_AS(build_multikey_stage1(c, labels, std::vector<int>(labels.size(), -1), 2, StealConfig{}), InputError);
    CHECK_THROWS_AS(steal_multikey(c, labels, 0, StealConfig{}), ConfigError);
    auto cfg = block_config();
    cfg.mu = 11;
    CHECK_THROWS_AS(steal_multikey(c, labels, 2, cfg), InfeasibleError);
  }
}
