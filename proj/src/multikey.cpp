#include <algorithm>

#include "wmforge/errors.hpp"
#include "wmforge/rng.hpp"
#include "wmforge/stealer.hpp"
#include "steal_common.hpp"

namespace wmforge {

using namespace detail;

namespace {

StealModel multikey_base(const Corpus& corpus, const std::vector<Label>& labels, const std::vector<int>& rho,
                         std::size_t keys, const StealConfig& cfg) {
  cfg.validate();
  if (keys == 0) throw ConfigError("need at least one key");
  if (rho.size() != labels.size()) throw InputError("rho needs one entry per record");
  StealModel sm;
  init_model(sm, corpus, labels, keys);
  for (const std::size_t i : sm.hat_records) {
    if (rho[i] < 0 || static_cast<std::size_t>(rho[i]) >= keys) {
      throw InputError("watermarked record " + std::to_string(i) + " has no key assigned");
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    sm.lambda_var[i] = static_cast<long>(sm.model.add_binary("lam_" + std::to_string(i)));
  }
  for (const std::size_t i : sm.hat_records) {
    const auto l = static_cast<double>(corpus.records[i].length);
    sm.b_hat_var.push_back(static_cast<long>(sm.model.add_continuous("bh_" + std::to_string(i), 0.0, l)));
  }
  for (const std::size_t i : sm.tilde_records) {
    const auto l = static_cast<double>(corpus.records[i].length);
    sm.b_tilde_var.push_back(static_cast<long>(sm.model.add_continuous("bt_" + std::to_string(i), 0.0, l)));
  }
  const bool separate = cfg.use_separation && !sm.hat_records.empty() && !sm.tilde_records.empty();
  if (separate) {
    sm.p_lo_var = static_cast<long>(sm.model.add_continuous("p_lo", 0.0, 1.0));
    sm.p_hi_var = static_cast<long>(sm.model.add_continuous("p_hi", 0.0, 1.0));
  }

  for (std::size_t h = 0; h < sm.hat_records.size(); ++h) {
    const std::size_t i = sm.hat_records[h];
    const auto& r = corpus.records[i];
    const auto l = static_cast<double>(r.length);
    const auto key = static_cast<std::size_t>(rho[i]);
    const auto lam = static_cast<std::size_t>(sm.lambda_var[i]);
    const auto b = static_cast<std::size_t>(sm.b_hat_var[h]);
    auto t = green_terms(sm, r, key);
    t.push_back({b, -1.0});
    t.push_back({lam, -l});
    sm.model.add_constraint("wm_" + std::to_string(i), t, RowSense::ge, -l);
    sm.model.add_constraint("gate_" + std::to_string(i), {{b, 1.0}, {lam, -l}}, RowSense::le, 0.0);
    if (separate) {
      auto s = green_terms(sm, r, key, 1.0 / l);
      s.push_back({static_cast<std::size_t>(sm.p_lo_var), -1.0});
      s.push_back({lam, -1.0});
      sm.model.add_constraint("sep_" + std::to_string(i), s, RowSense::ge, -1.0);
    }
  }
  for (std::size_t h = 0; h < sm.tilde_records.size(); ++h) {
    const std::size_t i = sm.tilde_records[h];
    const auto& r = corpus.records[i];
    const auto l = static_cast<double>(r.length);
    const auto lam = static_cast<std::size_t>(sm.lambda_var[i]);
    const auto b = static_cast<std::size_t>(sm.b_tilde_var[h]);
    for (std::size_t k = 0; k < keys; ++k) {
      const std::string tag = std::to_string(i) + "_" + std::to_string(k);
      auto t = green_terms(sm, r, k);
      t.push_back({b, -1.0});
      t.push_back({lam, l});
      sm.model.add_constraint("nat_" + tag, t, RowSense::le, l);
      if (separate) {
        auto s = green_terms(sm, r, k, 1.0 / l);
        s.push_back({static_cast<std::size_t>(sm.p_hi_var), -1.0});
        s.push_back({lam, 1.0});
        sm.model.add_constraint("sep_" + tag, s, RowSense::le, 1.0);
      }
    }
    sm.model.add_constraint("gate_" + std::to_string(i), {{b, 1.0}, {lam, -l}}, RowSense::le, 0.0);
  }
  add_lambda_counts(sm, cfg);
  const double cap = cfg.effective_eta() * static_cast<double>(sm.m);
  if (cfg.mu > cap) throw InfeasibleError("mu exceeds the per-key list size cap");
  for (std::size_t k = 0; k < keys; ++k) {
    add_size_cap(sm, k, cap, "size_" + std::to_string(k));
    if (cfg.mu > 0.0) {
      std::vector<Term> t;
      for (std::size_t j = 0; j < sm.m; ++j) t.push_back({sm.c_var(k, j), 1.0});
      sm.model.add_constraint("floor_" + std::to_string(k), t, RowSense::ge, cfg.mu);
    }
  }
  if (separate) {
    sm.model.add_constraint("margin",
                            {{static_cast<std::size_t>(sm.p_lo_var), 1.0}, {static_cast<std::size_t>(sm.p_hi_var), -1.0}},
                            RowSense::ge, cfg.epsilon);
  }
  return sm;
}

}  // namespace

StealModel build_multikey_stage1(const Corpus& corpus, const std::vector<Label>& labels, const std::vector<int>& rho,
                                 std::size_t keys, const StealConfig& config) {
  auto sm = multikey_base(corpus, labels, rho, keys, config);
  std::vector<Term> obj;
  for (const long v : sm.b_hat_var) obj.push_back({static_cast<std::size_t>(v), 1.0});
  for (const long v : sm.b_tilde_var) obj.push_back({static_cast<std::size_t>(v), -1.0});
  sm.model.set_objective(obj, ObjSense::maximize);
  return sm;
}

StealModel build_multikey_stage2(const Corpus& corpus, const std::vector<Label>& labels, const std::vector<int>& rho,
                                 std::size_t keys, const StageOneBounds& bounds, const StealConfig& config) {
  auto sm = multikey_base(corpus, labels, rho, keys, config);
  add_aggregate_rows(sm, bounds, config);
  sm.model.set_objective(weighted_size(sm, nullptr), ObjSense::minimize);
  return sm;
}

std::vector<int> reassign_keys(const Corpus& corpus, const std::vector<Label>& labels,
                               const std::vector<ColorCode>& colors) {
  check_labels(corpus, labels);
  if (colors.empty()) throw InputError("need at least one color code");
  std::vector<int> rho(labels.size(), -1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != Label::watermarked) continue;
    long best = -1;
    for (std::size_t k = 0; k < colors.size(); ++k) {
      const long g = green_count(corpus.records[i].counts, colors[k]);
      if (g > best) {
        best = g;
        rho[i] = static_cast<int>(k);
      }
    }
  }
  return rho;
}

StealResult steal_multikey(const Corpus& corpus, const std::vector<Label>& labels, std::size_t keys,
                           const StealConfig& config) {
  config.validate();
  check_labels(corpus, labels);
  if (keys == 0) throw ConfigError("need at least one key");
  StealResult res;
  res.mode = "multikey";
  std::vector<int> rho(labels.size(), -1);
  Rng rng(stream_seed(config.seed, 0x524f));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == Label::watermarked) rho[i] = static_cast<int>(rng.below(keys));
  }

  StealConfig cfg = config;
  int widenings = 0;
  res.converged = false;
  for (int it = 0; it < config.max_iterations;) {
    const auto s1 = build_multikey_stage1(corpus, labels, rho, keys, cfg);
    auto o1 = run_stage(s1, "multikey_stage1_it" + std::to_string(it), cfg, nullptr);
    res.stages.push_back(o1.diag);
    std::optional<StageOutcome> o2;
    std::optional<StealModel> s2;
    if (o1.sol.has_solution) {
      auto bounds = extract_bounds(s1, o1.sol.x);
      s2 = build_multikey_stage2(corpus, labels, rho, keys, bounds, cfg);
      o2 = run_stage(*s2, "multikey_stage2_it" + std::to_string(it), cfg, &o1.sol.x);
      res.stages.push_back(o2->diag);
      if (o2->sol.has_solution) res.bounds = std::move(bounds);
    }
    if (!o2 || !o2->sol.has_solution) {
      relax_or_throw(cfg, res, widenings);
      continue;
    }
    ++it;
    res.iterations = it;
    res.stolen = extract_colors(*s2, o2->sol.x);
    fill_lambda(res, *s2, o2->sol.x);
    auto next = reassign_keys(corpus, labels, res.stolen);
    res.rho = rho;
    if (next == rho) {
      res.converged = true;
      break;
    }
    rho = std::move(next);
  }
  return res;
}

}  // namespace wmforge
