#include "wmforge/stealer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "wmforge/errors.hpp"
#include "wmforge/feasibility.hpp"
#include "wmforge/lp_format.hpp"
#include "steal_common.hpp"

namespace wmforge {

void StealConfig::validate() const {
  if (gamma && !(*gamma > 0.0 && *gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (z_star && !std::isfinite(*z_star)) throw ConfigError("z_star must be finite");
  if (!(beta_hat >= 0.0 && beta_hat <= 1.0)) throw ConfigError("beta_hat must lie in [0, 1]");
  if (!(beta_tilde >= 0.0)) throw ConfigError("beta_tilde must be non-negative");
  if (!(p_l >= 0.0 && p_l <= p_u && p_u <= 1.0)) throw ConfigError("need 0 <= p_l <= p_u <= 1");
  if (eta && !(*eta > 0.0 && *eta <= 1.0)) throw ConfigError("eta must lie in (0, 1]");
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
  if (!(mu >= 0.0)) throw ConfigError("mu must be non-negative");
  if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  solver.validate();
}

std::vector<Label> claimed_labels(const Corpus& corpus) {
  std::vector<Label> out;
  out.reserve(corpus.records.size());
  for (const auto& r : corpus.records) out.push_back(r.claimed);
  return out;
}

std::vector<Label> detector_labels(const Corpus& corpus, const ColorCode& color, const DetectorConfig& config) {
  std::vector<Label> out;
  out.reserve(corpus.records.size());
  for (const auto& r : corpus.records) {
    out.push_back(detect(r.counts, r.length, color, config).is_watermarked ? Label::watermarked : Label::natural);
  }
  return out;
}

TokenWeights weights_for_labels(const Corpus& corpus, const std::vector<Label>& labels) {
  detail::check_labels(corpus, labels);
  std::vector<double> wm(corpus.meta.m, 0.0), nat(corpus.meta.m, 0.0);
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    auto& dst = labels[i] == Label::watermarked ? wm : nat;
    for (const auto& sc : corpus.records[i].counts) dst[static_cast<std::size_t>(sc.token)] += sc.count;
  }
  TokenWeights w;
  w.w.resize(corpus.meta.m);
  for (std::size_t j = 0; j < corpus.meta.m; ++j) w.w[j] = (nat[j] + 1.0) / (wm[j] + 1.0);
  return w;
}

OracleCounts oracle_counts(const Corpus& corpus, const ColorCode& color) {
  OracleCounts oc;
  oc.green.reserve(corpus.records.size());
  for (const auto& r : corpus.records) oc.green.push_back(green_count(r.counts, color));
  return oc;
}

namespace detail {

void check_labels(const Corpus& corpus, const std::vector<Label>& labels) {
  if (labels.size() != corpus.records.size()) throw InputError("need one label per corpus record");
  if (corpus.meta.m == 0) throw InputError("corpus has an empty vocabulary");
}

void init_model(StealModel& sm, const Corpus& corpus, const std::vector<Label>& labels, std::size_t keys) {
  check_labels(corpus, labels);
  sm.m = corpus.meta.m;
  sm.keys = keys;
  for (std::size_t k = 0; k < keys; ++k) {
    for (std::size_t j = 0; j < sm.m; ++j) {
      sm.model.add_binary(keys == 1 ? "c_" + std::to_string(j) : "c" + std::to_string(k) + "_" + std::to_string(j));
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (labels[i] == Label::watermarked ? sm.hat_records : sm.tilde_records).push_back(i);
  }
  sm.lambda_var.assign(labels.size(), -1);
}

std::vector<Term> green_terms(const StealModel& sm, const SentenceRecord& r, std::size_t key, double scale) {
  std::vector<Term> t;
  t.reserve(r.counts.size());
  for (const auto& sc : r.counts) {
    if (static_cast<std::size_t>(sc.token) >= sm.m) throw InputError("record token outside vocabulary");
    t.push_back({sm.c_var(key, static_cast<std::size_t>(sc.token)), scale * sc.count});
  }
  return t;
}

void add_size_cap(StealModel& sm, std::size_t key, double cap, const std::string& name) {
  std::vector<Term> t;
  for (std::size_t j = 0; j < sm.m; ++j) t.push_back({sm.c_var(key, j), 1.0});
  sm.model.add_constraint(name, t, RowSense::le, cap);
}

std::vector<Term> weighted_size(const StealModel& sm, const TokenWeights* weights) {
  if (weights && weights->w.size() != sm.m) throw InputError("token weights do not match vocabulary size");
  std::vector<Term> t;
  for (std::size_t k = 0; k < sm.keys; ++k) {
    for (std::size_t j = 0; j < sm.m; ++j) t.push_back({sm.c_var(k, j), weights ? weights->w[j] : 1.0});
  }
  return t;
}

void add_aggregate_rows(StealModel& sm, const StageOneBounds& b, const StealConfig& cfg) {
  std::vector<Term> hat, tilde;
  for (const long v : sm.b_hat_var) hat.push_back({static_cast<std::size_t>(v), 1.0});
  for (const long v : sm.b_tilde_var) tilde.push_back({static_cast<std::size_t>(v), 1.0});
  if (!hat.empty()) sm.model.add_constraint("sum_b_hat", hat, RowSense::ge, cfg.beta_hat * b.b_hat_sum);
  if (!tilde.empty()) sm.model.add_constraint("sum_b_tilde", tilde, RowSense::le, cfg.beta_tilde * b.b_tilde_sum);
}

void add_lambda_counts(StealModel& sm, const StealConfig& cfg) {
  for (const auto* cls : {&sm.hat_records, &sm.tilde_records}) {
    if (cls->empty()) continue;
    std::vector<Term> t;
    for (const std::size_t i : *cls) t.push_back({static_cast<std::size_t>(sm.lambda_var[i]), 1.0});
    const double n = static_cast<double>(cls->size());
    const std::string tag = cls == &sm.hat_records ? "wm" : "nat";
    sm.model.add_constraint("lambda_min_" + tag, t, RowSense::ge, cfg.p_l * n);
    sm.model.add_constraint("lambda_max_" + tag, t, RowSense::le, cfg.p_u * n);
  }
}

StageOutcome run_stage(const StealModel& sm, const std::string& name, const StealConfig& cfg,
                       const std::vector<double>* warm) {
  if (cfg.dump_lp_dir) {
    std::filesystem::create_directories(*cfg.dump_lp_dir);
    export_lp(sm.model, *cfg.dump_lp_dir / (name + ".lp"));
  }
  StageOutcome out;
  out.sol = solve_mip(sm.model, cfg.solver, warm);
  auto& d = out.diag;
  d.name = name;
  d.status = out.sol.status;
  d.objective = out.sol.objective;
  d.gap = out.sol.gap;
  d.nodes = out.sol.nodes;
  d.lp_iterations = out.sol.lp_iterations;
  d.seconds = out.sol.wall_seconds;
  d.rows = sm.model.num_constraints();
  d.cols = sm.model.num_variables();
  d.has_solution = out.sol.has_solution;
  if (out.sol.has_solution) {
    const auto rep = audit_assignment(sm.model, out.sol.x, cfg.solver.feasibility_tol);
    d.audit_ok = rep.ok;
    d.max_violation = std::max({rep.max_row_violation, rep.max_bound_violation, rep.max_integrality_violation});
  }
  return out;
}

void fill_lambda(StealResult& res, const StealModel& sm, const std::vector<double>& x) {
  res.lambda.assign(sm.lambda_var.size(), -1);
  for (std::size_t i = 0; i < sm.lambda_var.size(); ++i) {
    if (sm.lambda_var[i] >= 0) res.lambda[i] = x[static_cast<std::size_t>(sm.lambda_var[i])] > 0.5 ? 1 : 0;
  }
}

}  // namespace detail

using namespace detail;

namespace {

void require_as1(const StealConfig& cfg) {
  cfg.validate();
  if (!cfg.gamma || !cfg.z_star) throw ConfigError("AS1 formulations need gamma and z_star");
}

double threshold_for(const SentenceRecord& r, const StealConfig& cfg) {
  return watermark_threshold(r.length, *cfg.gamma, *cfg.z_star);
}

StealModel as1_bounds_model(const Corpus& corpus, const std::vector<Label>& labels, const StealConfig& cfg,
                            const std::vector<double>& hat_rhs_by_record,
                            const std::vector<double>& tilde_rhs_by_record) {
  StealModel sm;
  init_model(sm, corpus, labels, 1);
  for (const std::size_t i : sm.hat_records) {
    sm.model.add_constraint("wm_" + std::to_string(i), green_terms(sm, corpus.records[i], 0), RowSense::ge,
                            hat_rhs_by_record[i]);
  }
  for (const std::size_t i : sm.tilde_records) {
    sm.model.add_constraint("nat_" + std::to_string(i), green_terms(sm, corpus.records[i], 0), RowSense::le,
                            tilde_rhs_by_record[i]);
  }
  add_size_cap(sm, 0, *cfg.gamma * static_cast<double>(sm.m), "size");
  return sm;
}

// Shared variables and rows of both Pro stages.
StealModel pro_base(const Corpus& corpus, const std::vector<Label>& labels, const StealConfig& cfg) {
  require_as1(cfg);
  StealModel sm;
  init_model(sm, corpus, labels, 1);
  double nat_len = 0.0;
  for (const std::size_t i : sm.hat_records) {
    const auto& r = corpus.records[i];
    const double g = threshold_for(r, cfg);
    const auto l = static_cast<double>(r.length);
    if (g > l) throw InfeasibleError("watermark threshold exceeds sentence length for record " + std::to_string(i));
    sm.b_hat_var.push_back(static_cast<long>(sm.model.add_continuous("bh_" + std::to_string(i), g, l)));
  }
  for (const std::size_t i : sm.tilde_records) {
    const auto& r = corpus.records[i];
    const auto l = static_cast<double>(r.length);
    nat_len += l;
    const double g = std::min(threshold_for(r, cfg), l);
    sm.b_tilde_var.push_back(static_cast<long>(sm.model.add_continuous("bt_" + std::to_string(i), 0.0, g)));
  }
  const double anchor = *cfg.gamma * nat_len;
  sm.b_abs_var = static_cast<long>(sm.model.add_continuous("b_abs", 0.0, nat_len + anchor));
  for (std::size_t k = 0; k < sm.hat_records.size(); ++k) {
    const std::size_t i = sm.hat_records[k];
    auto t = green_terms(sm, corpus.records[i], 0);
    t.push_back({static_cast<std::size_t>(sm.b_hat_var[k]), -1.0});
    sm.model.add_constraint("wm_" + std::to_string(i), t, RowSense::ge, 0.0);
  }
  for (std::size_t k = 0; k < sm.tilde_records.size(); ++k) {
    const std::size_t i = sm.tilde_records[k];
    auto t = green_terms(sm, corpus.records[i], 0);
    t.push_back({static_cast<std::size_t>(sm.b_tilde_var[k]), -1.0});
    sm.model.add_constraint("nat_" + std::to_string(i), t, RowSense::le, 0.0);
  }
  std::vector<Term> pos{{static_cast<std::size_t>(sm.b_abs_var), 1.0}};
  std::vector<Term> neg{{static_cast<std::size_t>(sm.b_abs_var), 1.0}};
  for (const long v : sm.b_tilde_var) {
    pos.push_back({static_cast<std::size_t>(v), -1.0});
    neg.push_back({static_cast<std::size_t>(v), 1.0});
  }
  sm.model.add_constraint("abs_pos", pos, RowSense::ge, -anchor);
  sm.model.add_constraint("abs_neg", neg, RowSense::ge, anchor);
  add_size_cap(sm, 0, *cfg.gamma * static_cast<double>(sm.m), "size");
  return sm;
}

// Shared variables and rows of both AS2 stages.
StealModel as2_base(const Corpus& corpus, const std::vector<Label>& labels, const StealConfig& cfg) {
  cfg.validate();
  StealModel sm;
  init_model(sm, corpus, labels, 1);
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
  for (std::size_t k = 0; k < sm.hat_records.size(); ++k) {
    const std::size_t i = sm.hat_records[k];
    const auto& r = corpus.records[i];
    const auto l = static_cast<double>(r.length);
    const auto lam = static_cast<std::size_t>(sm.lambda_var[i]);
    const auto b = static_cast<std::size_t>(sm.b_hat_var[k]);
    auto t = green_terms(sm, r, 0);
    t.push_back({b, -1.0});
    t.push_back({lam, -l});
    sm.model.add_constraint("wm_" + std::to_string(i), t, RowSense::ge, -l);
    sm.model.add_constraint("gate_" + std::to_string(i), {{b, 1.0}, {lam, -l}}, RowSense::le, 0.0);
    if (separate) {
      auto s = green_terms(sm, r, 0, 1.0 / l);
      s.push_back({static_cast<std::size_t>(sm.p_lo_var), -1.0});
      s.push_back({lam, -1.0});
      sm.model.add_constraint("sep_" + std::to_string(i), s, RowSense::ge, -1.0);
    }
  }
  for (std::size_t k = 0; k < sm.tilde_records.size(); ++k) {
    const std::size_t i = sm.tilde_records[k];
    const auto& r = corpus.records[i];
    const auto l = static_cast<double>(r.length);
    const auto lam = static_cast<std::size_t>(sm.lambda_var[i]);
    const auto b = static_cast<std::size_t>(sm.b_tilde_var[k]);
    auto t = green_terms(sm, r, 0);
    t.push_back({b, -1.0});
    t.push_back({lam, l});
    sm.model.add_constraint("nat_" + std::to_string(i), t, RowSense::le, l);
    sm.model.add_constraint("gate_" + std::to_string(i), {{b, 1.0}, {lam, -l}}, RowSense::le, 0.0);
    if (separate) {
      auto s = green_terms(sm, r, 0, 1.0 / l);
      s.push_back({static_cast<std::size_t>(sm.p_hi_var), -1.0});
      s.push_back({lam, 1.0});
      sm.model.add_constraint("sep_" + std::to_string(i), s, RowSense::le, 1.0);
    }
  }
  add_lambda_counts(sm, cfg);
  add_size_cap(sm, 0, cfg.effective_eta() * static_cast<double>(sm.m), "size");
  if (separate) {
    sm.model.add_constraint("margin",
                            {{static_cast<std::size_t>(sm.p_lo_var), 1.0}, {static_cast<std::size_t>(sm.p_hi_var), -1.0}},
                            RowSense::ge, cfg.epsilon);
  }
  return sm;
}

std::vector<Term> hat_minus_tilde(const StealModel& sm) {
  std::vector<Term> obj;
  for (const long v : sm.b_hat_var) obj.push_back({static_cast<std::size_t>(v), 1.0});
  for (const long v : sm.b_tilde_var) obj.push_back({static_cast<std::size_t>(v), -1.0});
  return obj;
}

[[noreturn]] void fail_stage(const StageOutcome& o) {
  throw InfeasibleError(o.diag.name + " returned no solution (" + std::string(to_string(o.sol.status)) + ")");
}

}  // namespace

StealModel build_vanilla_as1(const Corpus& corpus, const std::vector<Label>& labels, const TokenWeights& weights,
                             const StealConfig& config) {
  require_as1(config);
  check_labels(corpus, labels);
  std::vector<double> g(corpus.records.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = threshold_for(corpus.records[i], config);
  auto sm = as1_bounds_model(corpus, labels, config, g, g);
  sm.model.set_objective(weighted_size(sm, &weights), ObjSense::minimize);
  return sm;
}

StealModel build_oracle_as1(const Corpus& corpus, const std::vector<Label>& labels, const OracleCounts& counts,
                            const TokenWeights& weights, const StealConfig& config) {
  require_as1(config);
  check_labels(corpus, labels);
  if (counts.green.size() != corpus.records.size()) throw InputError("oracle counts missing for some records");
  std::vector<double> g(counts.green.begin(), counts.green.end());
  auto sm = as1_bounds_model(corpus, labels, config, g, g);
  sm.model.set_objective(weighted_size(sm, &weights), ObjSense::minimize);
  return sm;
}

StealModel build_pro_as1_stage1(const Corpus& corpus, const std::vector<Label>& labels, const StealConfig& config) {
  auto sm = pro_base(corpus, labels, config);
  std::vector<Term> obj;
  for (const long v : sm.b_hat_var) obj.push_back({static_cast<std::size_t>(v), 1.0});
  obj.push_back({static_cast<std::size_t>(sm.b_abs_var), -1.0});
  sm.model.set_objective(obj, ObjSense::maximize);
  return sm;
}

StealModel build_pro_as1_stage2(const Corpus& corpus, const std::vector<Label>& labels, const StageOneBounds& bounds,
                                const TokenWeights& weights, const StealConfig& config) {
  auto sm = pro_base(corpus, labels, config);
  add_aggregate_rows(sm, bounds, config);
  sm.model.set_objective(weighted_size(sm, &weights), ObjSense::minimize);
  return sm;
}

StealModel build_as2_stage1(const Corpus& corpus, const std::vector<Label>& labels, const StealConfig& config) {
  auto sm = as2_base(corpus, labels, config);
  sm.model.set_objective(hat_minus_tilde(sm), ObjSense::maximize);
  return sm;
}

StealModel build_as2_stage2(const Corpus& corpus, const std::vector<Label>& labels, const StageOneBounds& bounds,
                            const TokenWeights& weights, const StealConfig& config) {
  auto sm = as2_base(corpus, labels, config);
  add_aggregate_rows(sm, bounds, config);
  sm.model.set_objective(weighted_size(sm, &weights), ObjSense::minimize);
  return sm;
}

StageOneBounds extract_bounds(const StealModel& sm, const std::vector<double>& x) {
  StageOneBounds b;
  b.hat_records = sm.hat_records;
  b.tilde_records = sm.tilde_records;
  for (const long v : sm.b_hat_var) b.b_hat.push_back(x.at(static_cast<std::size_t>(v)));
  for (const long v : sm.b_tilde_var) b.b_tilde.push_back(x.at(static_cast<std::size_t>(v)));
  for (const double v : b.b_hat) b.b_hat_sum += v;
  for (const double v : b.b_tilde) b.b_tilde_sum += v;
  if (sm.b_abs_var >= 0) b.b_abs = x.at(static_cast<std::size_t>(sm.b_abs_var));
  return b;
}

std::vector<ColorCode> extract_colors(const StealModel& sm, const std::vector<double>& x) {
  std::vector<ColorCode> out(sm.keys, ColorCode(sm.m, 0));
  for (std::size_t k = 0; k < sm.keys; ++k) {
    for (std::size_t j = 0; j < sm.m; ++j) out[k][j] = x.at(sm.c_var(k, j)) > 0.5 ? 1 : 0;
  }
  return out;
}

namespace {

StealResult single_stage(const StealModel& sm, const std::string& mode, const StealConfig& cfg) {
  StealResult res;
  res.mode = mode;
  auto o = run_stage(sm, mode, cfg, nullptr);
  res.stages.push_back(o.diag);
  if (!o.sol.has_solution) fail_stage(o);
  res.stolen = extract_colors(sm, o.sol.x);
  return res;
}

}  // namespace

StealResult steal_vanilla(const Corpus& corpus, const std::vector<Label>& labels, const TokenWeights& weights,
                          const StealConfig& config) {
  return single_stage(build_vanilla_as1(corpus, labels, weights, config), "vanilla", config);
}

StealResult steal_oracle(const Corpus& corpus, const std::vector<Label>& labels, const OracleCounts& counts,
                         const TokenWeights& weights, const StealConfig& config) {
  return single_stage(build_oracle_as1(corpus, labels, counts, weights, config), "oracle", config);
}

StealResult steal_pro(const Corpus& corpus, const std::vector<Label>& labels, const TokenWeights& weights,
                      const StealConfig& config) {
  StealResult res;
  res.mode = "pro";
  const auto s1 = build_pro_as1_stage1(corpus, labels, config);
  auto o1 = run_stage(s1, "pro_stage1", config, nullptr);
  res.stages.push_back(o1.diag);
  if (!o1.sol.has_solution) fail_stage(o1);
  res.bounds = extract_bounds(s1, o1.sol.x);
  const auto s2 = build_pro_as1_stage2(corpus, labels, *res.bounds, weights, config);
  auto o2 = run_stage(s2, "pro_stage2", config, &o1.sol.x);
  res.stages.push_back(o2.diag);
  if (!o2.sol.has_solution) fail_stage(o2);
  res.stolen = extract_colors(s2, o2.sol.x);
  return res;
}

StealResult steal_as2(const Corpus& corpus, const std::vector<Label>& labels, const TokenWeights& weights,
                      const StealConfig& config) {
  StealConfig cfg = config;
  StealResult res;
  res.mode = "as2";
  int widenings = 0;
  while (true) {
    const auto s1 = build_as2_stage1(corpus, labels, cfg);
    auto o1 = run_stage(s1, "as2_stage1", cfg, nullptr);
    res.stages.push_back(o1.diag);
    if (o1.sol.has_solution) {
      auto bounds = extract_bounds(s1, o1.sol.x);
      const auto s2 = build_as2_stage2(corpus, labels, bounds, weights, cfg);
      auto o2 = run_stage(s2, "as2_stage2", cfg, &o1.sol.x);
      res.stages.push_back(o2.diag);
      if (o2.sol.has_solution) {
        res.bounds = std::move(bounds);
        res.stolen = extract_colors(s2, o2.sol.x);
        fill_lambda(res, s2, o2.sol.x);
        return res;
      }
    }
    relax_or_throw(cfg, res, widenings);
  }
}

StealResult steal_frequency(const Corpus& corpus, std::optional<std::size_t> list_size) {
  StealResult res;
  res.mode = "freq";
  res.stolen.push_back(frequency_baseline_split(corpus, list_size));
  return res;
}

namespace detail {

// A stage that ends without an incumbent (proved infeasible or out of
// budget) triggers the next relaxation step.
void relax_or_throw(StealConfig& cfg, StealResult& res, int& widenings) {
  std::string cause;
  if (!res.stages.empty()) cause = " after " + res.stages.back().name + " ended " + to_string(res.stages.back().status);
  if (cfg.use_separation) {
    cfg.use_separation = false;
    res.relaxations.push_back("dropped separation margin" + cause);
    return;
  }
  if (widenings < 4 && (cfg.p_l > 0.0 || cfg.p_u < 1.0)) {
    ++widenings;
    cfg.p_l = std::max(0.0, cfg.p_l - 0.05);
    cfg.p_u = std::min(1.0, cfg.p_u + 0.05);
    char buf[96];
    std::snprintf(buf, sizeof buf, "widened p bounds to [%.2f, %.2f]", cfg.p_l, cfg.p_u);
    res.relaxations.push_back(buf + cause);
    return;
  }
  throw InfeasibleError("no solution after all relaxation steps;" + cause);
}

}  // namespace detail

}  // namespace wmforge
