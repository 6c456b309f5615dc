#include "wmforge/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "wmforge/errors.hpp"
#include "wmforge/vocab_lm.hpp"
#include "wmforge/watermark.hpp"

namespace wmforge {

using nlohmann::json;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Runs one stage, timing it and prefixing any error with the stage name.
template <class F>
void stage(const char* name, std::vector<std::pair<std::string, double>>& seconds, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string pre = std::string("stage ") + name + ": ";
  try {
    body();
  } catch (const ConfigError& e) {
    throw ConfigError(pre + e.what());
  } catch (const InputError& e) {
    throw InputError(pre + e.what());
  } catch (const IoError& e) {
    throw IoError(pre + e.what());
  } catch (const InfeasibleError& e) {
    throw InfeasibleError(pre + e.what());
  }
  seconds.emplace_back(name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

Corpus relabeled(const Corpus& corpus, const std::vector<Label>& labels) {
  Corpus c = corpus;
  for (std::size_t i = 0; i < c.records.size(); ++i) c.records[i].claimed = labels[i];
  return c;
}

}  // namespace

void save_color_codes(const ColorCodeFile& f, const std::filesystem::path& path) {
  json lists = json::array();
  for (const auto& c : f.lists) {
    if (c.size() != f.m) throw InputError("color code length differs from m");
    json g = json::array();
    for (std::size_t j = 0; j < c.size(); ++j)
      if (c[j]) g.push_back(j);
    lists.push_back(std::move(g));
  }
  json j = {{"version", 1}, {"m", f.m}, {"mode", f.mode}, {"lists", std::move(lists)}};
  write_text(path, j.dump() + "\n");
}

ColorCodeFile load_color_codes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  ColorCodeFile f;
  try {
    const json j = json::parse(in);
    if (j.at("version").get<int>() != 1) throw IoError(path.string() + ": unsupported color-code version");
    f.m = j.at("m").get<std::size_t>();
    f.mode = j.value("mode", std::string{});
    for (const auto& g : j.at("lists")) {
      ColorCode c(f.m, 0);
      for (const auto& t : g) {
        const auto id = t.get<std::size_t>();
        if (id >= f.m) throw IoError(path.string() + ": token id out of range");
        c[id] = 1;
      }
      f.lists.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return f;
}

std::vector<ColorCode> true_splits(const CorpusMeta& meta) {
  std::vector<ColorCode> out;
  for (const auto& k : meta.keys) out.push_back(derive_split(k, meta.gamma, meta.m).color);
  return out;
}

std::vector<DetectionResult> detect_corpus(const Corpus& corpus, const std::vector<ColorCode>& splits,
                                           const DetectorConfig& config) {
  if (splits.empty()) throw InputError("no splits to detect with");
  std::vector<DetectionResult> out;
  out.reserve(corpus.records.size());
  for (const auto& r : corpus.records) {
    DetectionResult best = detect(r.counts, r.length, splits[0], config);
    for (std::size_t k = 1; k < splits.size(); ++k) {
      auto d = detect(r.counts, r.length, splits[k], config);
      if (d.z_score > best.z_score) best = d;
    }
    out.push_back(best);
  }
  return out;
}

DetectionSummary summarize_detection(const Corpus& corpus, const std::vector<DetectionResult>& results) {
  DetectionSummary s;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    if (corpus.records[i].truth == Label::watermarked) {
      ++s.watermarked;
      s.true_positives += results[i].is_watermarked;
    } else {
      ++s.natural;
      s.false_positives += results[i].is_watermarked;
    }
  }
  return s;
}

GiBiTable emit_gi_bi_diagnostic(const Corpus& corpus, const std::vector<Label>& labels, const StealResult& steal,
                                const OracleCounts& counts, double gamma, double z_star) {
  GiBiTable t;
  std::vector<std::optional<double>> b(corpus.records.size());
  const bool oracle = steal.mode == "oracle";
  if (steal.bounds)
    for (std::size_t e = 0; e < steal.bounds->hat_records.size(); ++e)
      b[steal.bounds->hat_records[e]] = steal.bounds->b_hat[e];
  double sum_g = 0.0, sum_b = 0.0;
  std::size_t nb = 0;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    if (labels[i] != Label::watermarked) continue;
    const auto& r = corpus.records[i];
    GiBiRow row;
    row.id = r.id;
    row.length = r.length;
    row.g = watermark_threshold(r.length, gamma, z_star);
    row.g_true = counts.green[i];
    row.b = oracle ? std::optional<double>(double(counts.green[i])) : b[i];
    sum_g += std::abs(row.g - double(row.g_true));
    if (row.b) {
      sum_b += std::abs(*row.b - double(row.g_true));
      ++nb;
    }
    t.rows.push_back(row);
  }
  if (!t.rows.empty()) t.mean_gap_g = sum_g / double(t.rows.size());
  if (nb > 0) t.mean_gap_b = sum_b / double(nb);
  return t;
}

std::vector<StealRow> score_stolen(const std::string& mode, const std::vector<ColorCode>& stolen,
                                   const std::vector<ColorCode>& truth) {
  std::vector<StealRow> rows;
  if (stolen.size() == 1 && truth.size() == 1) {
    rows.push_back(StealRow{mode, 0, 0, evaluate_split(stolen[0], truth[0])});
    return rows;
  }
  const auto mk = evaluate_multikey(stolen, truth);
  for (std::size_t k = 0; k < stolen.size(); ++k) rows.push_back(StealRow{mode, k, mk.assignment[k], mk.per_key[k]});
  return rows;
}

ExperimentReport run_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentReport rep;
  rep.config = cfg;
  rep.config_hash = config_hash(cfg);
  const auto& dir = cfg.out_dir;
  auto& secs = rep.stage_seconds;

  stage("setup", secs, [&] {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    save_config(cfg, dir / "config.json");
  });

  std::optional<ToyLanguageModel> model;
  Corpus corpus;
  std::vector<ColorCode> truth;
  stage("generate", secs, [&] {
    model.emplace(build_model(cfg.model_seed(), cfg.m, cfg.d, cfg.model, cfg.threads));
    save_model(*model, dir / "model.bin");
    WatermarkParams params;
    params.gamma = cfg.gamma;
    params.delta = cfg.delta;
    params.keys = cfg.keys();
    corpus = generate_corpus(*model, params, cfg.n_watermarked, cfg.n_natural, LengthRange{cfg.len_min, cfg.len_max},
                             cfg.corpus_seed(), true, cfg.threads);
    corpus = inject_errors(corpus, cfg.r_c, cfg.error_seed());
    save_corpus(corpus, dir / "corpus.jsonl");
    truth = true_splits(corpus.meta);
    save_color_codes(ColorCodeFile{cfg.m, "truth", truth}, dir / "true_split.json");
  });

  const DetectorConfig det{cfg.z_star, cfg.gamma};
  stage("detect", secs, [&] { rep.detection = summarize_detection(corpus, detect_corpus(corpus, truth, det)); });

  std::vector<Label> labels;
  stage("steal", secs, [&] {
    const bool as1 = cfg.mode == AttackMode::vanilla || cfg.mode == AttackMode::oracle || cfg.mode == AttackMode::pro;
    labels = as1 ? detector_labels(corpus, truth[0], det) : claimed_labels(corpus);
    const auto weights = weights_for_labels(corpus, labels);
    const auto sc = cfg.effective_steal();
    switch (cfg.mode) {
      case AttackMode::vanilla: rep.steal = steal_vanilla(corpus, labels, weights, sc); break;
      case AttackMode::oracle:
        rep.steal = steal_oracle(corpus, labels, oracle_counts(corpus, truth[0]), weights, sc);
        break;
      case AttackMode::pro: rep.steal = steal_pro(corpus, labels, weights, sc); break;
      case AttackMode::as2: rep.steal = steal_as2(corpus, labels, weights, sc); break;
      case AttackMode::multikey: rep.steal = steal_multikey(corpus, labels, cfg.num_keys, sc); break;
      case AttackMode::freq: rep.steal = steal_frequency(corpus); break;
    }
    save_color_codes(ColorCodeFile{cfg.m, rep.steal.mode, rep.steal.stolen}, dir / "stolen.json");
    write_text(dir / "steal_result.json", steal_result_to_json(rep.steal).dump(2) + "\n");
  });

  if (cfg.num_keys == 1) {
    stage("remove", secs, [&] {
      RemovalOptions opt = cfg.removal;
      opt.gumbel.seed = cfg.removal_seed();
      opt.threads = cfg.threads;
      auto rr = remove_watermark(corpus, rep.steal.stolen[0], *model, opt);
      save_corpus(rr.rewritten, dir / "corpus_removed.jsonl");
      RemovalRow row;
      row.strategy = to_string(opt.strategy);
      row.metrics = evaluate_removal(corpus, rr.rewritten, truth[0], det);
      row.rewritten = rr.touched.size();
      for (std::size_t k = 0; k < rr.touched.size(); ++k) {
        row.ppl_before += rr.ppl_before[k];
        row.ppl_after += rr.ppl_after[k];
        row.flagged += rr.flagged[k];
      }
      if (row.rewritten > 0) {
        row.ppl_before /= double(row.rewritten);
        row.ppl_after /= double(row.rewritten);
      }
      row.replaced_tokens = rr.replaced_tokens;
      rep.removal = row;
    });
  }

  stage("evaluate", secs, [&] {
    rep.steal_table = score_stolen(rep.steal.mode, rep.steal.stolen, truth);
    if (cfg.mode != AttackMode::freq) {
      std::optional<std::size_t> top;
      if (cfg.num_keys > 1)
        top = cfg.steal.mu > 0 ? static_cast<std::size_t>(std::ceil(cfg.steal.mu - 1e-9))
                               : green_list_size(cfg.gamma, cfg.m);
      const auto base = steal_frequency(relabeled(corpus, labels), top);
      std::vector<ColorCode> lists(cfg.num_keys, base.stolen[0]);
      for (auto& row : score_stolen("freq", lists, truth)) rep.steal_table.push_back(row);
    }
    if (cfg.num_keys == 1)
      rep.gi_bi = emit_gi_bi_diagnostic(corpus, labels, rep.steal, oracle_counts(corpus, truth[0]), cfg.gamma,
                                        cfg.z_star);
    write_report(rep, dir);
  });
  return rep;
}

std::string steal_table_csv(const std::vector<StealRow>& rows) {
  std::string s = "mode,key,matched_truth,N_g,N_t,precision\n";
  for (const auto& r : rows) {
    s += r.mode + "," + std::to_string(r.key) + "," + std::to_string(r.matched_truth) + "," +
         std::to_string(r.metrics.n_g) + "," + std::to_string(r.metrics.n_t) + "," +
         (r.metrics.precision ? fmt(*r.metrics.precision) : std::string("NA")) + "\n";
  }
  return s;
}

std::string removal_table_csv(const RemovalRow& r) {
  const auto& m = r.metrics;
  return "strategy,sentences,G_avg_before,G_avg_after,GRR,detected_before,evaded,evasion_rate,ppl_before,ppl_after,"
         "rewritten,flagged,replaced_tokens\n" +
         r.strategy + "," + std::to_string(m.sentences) + "," + fmt(m.g_avg_before) + "," + fmt(m.g_avg_after) + "," +
         fmt(m.grr) + "," + std::to_string(m.detected_before) + "," + std::to_string(m.evaded) + "," +
         fmt(m.evasion_rate) + "," + fmt(r.ppl_before) + "," + fmt(r.ppl_after) + "," + std::to_string(r.rewritten) +
         "," + std::to_string(r.flagged) + "," + std::to_string(r.replaced_tokens) + "\n";
}

std::string gi_bi_csv(const GiBiTable& t) {
  std::string s = "id,length,g,b,g_true\n";
  for (const auto& r : t.rows)
    s += std::to_string(r.id) + "," + std::to_string(r.length) + "," + fmt(r.g) + "," +
         (r.b ? fmt(*r.b) : std::string("NA")) + "," + std::to_string(r.g_true) + "\n";
  return s;
}

std::string solver_stages_csv(const StealResult& steal) {
  std::string s = "stage,status,objective,gap,nodes,lp_iterations,rows,cols,has_solution,audit_ok,max_violation\n";
  for (const auto& d : steal.stages)
    s += d.name + "," + to_string(d.status) + "," + fmt(d.objective) + "," + fmt(d.gap) + "," +
         std::to_string(d.nodes) + "," + std::to_string(d.lp_iterations) + "," + std::to_string(d.rows) + "," +
         std::to_string(d.cols) + "," + (d.has_solution ? "1," : "0,") + (d.audit_ok ? "1" : "0") + "," + fmt(d.max_violation) + "\n";
  return s;
}

namespace {

json stages_json(const StealResult& r) {
  json stages = json::array();
  for (const auto& d : r.stages)
    stages.push_back({{"name", d.name},
                      {"status", to_string(d.status)},
                      {"objective", d.objective},
                      {"gap", d.gap},
                      {"nodes", d.nodes},
                      {"lp_iterations", d.lp_iterations},
                      {"seconds", d.seconds},
                      {"rows", d.rows},
                      {"cols", d.cols},
                      {"has_solution", d.has_solution},
                      {"audit_ok", d.audit_ok},
                      {"max_violation", d.max_violation}});
  return stages;
}

}  // namespace

json steal_result_to_json(const StealResult& r) {
  json lists = json::array();
  for (const auto& c : r.stolen) {
    json g = json::array();
    for (std::size_t j = 0; j < c.size(); ++j)
      if (c[j]) g.push_back(j);
    lists.push_back(std::move(g));
  }
  json j = {{"mode", r.mode},
            {"stolen", lists},
            {"lambda", r.lambda},
            {"rho", r.rho},
            {"iterations", r.iterations},
            {"converged", r.converged},
            {"relaxations", r.relaxations},
            {"stages", stages_json(r)}};
  if (r.bounds) {
    const auto& b = *r.bounds;
    j["bounds"] = {{"hat_records", b.hat_records}, {"b_hat", b.b_hat},         {"tilde_records", b.tilde_records},
                   {"b_tilde", b.b_tilde},         {"b_hat_sum", b.b_hat_sum}, {"b_tilde_sum", b.b_tilde_sum},
                   {"b_abs", b.b_abs}};
  } else {
    j["bounds"] = nullptr;
  }
  return j;
}

json report_to_json(const ExperimentReport& r) {
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["provenance"] = {{"tool", "wmforge"},
                     {"version", kToolVersion},
                     {"config_hash", r.config_hash},
                     {"seed", r.config.seed},
                     {"sub_seeds",
                      {{"model", r.config.model_seed()},
                       {"corpus", r.config.corpus_seed()},
                       {"errors", r.config.error_seed()},
                       {"steal", r.config.steal_seed()},
                       {"removal", r.config.removal_seed()}}}};
  j["config"] = to_json(r.config);
  j["detection"] = {{"natural", r.detection.natural},
                    {"false_positives", r.detection.false_positives},
                    {"fpr", r.detection.fpr()},
                    {"watermarked", r.detection.watermarked},
                    {"true_positives", r.detection.true_positives},
                    {"tpr", r.detection.tpr()}};
  json st = json::array();
  for (const auto& row : r.steal_table)
    st.push_back({{"mode", row.mode},
                  {"key", row.key},
                  {"matched_truth", row.matched_truth},
                  {"n_g", row.metrics.n_g},
                  {"n_t", row.metrics.n_t},
                  {"precision", opt_json(row.metrics.precision)}});
  j["steal_table"] = st;
  if (r.removal) {
    const auto& m = r.removal->metrics;
    j["removal"] = {{"strategy", r.removal->strategy},
                    {"sentences", m.sentences},
                    {"g_avg_before", m.g_avg_before},
                    {"g_avg_after", m.g_avg_after},
                    {"grr", m.grr},
                    {"detected_before", m.detected_before},
                    {"evaded", m.evaded},
                    {"evasion_rate", m.evasion_rate},
                    {"ppl_before", r.removal->ppl_before},
                    {"ppl_after", r.removal->ppl_after},
                    {"rewritten", r.removal->rewritten},
                    {"flagged", r.removal->flagged},
                    {"replaced_tokens", r.removal->replaced_tokens}};
  } else {
    j["removal"] = nullptr;
  }
  if (r.gi_bi) {
    json rows = json::array();
    for (const auto& row : r.gi_bi->rows)
      rows.push_back({{"id", row.id}, {"length", row.length}, {"g", row.g}, {"b", opt_json(row.b)},
                      {"g_true", row.g_true}});
    j["gi_bi"] = {{"mean_gap_g", r.gi_bi->mean_gap_g}, {"mean_gap_b", opt_json(r.gi_bi->mean_gap_b)}, {"rows", rows}};
  } else {
    j["gi_bi"] = nullptr;
  }
  j["solver"] = {{"stages", stages_json(r.steal)},
                 {"iterations", r.steal.iterations},
                 {"converged", r.steal.converged},
                 {"relaxations", r.steal.relaxations}};
  json timing = json::object();
  for (const auto& [name, s] : r.stage_seconds) timing[name] = s;
  j["timing_seconds"] = timing;
  return j;
}

std::string report_summary(const ExperimentReport& r) {
  std::ostringstream o;
  const auto& c = r.config;
  o << "wmforge " << kToolVersion << "  config " << r.config_hash << "  seed " << c.seed << "\n";
  o << "m=" << c.m << " gamma=" << c.gamma << " delta=" << c.delta << " keys=" << c.num_keys
    << " n=" << c.n_watermarked << "+" << c.n_natural << " r_c=" << c.r_c << " mode=" << to_string(c.mode) << "\n\n";
  o << "detection: FPR " << fmt(r.detection.fpr()) << "  TPR " << fmt(r.detection.tpr()) << "\n\n";
  o << "stealing\n";
  for (const auto& row : r.steal_table)
    o << "  " << row.mode << " key " << row.key << ": N_g " << row.metrics.n_g << "  N_t " << row.metrics.n_t
      << "  precision " << (row.metrics.precision ? fmt(*row.metrics.precision) : std::string("NA")) << "\n";
  for (const auto& d : r.steal.stages)
    o << "  [" << d.name << "] " << to_string(d.status) << " obj " << fmt(d.objective) << " nodes " << d.nodes
      << " lp_it " << d.lp_iterations
      << (!d.has_solution ? " no solution" : d.audit_ok ? " audit ok" : " audit FAILED") << "\n";
  for (const auto& s : r.steal.relaxations) o << "  relaxation: " << s << "\n";
  if (r.gi_bi) {
    o << "\nstage-1 gaps: mean |g - g_true| " << fmt(r.gi_bi->mean_gap_g);
    if (r.gi_bi->mean_gap_b) o << "  mean |b - g_true| " << fmt(*r.gi_bi->mean_gap_b);
    o << "\n";
  }
  if (r.removal) {
    const auto& m = r.removal->metrics;
    o << "\nremoval (" << r.removal->strategy << "): G_avg " << fmt(m.g_avg_before) << " -> " << fmt(m.g_avg_after)
      << "  GRR " << fmt(m.grr) << "  evasion " << fmt(m.evasion_rate) << "  PPL " << fmt(r.removal->ppl_before)
      << " -> " << fmt(r.removal->ppl_after) << "\n";
  }
  return o.str();
}

void write_report(const ExperimentReport& r, const std::filesystem::path& dir) {
  write_text(dir / "report.json", report_to_json(r).dump(2) + "\n");
  write_text(dir / "summary.txt", report_summary(r));
  write_text(dir / "steal_table.csv", steal_table_csv(r.steal_table));
  write_text(dir / "solver_stages.csv", solver_stages_csv(r.steal));
  if (r.removal) write_text(dir / "removal_table.csv", removal_table_csv(*r.removal));
  if (r.gi_bi) write_text(dir / "gi_bi.csv", gi_bi_csv(*r.gi_bi));
}

json load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("schema_version") || !j["schema_version"].is_number_integer())
    throw IoError(path.string() + ": not a wmforge report (no schema_version)");
  const int v = j["schema_version"].get<int>();
  if (v > kReportSchemaVersion || v < 1)
    throw IoError(path.string() + ": report schema version " + std::to_string(v) + ", this build reads up to " +
                  std::to_string(kReportSchemaVersion));
  return j;
}

}  // namespace wmforge
