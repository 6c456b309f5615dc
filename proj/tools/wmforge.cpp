// wmforge command-line front end.
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "wmforge/errors.hpp"
#include "wmforge/feasibility.hpp"
#include "wmforge/lp_format.hpp"
#include "wmforge/pipeline.hpp"
#include "wmforge/vocab_lm.hpp"

using namespace wmforge;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitIo = 4;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<int> threads;
};

ExperimentConfig effective_config(const Globals& g) {
  ExperimentConfig c = g.config.empty() ? default_config() : load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (!g.out_dir.empty()) c.out_dir = g.out_dir;
  if (g.threads) {
    c.threads = *g.threads;
    c.steal.solver.threads = *g.threads;
  }
  c.validate();
  return c;
}

void ensure_dir(const std::filesystem::path& d) {
  std::error_code ec;
  std::filesystem::create_directories(d, ec);
  if (ec) throw IoError("cannot create " + d.string() + ": " + ec.message());
}

void write_json(const std::filesystem::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

std::vector<ColorCode> splits_for(const Corpus& corpus, const std::string& split_path) {
  return split_path.empty() ? true_splits(corpus.meta) : load_color_codes(split_path).lists;
}

struct GenFlags {
  std::optional<std::size_t> m, keys, n, len_min, len_max;
  std::optional<double> gamma, delta, rc;
  std::string out;
};

int cmd_gen_corpus(const Globals& g, const GenFlags& f) {
  auto cfg = effective_config(g);
  if (f.m) cfg.m = *f.m;
  if (f.gamma) cfg.gamma = *f.gamma;
  if (f.delta) cfg.delta = *f.delta;
  if (f.keys) cfg.num_keys = *f.keys;
  if (f.n) cfg.n_watermarked = cfg.n_natural = *f.n;
  if (f.len_min) cfg.len_min = *f.len_min;
  if (f.len_max) cfg.len_max = *f.len_max;
  if (f.rc) cfg.r_c = *f.rc;
  if (cfg.num_keys > 1) cfg.mode = AttackMode::multikey;
  cfg.validate();
  ensure_dir(cfg.out_dir);
  save_config(cfg, cfg.out_dir / "config.json");
  auto model = build_model(cfg.model_seed(), cfg.m, cfg.d, cfg.model, cfg.threads);
  save_model(model, cfg.out_dir / "model.bin");
  WatermarkParams params;
  params.gamma = cfg.gamma;
  params.delta = cfg.delta;
  params.keys = cfg.keys();
  auto corpus = generate_corpus(model, params, cfg.n_watermarked, cfg.n_natural,
                                LengthRange{cfg.len_min, cfg.len_max}, cfg.corpus_seed(), true, cfg.threads);
  corpus = inject_errors(corpus, cfg.r_c, cfg.error_seed());
  const std::filesystem::path out = f.out.empty() ? cfg.out_dir / "corpus.jsonl" : std::filesystem::path(f.out);
  save_corpus(corpus, out);
  save_color_codes(ColorCodeFile{cfg.m, "truth", true_splits(corpus.meta)}, cfg.out_dir / "true_split.json");
  std::printf("wrote %zu records to %s\n", corpus.records.size(), out.c_str());
  return 0;
}

int cmd_detect(const Globals& g, const std::string& corpus_path, const std::string& split_path,
               const std::string& out_path) {
  auto cfg = effective_config(g);
  const auto corpus = load_corpus(corpus_path);
  const auto splits = splits_for(corpus, split_path);
  const auto res = detect_corpus(corpus, splits, DetectorConfig{cfg.z_star, corpus.meta.gamma});
  ensure_dir(cfg.out_dir);
  const std::filesystem::path out = out_path.empty() ? cfg.out_dir / "detections.jsonl" : std::filesystem::path(out_path);
  std::ofstream os(out);
  if (!os) throw IoError("cannot write " + out.string());
  for (std::size_t i = 0; i < res.size(); ++i) {
    const json line = {{"id", corpus.records[i].id},
                       {"green_count", res[i].green_count},
                       {"z", res[i].z_score},
                       {"watermarked", res[i].is_watermarked}};
    os << line.dump() << '\n';
  }
  const auto s = summarize_detection(corpus, res);
  std::printf("FPR %.6f (%zu/%zu)  TPR %.6f (%zu/%zu)\n", s.fpr(), s.false_positives, s.natural, s.tpr(),
              s.true_positives, s.watermarked);
  return 0;
}

int cmd_steal(const Globals& g, const std::string& corpus_path, const std::string& mode_flag,
              const std::string& split_path, const std::string& dump_lp, const std::string& out_path) {
  auto cfg = effective_config(g);
  if (!mode_flag.empty()) cfg.mode = attack_mode_from_string(mode_flag);
  if (!dump_lp.empty()) {
    ensure_dir(dump_lp);
    cfg.steal.dump_lp_dir = dump_lp;
  }
  const auto corpus = load_corpus(corpus_path);
  cfg.gamma = corpus.meta.gamma;
  cfg.m = corpus.meta.m;
  cfg.num_keys = corpus.meta.keys.size();
  cfg.validate();
  const auto sc = cfg.effective_steal();
  const bool as1 = cfg.mode == AttackMode::vanilla || cfg.mode == AttackMode::oracle || cfg.mode == AttackMode::pro;
  std::vector<ColorCode> splits;
  if (as1) splits = splits_for(corpus, split_path);  // detector API and Oracle knowledge
  const DetectorConfig det{cfg.z_star, cfg.gamma};
  const auto labels = as1 ? detector_labels(corpus, splits[0], det) : claimed_labels(corpus);
  const auto w = weights_for_labels(corpus, labels);
  StealResult r;
  switch (cfg.mode) {
    case AttackMode::vanilla: r = steal_vanilla(corpus, labels, w, sc); break;
    case AttackMode::oracle: r = steal_oracle(corpus, labels, oracle_counts(corpus, splits[0]), w, sc); break;
    case AttackMode::pro: r = steal_pro(corpus, labels, w, sc); break;
    case AttackMode::as2: r = steal_as2(corpus, labels, w, sc); break;
    case AttackMode::multikey: r = steal_multikey(corpus, labels, cfg.num_keys, sc); break;
    case AttackMode::freq: r = steal_frequency(corpus); break;
  }
  ensure_dir(cfg.out_dir);
  save_color_codes(ColorCodeFile{cfg.m, r.mode, r.stolen}, cfg.out_dir / "stolen.json");
  std::ofstream(cfg.out_dir / "solver_stages.csv") << solver_stages_csv(r);
  write_json(out_path.empty() ? cfg.out_dir / "steal_result.json" : std::filesystem::path(out_path),
             steal_result_to_json(r));
  for (const auto& d : r.stages)
    std::printf("[%s] %s obj %.6f nodes %ld lp_it %ld audit %s\n", d.name.c_str(), to_string(d.status), d.objective,
                d.nodes, d.lp_iterations, !d.has_solution ? "n/a" : d.audit_ok ? "ok" : "FAILED");
  for (const auto& s : r.relaxations) std::printf("relaxation: %s\n", s.c_str());
  std::printf("wrote %s\n", (cfg.out_dir / "stolen.json").c_str());
  return 0;
}

int cmd_remove(const Globals& g, const std::string& corpus_path, const std::string& stolen_path,
               const std::string& model_path, const std::string& strategy, const std::string& split_path,
               const std::string& out_path) {
  auto cfg = effective_config(g);
  if (!strategy.empty()) cfg.removal.strategy = removal_strategy_from_string(strategy);
  const auto corpus = load_corpus(corpus_path);
  const auto stolen = load_color_codes(stolen_path);
  if (stolen.lists.size() != 1) throw InputError("removal takes a single stolen list");
  const auto model = load_model(model_path);
  RemovalOptions opt = cfg.removal;
  opt.gumbel.seed = cfg.removal_seed();
  opt.threads = cfg.threads;
  const auto rr = remove_watermark(corpus, stolen.lists[0], model, opt);
  ensure_dir(cfg.out_dir);
  save_corpus(rr.rewritten, out_path.empty() ? cfg.out_dir / "corpus_removed.jsonl" : std::filesystem::path(out_path));
  std::printf("rewrote %zu records, %zu tokens replaced\n", rr.touched.size(), rr.replaced_tokens);
  const auto splits = splits_for(corpus, split_path);
  if (splits.size() == 1) {
    RemovalRow row;
    row.strategy = to_string(opt.strategy);
    row.metrics = evaluate_removal(corpus, rr.rewritten, splits[0], DetectorConfig{cfg.z_star, corpus.meta.gamma});
    row.rewritten = rr.touched.size();
    for (std::size_t k = 0; k < rr.touched.size(); ++k) {
      row.ppl_before += rr.ppl_before[k] / double(row.rewritten);
      row.ppl_after += rr.ppl_after[k] / double(row.rewritten);
      row.flagged += rr.flagged[k];
    }
    row.replaced_tokens = rr.replaced_tokens;
    std::ofstream(cfg.out_dir / "removal_table.csv") << removal_table_csv(row);
    const auto& m = row.metrics;
    write_json(cfg.out_dir / "removal_metrics.json",
               {{"strategy", row.strategy},       {"sentences", m.sentences},       {"g_avg_before", m.g_avg_before},
                {"g_avg_after", m.g_avg_after},   {"grr", m.grr},                   {"detected_before", m.detected_before},
                {"evaded", m.evaded},             {"evasion_rate", m.evasion_rate}, {"ppl_before", row.ppl_before},
                {"ppl_after", row.ppl_after},     {"flagged", row.flagged},         {"replaced_tokens", row.replaced_tokens}});
    std::printf("GRR %.6f  evasion %.6f  PPL %.3f -> %.3f\n", row.metrics.grr, row.metrics.evasion_rate,
                row.ppl_before, row.ppl_after);
  }
  return 0;
}

int cmd_evaluate(const Globals& g, const std::string& stolen_path, const std::string& split_path) {
  auto cfg = effective_config(g);
  const auto stolen = load_color_codes(stolen_path);
  const auto truth = load_color_codes(split_path);
  if (stolen.m != truth.m) throw InputError("stolen and true lists use different vocabularies");
  const auto rows = score_stolen(stolen.mode.empty() ? "stolen" : stolen.mode, stolen.lists, truth.lists);
  const auto csv = steal_table_csv(rows);
  ensure_dir(cfg.out_dir);
  std::ofstream(cfg.out_dir / "evaluation.csv") << csv;
  std::fputs(csv.c_str(), stdout);
  return 0;
}

int cmd_run(const Globals& g) {
  const auto rep = run_pipeline(effective_config(g));
  std::fputs(report_summary(rep).c_str(), stdout);
  return 0;
}

int cmd_solve_lp(const Globals& g, const std::string& lp_path, const std::string& out_path) {
  auto cfg = effective_config(g);
  const auto model = import_lp(lp_path);
  const auto sol = solve_mip(model, cfg.steal.solver);
  json j = {{"status", to_string(sol.status)}, {"has_solution", sol.has_solution}, {"objective", sol.objective},
            {"best_bound", sol.best_bound},    {"gap", sol.gap},                   {"nodes", sol.nodes},
            {"lp_iterations", sol.lp_iterations}};
  if (sol.has_solution) {
    json x = json::object();
    for (std::size_t v = 0; v < sol.x.size(); ++v) x[model.variables()[v].name] = sol.x[v];
    j["x"] = x;
    const auto audit = audit_assignment(model, sol.x, cfg.steal.solver.feasibility_tol);
    j["audit_ok"] = audit.ok;
  }
  if (out_path.empty())
    std::cout << j.dump(2) << '\n';
  else
    write_json(out_path, j);
  if (sol.status == MipStatus::infeasible) return kExitInfeasible;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Watermark stealing and removal experiments on a toy language model"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON experiment config");
  app.add_option("--seed", g.seed, "Master seed (overrides config)");
  app.add_option("--out-dir", g.out_dir, "Output directory (overrides config)");
  app.add_option("--threads", g.threads, "Worker threads for sampling, removal and the solver")->check(CLI::PositiveNumber);

  GenFlags gf;
  auto* gen = app.add_subcommand("gen-corpus", "Build the model and a labelled corpus");
  gen->add_option("--m", gf.m, "Vocabulary size");
  gen->add_option("--gamma", gf.gamma, "Green-list fraction");
  gen->add_option("--delta", gf.delta, "Green logit boost");
  gen->add_option("--keys", gf.keys, "Number of watermark keys");
  gen->add_option("--n", gf.n, "Records per class");
  gen->add_option("--len-min", gf.len_min, "Shortest sentence");
  gen->add_option("--len-max", gf.len_max, "Longest sentence");
  gen->add_option("--rc", gf.rc, "Fraction of claimed labels flipped per class");
  gen->add_option("--out", gf.out, "Corpus JSONL path (default: <out-dir>/corpus.jsonl)");

  std::string corpus_path, split_path;
  auto* det = app.add_subcommand("detect", "Run the z-test detector over a corpus");
  det->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  det->add_option("--split", split_path, "True split file (default: keys in the corpus header)");
  std::string out_path;
  det->add_option("--out", out_path, "Detections JSONL (default: <out-dir>/detections.jsonl)");

  std::string mode, dump_lp;
  auto* st = app.add_subcommand("steal", "Estimate the green list from a labelled corpus");
  st->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  st->add_option("--mode", mode, "vanilla|oracle|pro|as2|multikey|freq");
  st->add_option("--split", split_path, "True split used by the detector API (AS1 modes)");
  st->add_option("--dump-lp", dump_lp, "Directory for LP exports of every stage model");
  st->add_option("--out", out_path, "StealResult JSON (default: <out-dir>/steal_result.json)");

  std::string stolen_path, model_path, strategy;
  auto* rm = app.add_subcommand("remove", "Rewrite watermarked records using a stolen list");
  rm->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  rm->add_option("--stolen", stolen_path, "Stolen list file")->required();
  rm->add_option("--model", model_path, "Model file")->required();
  rm->add_option("--strategy", strategy, "greedy|gumbel");
  rm->add_option("--split", split_path, "True split for metrics (default: corpus header keys)");
  rm->add_option("--out", out_path, "Rewritten corpus (default: <out-dir>/corpus_removed.jsonl)");

  auto* ev = app.add_subcommand("evaluate", "Score stolen lists against the true split");
  ev->add_option("--stolen", stolen_path, "Stolen list file")->required();
  ev->add_option("--split", split_path, "True split file")->required();

  auto* run = app.add_subcommand("run", "Full pipeline: generate, detect, steal, remove, evaluate");

  std::string lp_path;
  auto* slp = app.add_subcommand("solve-lp", "Solve an LP/MIP file with the embedded solver");
  slp->add_option("lp", lp_path, "LP file")->required();
  slp->add_option("--out", out_path, "Solution JSON (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_corpus(g, gf);
    if (det->parsed()) return cmd_detect(g, corpus_path, split_path, out_path);
    if (st->parsed()) return cmd_steal(g, corpus_path, mode, split_path, dump_lp, out_path);
    if (rm->parsed()) return cmd_remove(g, corpus_path, stolen_path, model_path, strategy, split_path, out_path);
    if (ev->parsed()) return cmd_evaluate(g, stolen_path, split_path);
    if (run->parsed()) return cmd_run(g);
    if (slp->parsed()) return cmd_solve_lp(g, lp_path, out_path);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const InfeasibleError& e) {
    std::fprintf(stderr, "infeasible: %s\n", e.what());
    return kExitInfeasible;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kExitIo;
  } catch (const InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitIo;
  }
  return 0;
}
