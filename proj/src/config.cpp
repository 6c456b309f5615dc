#include "wmforge/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "wmforge/errors.hpp"
#include "wmforge/rng.hpp"

namespace wmforge {

using nlohmann::json;

std::string to_string(AttackMode m) {
  switch (m) {
    case AttackMode::vanilla: return "vanilla";
    case AttackMode::oracle: return "oracle";
    case AttackMode::pro: return "pro";
    case AttackMode::as2: return "as2";
    case AttackMode::multikey: return "multikey";
    case AttackMode::freq: return "freq";
  }
  return "?";
}

AttackMode attack_mode_from_string(const std::string& s) {
  for (auto m : {AttackMode::vanilla, AttackMode::oracle, AttackMode::pro, AttackMode::as2, AttackMode::multikey,
                 AttackMode::freq})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown attack mode '" + s + "' (vanilla|oracle|pro|as2|multikey|freq)");
}

void ExperimentConfig::validate() const {
  if (m < 2) throw ConfigError("m must be >= 2");
  if (d < 2) throw ConfigError("d must be >= 2");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(delta >= 0.0)) throw ConfigError("delta must be >= 0");
  if (num_keys < 1 || num_keys > 8) throw ConfigError("num_keys must lie in [1, 8]");
  if (len_min < 1 || len_max < len_min) throw ConfigError("need 1 <= len_min <= len_max");
  if (n_watermarked + n_natural == 0) throw ConfigError("corpus is empty");
  if (!(r_c >= 0.0 && r_c < 1.0)) throw ConfigError("r_c must lie in [0, 1)");
  if (!(z_star > 0.0)) throw ConfigError("z_star must be > 0");
  if (mode == AttackMode::multikey && num_keys < 2) throw ConfigError("multikey mode needs num_keys >= 2");
  if (mode != AttackMode::multikey && mode != AttackMode::freq && num_keys != 1)
    throw ConfigError("mode " + to_string(mode) + " needs num_keys = 1");
  steal.validate();
  steal.solver.validate();
  removal.gumbel.validate();
}

std::uint64_t ExperimentConfig::model_seed() const { return stream_seed(seed, 1); }
std::uint64_t ExperimentConfig::corpus_seed() const { return stream_seed(seed, 2); }
std::uint64_t ExperimentConfig::error_seed() const { return stream_seed(seed, 3); }
std::uint64_t ExperimentConfig::steal_seed() const { return stream_seed(seed, 4); }
std::uint64_t ExperimentConfig::removal_seed() const { return stream_seed(seed, 5); }

std::vector<WatermarkKey> ExperimentConfig::keys() const {
  std::vector<WatermarkKey> out;
  for (std::size_t k = 0; k < num_keys; ++k) out.push_back(WatermarkKey{stream_seed(seed, 100 + k)});
  return out;
}

StealConfig ExperimentConfig::effective_steal() const {
  StealConfig s = steal;
  s.seed = steal_seed();
  if (mode == AttackMode::vanilla || mode == AttackMode::oracle || mode == AttackMode::pro) {
    s.gamma = gamma;
    s.z_star = z_star;
  } else {
    s.gamma.reset();
    s.z_star.reset();
  }
  return s;
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.steal.solver.lp_iteration_limit = 20000;
  c.steal.solver.honor_env = false;
  return c;
}

namespace {

/// Reads fields from one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config section '" + path_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + path_ + k + "'");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + path_ + key + "': " + e.what());
    }
  }
  template <class T>
  void get(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_null()) {
      out.reset();
      return;
    }
    T v{};
    get(key, v);
    out = v;
  }
  const json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }
  std::string path(const char* key) const { return path_ + key + "."; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["out_dir"] = c.out_dir.string();
  j["model"] = {{"m", c.m},
                {"d", c.d},
                {"temperature", c.model.temperature},
                {"low_entropy_fraction", c.model.low_entropy_fraction},
                {"low_entropy_boost", c.model.low_entropy_boost},
                {"unigram_scale", c.model.unigram_scale},
                {"bigram_scale", c.model.bigram_scale},
                {"bigram_noise", c.model.bigram_noise},
                {"synonym_k", c.model.synonym_k}};
  j["watermark"] = {{"gamma", c.gamma}, {"delta", c.delta}, {"num_keys", c.num_keys}};
  j["corpus"] = {{"n_watermarked", c.n_watermarked},
                 {"n_natural", c.n_natural},
                 {"len_min", c.len_min},
                 {"len_max", c.len_max},
                 {"r_c", c.r_c}};
  j["detector"] = {{"z_star", c.z_star}};
  const auto& s = c.steal;
  j["attack"] = {{"mode", to_string(c.mode)},
                 {"beta_hat", s.beta_hat},
                 {"beta_tilde", s.beta_tilde},
                 {"p_l", s.p_l},
                 {"p_u", s.p_u},
                 {"eta", opt(s.eta)},
                 {"epsilon", s.epsilon},
                 {"use_separation", s.use_separation},
                 {"mu", s.mu},
                 {"max_iterations", s.max_iterations}};
  const auto& v = s.solver;
  j["solver"] = {{"mip_gap", v.mip_gap},
                 {"time_limit_seconds", v.time_limit_seconds},
                 {"feasibility_tol", v.feasibility_tol},
                 {"integrality_tol", v.integrality_tol},
                 {"node_limit", v.node_limit},
                 {"lp_iteration_limit", v.lp_iteration_limit},
                 {"threads", v.threads},
                 {"heuristic_every", v.heuristic_every},
                 {"honor_env", v.honor_env}};
  const auto& g = c.removal.gumbel;
  j["removal"] = {{"strategy", to_string(c.removal.strategy)},
                  {"tau_start", g.tau_start},
                  {"tau_end", g.tau_end},
                  {"anneal", g.anneal},
                  {"step", g.step},
                  {"epochs", g.epochs},
                  {"kappa", g.kappa}};
  return j;
}

ExperimentConfig config_from_json(const json& j, const ExperimentConfig& base) {
  ExperimentConfig c = base;
  {
    Section root(j, "");
    root.get("seed", c.seed);
    root.get("threads", c.threads);
    std::string out = c.out_dir.string();
    root.get("out_dir", out);
    c.out_dir = out;
    if (auto* p = root.sub("model")) {
      Section s(*p, root.path("model"));
      s.get("m", c.m);
      s.get("d", c.d);
      s.get("temperature", c.model.temperature);
      s.get("low_entropy_fraction", c.model.low_entropy_fraction);
      s.get("low_entropy_boost", c.model.low_entropy_boost);
      s.get("unigram_scale", c.model.unigram_scale);
      s.get("bigram_scale", c.model.bigram_scale);
      s.get("bigram_noise", c.model.bigram_noise);
      s.get("synonym_k", c.model.synonym_k);
    }
    if (auto* p = root.sub("watermark")) {
      Section s(*p, root.path("watermark"));
      s.get("gamma", c.gamma);
      s.get("delta", c.delta);
      s.get("num_keys", c.num_keys);
    }
    if (auto* p = root.sub("corpus")) {
      Section s(*p, root.path("corpus"));
      s.get("n_watermarked", c.n_watermarked);
      s.get("n_natural", c.n_natural);
      s.get("len_min", c.len_min);
      s.get("len_max", c.len_max);
      s.get("r_c", c.r_c);
    }
    if (auto* p = root.sub("detector")) {
      Section s(*p, root.path("detector"));
      s.get("z_star", c.z_star);
    }
    if (auto* p = root.sub("attack")) {
      Section s(*p, root.path("attack"));
      std::string mode = to_string(c.mode);
      s.get("mode", mode);
      c.mode = attack_mode_from_string(mode);
      s.get("beta_hat", c.steal.beta_hat);
      s.get("beta_tilde", c.steal.beta_tilde);
      s.get("p_l", c.steal.p_l);
      s.get("p_u", c.steal.p_u);
      s.get("eta", c.steal.eta);
      s.get("epsilon", c.steal.epsilon);
      s.get("use_separation", c.steal.use_separation);
      s.get("mu", c.steal.mu);
      s.get("max_iterations", c.steal.max_iterations);
    }
    if (auto* p = root.sub("solver")) {
      Section s(*p, root.path("solver"));
      auto& v = c.steal.solver;
      s.get("mip_gap", v.mip_gap);
      s.get("time_limit_seconds", v.time_limit_seconds);
      s.get("feasibility_tol", v.feasibility_tol);
      s.get("integrality_tol", v.integrality_tol);
      s.get("node_limit", v.node_limit);
      s.get("lp_iteration_limit", v.lp_iteration_limit);
      s.get("threads", v.threads);
      s.get("heuristic_every", v.heuristic_every);
      s.get("honor_env", v.honor_env);
    }
    if (auto* p = root.sub("removal")) {
      Section s(*p, root.path("removal"));
      std::string strat = to_string(c.removal.strategy);
      s.get("strategy", strat);
      c.removal.strategy = removal_strategy_from_string(strat);
      auto& g = c.removal.gumbel;
      s.get("tau_start", g.tau_start);
      s.get("tau_end", g.tau_end);
      s.get("anneal", g.anneal);
      s.get("step", g.step);
      s.get("epochs", g.epochs);
      s.get("kappa", g.kappa);
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(cfg).dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const ExperimentConfig& cfg) { return fnv1a_hex(to_json(cfg).dump()); }

}  // namespace wmforge
