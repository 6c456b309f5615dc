#include "wmforge/removal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wmforge/errors.hpp"
#include "wmforge/rng.hpp"

namespace wmforge {

CandidateSet build_candidates(const SynonymIndex& synonyms, const ColorCode& stolen) {
  if (synonyms.size() != stolen.size()) throw InputError("synonym index and stolen split differ in vocabulary size");
  CandidateSet cs;
  cs.candidates.resize(stolen.size());
  for (std::size_t j = 0; j < stolen.size(); ++j) {
    if (!stolen[j]) continue;
    for (const auto& nb : synonyms.synonyms(static_cast<TokenId>(j))) {
      if (!stolen[static_cast<std::size_t>(nb.token)]) cs.candidates[j].push_back(nb.token);
    }
  }
  return cs;
}

namespace {

bool is_stolen(const ColorCode& stolen, TokenId t) {
  const auto j = static_cast<std::size_t>(t);
  if (j >= stolen.size()) throw InputError("token outside vocabulary");
  return stolen[j] != 0;
}

}  // namespace

SentenceRewrite greedy_remove(std::span<const TokenId> tokens, const ColorCode& stolen, const CandidateSet& cands) {
  SentenceRewrite out;
  out.tokens.assign(tokens.begin(), tokens.end());
  for (auto& t : out.tokens) {
    if (!is_stolen(stolen, t)) continue;
    const auto c = cands.of(t);
    if (c.empty()) {
      ++out.stuck;
      continue;
    }
    t = c.front();
    ++out.replaced;
  }
  return out;
}

void GumbelConfig::validate() const {
  if (!(tau_start > 0.0 && tau_end > 0.0 && tau_end <= tau_start)) throw ConfigError("need 0 < tau_end <= tau_start");
  if (!(anneal > 0.0 && anneal <= 1.0)) throw ConfigError("anneal must lie in (0, 1]");
  if (!(step > 0.0)) throw ConfigError("step must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (!(kappa > 0.0)) throw ConfigError("kappa must be positive");
}

RelaxedScorer::RelaxedScorer(const ToyLanguageModel& model, double kappa)
    : m_(model.vocab_size()), d_(model.embedding_dim()), kappa_(kappa) {
  if (!(kappa > 0.0)) throw ConfigError("kappa must be positive");
  const Matrix& e = model.embeddings();
  unit_ = Matrix(m_, d_);
  for (std::size_t i = 0; i < m_; ++i) {
    double n = 0.0;
    for (std::size_t k = 0; k < d_; ++k) n += e(i, k) * e(i, k);
    n = std::sqrt(n);
    for (std::size_t k = 0; k < d_; ++k) unit_(i, k) = e(i, k) / n;
  }
  logp_ = Matrix(m_, m_);
  std::vector<double> logits(m_);
  for (std::size_t a = 0; a < m_; ++a) {
    model.logits(static_cast<TokenId>(a), logits);
    log_softmax(logits, model.temperature(), std::span<double>(logp_.row(a), m_));
  }
  logp0_.resize(m_);
  model.logits(std::nullopt, logits);
  log_softmax(logits, model.temperature(), logp0_);
}

void RelaxedScorer::read_back(std::span<const double> e, std::span<const TokenId> cands, std::span<double> q) const {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cands.size(); ++k) {
    const double* u = unit_.row(static_cast<std::size_t>(cands[k]));
    double z = 0.0;
    for (std::size_t c = 0; c < d_; ++c) z += u[c] * e[c];
    q[k] = z / kappa_;
    mx = std::max(mx, q[k]);
  }
  double s = 0.0;
  for (std::size_t k = 0; k < cands.size(); ++k) {
    q[k] = std::exp(q[k] - mx);
    s += q[k];
  }
  for (std::size_t k = 0; k < cands.size(); ++k) q[k] /= s;
}

std::vector<double> gumbel_softmax(std::span<const double> x, std::span<const double> noise, double tau) {
  std::vector<double> p(x.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < x.size(); ++k) {
    p[k] = (x[k] + noise[k]) / tau;
    mx = std::max(mx, p[k]);
  }
  double s = 0.0;
  for (auto& v : p) {
    v = std::exp(v - mx);
    s += v;
  }
  for (auto& v : p) v /= s;
  return p;
}

double relaxed_nll(const RelaxedScorer& scorer, const RelaxedSentence& s, const std::vector<std::vector<double>>& x,
                   const std::vector<std::vector<double>>& noise, double tau, std::vector<std::vector<double>>* grad) {
  const std::size_t d = scorer.dim();
  const std::size_t n_soft = s.positions.size();
  if (x.size() != n_soft || noise.size() != n_soft || s.candidates.size() != n_soft) {
    throw InputError("relaxed sentence shape mismatch");
  }
  const Matrix& U = scorer.unit_embeddings();
  std::vector<long> soft(s.tokens.size(), -1);
  for (std::size_t j = 0; j < n_soft; ++j) soft.at(s.positions[j]) = static_cast<long>(j);

  // Soft positions carry a distribution q over their candidates; fixed ones
  // are a single token with weight 1.
  std::vector<std::vector<double>> pi(n_soft), q(n_soft), gq(n_soft);
  std::vector<double> e(d);
  for (std::size_t j = 0; j < n_soft; ++j) {
    const auto& cj = s.candidates[j];
    if (x[j].size() != cj.size() || noise[j].size() != cj.size()) throw InputError("relaxed sentence shape mismatch");
    pi[j] = gumbel_softmax(x[j], noise[j], tau);
    std::fill(e.begin(), e.end(), 0.0);
    for (std::size_t k = 0; k < cj.size(); ++k) {
      const double* u = U.row(static_cast<std::size_t>(cj[k]));
      for (std::size_t c = 0; c < d; ++c) e[c] += pi[j][k] * u[c];
    }
    q[j].resize(cj.size());
    scorer.read_back(e, cj, q[j]);
    gq[j].assign(cj.size(), 0.0);
  }
  const std::vector<double> unit_weight{1.0};
  auto support = [&](std::size_t t, TokenId& fixed) -> std::span<const TokenId> {
    if (soft[t] >= 0) return s.candidates[static_cast<std::size_t>(soft[t])];
    fixed = s.tokens[t];
    return {&fixed, 1};
  };
  auto weights = [&](std::size_t t) -> std::span<const double> {
    return soft[t] >= 0 ? std::span<const double>(q[static_cast<std::size_t>(soft[t])]) : unit_weight;
  };

  double nll = 0.0;
  for (std::size_t t = 0; t < s.tokens.size(); ++t) {
    TokenId fc = 0;
    const auto cur = support(t, fc);
    const auto wc = weights(t);
    if (t == 0) {
      for (std::size_t b = 0; b < cur.size(); ++b) {
        const double lp = scorer.log_prob_first(cur[b]);
        nll -= wc[b] * lp;
        if (soft[t] >= 0) gq[static_cast<std::size_t>(soft[t])][b] -= lp;
      }
      continue;
    }
    TokenId fp = 0;
    const auto prev = support(t - 1, fp);
    const auto wp = weights(t - 1);
    for (std::size_t a = 0; a < prev.size(); ++a) {
      for (std::size_t b = 0; b < cur.size(); ++b) {
        const double lp = scorer.log_prob(prev[a], cur[b]);
        nll -= wp[a] * wc[b] * lp;
        if (soft[t - 1] >= 0) gq[static_cast<std::size_t>(soft[t - 1])][a] -= wc[b] * lp;
        if (soft[t] >= 0) gq[static_cast<std::size_t>(soft[t])][b] -= wp[a] * lp;
      }
    }
  }
  if (!grad) return nll;

  grad->assign(n_soft, {});
  std::vector<double> ge(d);
  for (std::size_t j = 0; j < n_soft; ++j) {
    // Back through q = softmax(z), z_k = <u_{c_k}, e> / kappa, e = sum_k pi_k u_{c_k}.
    const auto& cj = s.candidates[j];
    const std::size_t nc = cj.size();
    double qg = 0.0;
    for (std::size_t k = 0; k < nc; ++k) qg += q[j][k] * gq[j][k];
    std::fill(ge.begin(), ge.end(), 0.0);
    for (std::size_t k = 0; k < nc; ++k) {
      const double gz = q[j][k] * (gq[j][k] - qg) / scorer.kappa();
      const double* u = U.row(static_cast<std::size_t>(cj[k]));
      for (std::size_t c = 0; c < d; ++c) ge[c] += gz * u[c];
    }
    std::vector<double> gpi(nc);
    double pg = 0.0;
    for (std::size_t k = 0; k < nc; ++k) {
      const double* u = U.row(static_cast<std::size_t>(cj[k]));
      double g = 0.0;
      for (std::size_t c = 0; c < d; ++c) g += u[c] * ge[c];
      gpi[k] = g;
      pg += pi[j][k] * g;
    }
    auto& gx = (*grad)[j];
    gx.resize(nc);
    for (std::size_t k = 0; k < nc; ++k) gx[k] = pi[j][k] * (gpi[k] - pg) / tau;
  }
  return nll;
}

RelaxedSentence make_relaxed(std::span<const TokenId> tokens, const ColorCode& stolen, const CandidateSet& cands) {
  RelaxedSentence rs;
  rs.tokens.assign(tokens.begin(), tokens.end());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (!is_stolen(stolen, tokens[t])) continue;
    const auto c = cands.of(tokens[t]);
    if (c.empty()) continue;
    rs.positions.push_back(t);
    rs.candidates.emplace_back(c.begin(), c.end());
  }
  return rs;
}

SentenceRewrite gumbel_remove(std::span<const TokenId> tokens, const ColorCode& stolen, const CandidateSet& cands,
                              const RelaxedScorer& scorer, const GumbelConfig& config, std::uint64_t stream) {
  config.validate();
  SentenceRewrite out;
  out.tokens.assign(tokens.begin(), tokens.end());
  for (const auto t : tokens) {
    if (is_stolen(stolen, t) && cands.of(t).empty()) ++out.stuck;
  }
  const auto rs = make_relaxed(tokens, stolen, cands);
  const std::size_t n = rs.positions.size();
  if (n == 0) return out;

  std::vector<std::vector<double>> x(n), noise(n), grad;
  for (std::size_t j = 0; j < n; ++j) {
    x[j].assign(rs.candidates[j].size(), 0.0);
    noise[j].assign(rs.candidates[j].size(), 0.0);
  }
  Rng rng(stream_seed(config.seed, stream));
  double tau = config.tau_start;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (auto& row : noise) {
      for (auto& v : row) v = rng.gumbel();
    }
    relaxed_nll(scorer, rs, x, noise, tau, &grad);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < x[j].size(); ++k) x[j][k] -= config.step * grad[j][k];
    }
    tau = std::max(config.tau_end, tau * config.anneal);
  }
  for (std::size_t j = 0; j < n; ++j) {
    const auto best = std::max_element(x[j].begin(), x[j].end()) - x[j].begin();
    out.tokens[rs.positions[j]] = rs.candidates[j][static_cast<std::size_t>(best)];
    ++out.replaced;
  }
  return out;
}

double perplexity(const ToyLanguageModel& model, std::span<const TokenId> tokens) {
  if (tokens.empty()) throw InputError("perplexity of an empty sequence");
  return std::exp(-sentence_log_likelihood(model, tokens) / static_cast<double>(tokens.size()));
}

std::string to_string(RemovalStrategy s) { return s == RemovalStrategy::greedy ? "greedy" : "gumbel"; }

RemovalStrategy removal_strategy_from_string(const std::string& s) {
  if (s == "greedy") return RemovalStrategy::greedy;
  if (s == "gumbel") return RemovalStrategy::gumbel;
  throw ConfigError("unknown removal strategy '" + s + "'");
}

RemovalResult remove_watermark(const Corpus& corpus, const ColorCode& stolen, const ToyLanguageModel& model,
                               const RemovalOptions& options) {
  if (stolen.size() != corpus.meta.m || model.vocab_size() != corpus.meta.m) {
    throw InputError("corpus, model and stolen split differ in vocabulary size");
  }
  if (options.strategy == RemovalStrategy::gumbel) options.gumbel.validate();
  RemovalResult res;
  res.rewritten = corpus;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& r = corpus.records[i];
    if (r.claimed != Label::watermarked) continue;
    if (!r.tokens || r.tokens->empty()) throw InputError("record " + std::to_string(r.id) + " has no token sequence");
    res.touched.push_back(i);
  }
  const auto cands = build_candidates(model.synonyms(), stolen);
  std::optional<RelaxedScorer> scorer;
  if (options.strategy == RemovalStrategy::gumbel) scorer.emplace(model, options.gumbel.kappa);

  const std::size_t n = res.touched.size();
  std::vector<SentenceRewrite> out(n);
  res.ppl_before.resize(n);
  res.ppl_after.resize(n);
  const long count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, options.threads))
  for (long k = 0; k < count; ++k) {
    const auto& r = corpus.records[res.touched[static_cast<std::size_t>(k)]];
    const auto& toks = *r.tokens;
    out[k] = options.strategy == RemovalStrategy::greedy
                 ? greedy_remove(toks, stolen, cands)
                 : gumbel_remove(toks, stolen, cands, *scorer, options.gumbel, r.id);
    res.ppl_before[k] = perplexity(model, toks);
    res.ppl_after[k] = perplexity(model, out[k].tokens);
  }
  for (std::size_t k = 0; k < n; ++k) {
    auto& rec = res.rewritten.records[res.touched[k]];
    rec.counts = counts_from_tokens(out[k].tokens);
    rec.tokens = std::move(out[k].tokens);
    res.flagged.push_back(out[k].flagged() ? 1 : 0);
    res.replaced_tokens += out[k].replaced;
  }
  return res;
}

RemovalMetrics evaluate_removal(const Corpus& before, const Corpus& after, const ColorCode& truth,
                                const DetectorConfig& detector) {
  if (before.records.size() != after.records.size()) throw InputError("corpora are not aligned");
  RemovalMetrics m;
  double gb = 0.0, ga = 0.0;
  for (std::size_t i = 0; i < before.records.size(); ++i) {
    const auto& b = before.records[i];
    const auto& a = after.records[i];
    if (b.id != a.id) throw InputError("corpora are not aligned");
    if (b.truth != Label::watermarked) continue;
    ++m.sentences;
    gb += static_cast<double>(green_count(b.counts, truth));
    ga += static_cast<double>(green_count(a.counts, truth));
    if (detect(b.counts, b.length, truth, detector).is_watermarked) {
      ++m.detected_before;
      if (!detect(a.counts, a.length, truth, detector).is_watermarked) ++m.evaded;
    }
  }
  if (m.sentences > 0) {
    m.g_avg_before = gb / static_cast<double>(m.sentences);
    m.g_avg_after = ga / static_cast<double>(m.sentences);
  }
  m.grr = gb > 0.0 ? ga / gb : 0.0;
  m.evasion_rate = m.detected_before > 0 ? static_cast<double>(m.evaded) / static_cast<double>(m.detected_before) : 0.0;
  return m;
}

}  // namespace wmforge
