#pragma once

// Small hand-built models and corpora shared by the unit tests.

#include <cmath>
#include <vector>

#include "wmforge/corpus.hpp"
#include "wmforge/rng.hpp"
#include "wmforge/vocab_lm.hpp"

namespace fixture {

using namespace wmforge;

/// All logits zero; embeddings random so synonyms exist.
inline ToyLanguageModel uniform_model(std::size_t m, std::size_t d = 4, std::uint64_t seed = 3) {
  Rng rng(seed);
  Matrix emb(m, d);
  for (auto& v : emb.data) v = rng.normal();
  ModelConfig cfg;
  cfg.synonym_k = std::min<std::size_t>(20, m - 1);
  return ToyLanguageModel(seed, cfg, std::vector<double>(m, 0.0), Matrix(m, m, 0.0), emb);
}

inline ToyLanguageModel random_model(std::size_t m, std::uint64_t seed, std::size_t d = 4) {
  Rng rng(seed);
  std::vector<double> uni(m);
  for (auto& v : uni) v = rng.normal();
  Matrix bi(m, m), emb(m, d);
  for (auto& v : bi.data) v = rng.normal();
  for (auto& v : emb.data) v = rng.normal();
  ModelConfig cfg;
  cfg.synonym_k = std::min<std::size_t>(20, m - 1);
  return ToyLanguageModel(seed, cfg, uni, bi, emb);
}

inline SentenceRecord record(std::uint64_t id, const std::vector<TokenId>& tokens, Label label, bool keep = false) {
  SentenceRecord r;
  r.id = id;
  r.counts = counts_from_tokens(tokens);
  r.length = static_cast<long>(tokens.size());
  r.claimed = label;
  r.truth = label;
  if (keep) r.tokens = tokens;
  return r;
}

inline Corpus make_corpus(std::size_t m, const std::vector<SentenceRecord>& recs, double gamma = 0.25) {
  Corpus c;
  c.meta.m = m;
  c.meta.gamma = gamma;
  for (const auto& r : recs) {
    c.records.push_back(r);
    (r.truth == Label::watermarked ? c.meta.n_watermarked : c.meta.n_natural)++;
  }
  return c;
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

}  // namespace fixture
