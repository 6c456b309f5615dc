#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wmforge/corpus.hpp"
#include "wmforge/detector.hpp"
#include "wmforge/types.hpp"
#include "wmforge/vocab_lm.hpp"

namespace wmforge {

/// Per token: synonyms outside the stolen green list, most similar first.
/// Empty for tokens not in the stolen green list.
struct CandidateSet {
  std::vector<std::vector<TokenId>> candidates;

  std::span<const TokenId> of(TokenId t) const { return candidates.at(static_cast<std::size_t>(t)); }
};

CandidateSet build_candidates(const SynonymIndex& synonyms, const ColorCode& stolen);

struct SentenceRewrite {
  std::vector<TokenId> tokens;
  std::size_t replaced = 0;
  std::size_t stuck = 0;  // stolen-green tokens with no candidate, left as is
  bool flagged() const { return stuck > 0; }
};

SentenceRewrite greedy_remove(std::span<const TokenId> tokens, const ColorCode& stolen, const CandidateSet& cands);

struct GumbelConfig {
  double tau_start = 1.0;
  double tau_end = 0.1;
  double anneal = 0.9;  // tau multiplier per epoch
  double step = 0.05;
  int epochs = 200;
  /// Sharpness of the embedding read-back softmax in the relaxed scorer.
  double kappa = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Differentiable stand-in for sentence NLL. A soft position with relaxed
/// embedding e and candidates c_1..c_K is read back as the distribution
/// q_k = softmax_k(<u_{c_k}, e> / kappa) over its candidates (u = unit-norm
/// embeddings), and the sentence score is the expected bigram
/// log-likelihood under those distributions.
class RelaxedScorer {
 public:
  RelaxedScorer(const ToyLanguageModel& model, double kappa);

  std::size_t vocab_size() const { return m_; }
  std::size_t dim() const { return d_; }
  double kappa() const { return kappa_; }
  const Matrix& unit_embeddings() const { return unit_; }
  double log_prob(TokenId prev, TokenId next) const { return logp_(static_cast<std::size_t>(prev), static_cast<std::size_t>(next)); }
  double log_prob_first(TokenId t) const { return logp0_[static_cast<std::size_t>(t)]; }

  /// q_k = softmax_k(<u_{c_k}, e> / kappa).
  void read_back(std::span<const double> e, std::span<const TokenId> cands, std::span<double> q) const;

 private:
  std::size_t m_ = 0;
  std::size_t d_ = 0;
  double kappa_ = 0.1;
  Matrix unit_;
  Matrix logp_;
  std::vector<double> logp0_;
};

/// One sentence with a candidate list at each soft position.
struct RelaxedSentence {
  std::vector<TokenId> tokens;
  std::vector<std::size_t> positions;              // ascending
  std::vector<std::vector<TokenId>> candidates;    // per position, nonempty
};

/// Relaxed NLL at logits x (per position, per candidate) with Gumbel noise
/// `noise` (same shape) and temperature tau; selection weights are
/// softmax((x + noise) / tau). Fills `grad` (same shape) when non-null.
double relaxed_nll(const RelaxedScorer& scorer, const RelaxedSentence& s, const std::vector<std::vector<double>>& x,
                   const std::vector<std::vector<double>>& noise, double tau,
                   std::vector<std::vector<double>>* grad = nullptr);

/// softmax((x + noise) / tau).
std::vector<double> gumbel_softmax(std::span<const double> x, std::span<const double> noise, double tau);

/// Positions holding a stolen-green token with at least one candidate.
RelaxedSentence make_relaxed(std::span<const TokenId> tokens, const ColorCode& stolen, const CandidateSet& cands);

/// Optimizes candidate logits by gradient descent on the relaxed NLL, then
/// takes the noise-free argmax (lowest index on ties) at each position.
SentenceRewrite gumbel_remove(std::span<const TokenId> tokens, const ColorCode& stolen, const CandidateSet& cands,
                              const RelaxedScorer& scorer, const GumbelConfig& config, std::uint64_t stream);

/// exp(-log-likelihood / length). Throws InputError on an empty sequence.
double perplexity(const ToyLanguageModel& model, std::span<const TokenId> tokens);

enum class RemovalStrategy { greedy, gumbel };
std::string to_string(RemovalStrategy s);
RemovalStrategy removal_strategy_from_string(const std::string& s);

struct RemovalOptions {
  RemovalStrategy strategy = RemovalStrategy::greedy;
  GumbelConfig gumbel;
  int threads = 1;
};

struct RemovalResult {
  Corpus rewritten;                    // same records, rewritten tokens and counts
  std::vector<std::size_t> touched;    // indices of rewritten records
  std::vector<double> ppl_before;      // per touched record
  std::vector<double> ppl_after;
  std::vector<std::uint8_t> flagged;   // per touched record
  std::size_t replaced_tokens = 0;
};

/// Rewrites every record claimed watermarked. Records need token sequences.
/// Sentences are processed independently; the result does not depend on
/// the thread count.
RemovalResult remove_watermark(const Corpus& corpus, const ColorCode& stolen, const ToyLanguageModel& model,
                               const RemovalOptions& options);

struct RemovalMetrics {
  std::size_t sentences = 0;        // truly watermarked records compared
  double g_avg_before = 0.0;
  double g_avg_after = 0.0;
  double grr = 0.0;                 // g_avg_after / g_avg_before
  std::size_t detected_before = 0;
  std::size_t evaded = 0;
  double evasion_rate = 0.0;        // evaded / detected_before
};

/// Compares truly watermarked records of two aligned corpora under the true split.
RemovalMetrics evaluate_removal(const Corpus& before, const Corpus& after, const ColorCode& truth,
                                const DetectorConfig& detector);

}  // namespace wmforge
