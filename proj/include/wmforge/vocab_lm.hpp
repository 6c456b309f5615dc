#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wmforge/kernels.hpp"
#include "wmforge/types.hpp"

namespace wmforge {

struct Vocabulary {
  std::size_t size = 0;
  std::vector<std::string> labels;  // optional, empty or size() entries

  std::string label(TokenId t) const;
};

/// Knobs for the synthetic language model.
struct ModelConfig {
  double temperature = 1.0;
  /// Fraction of tokens whose unigram logit is spiked, modelling tokens that
  /// are frequent regardless of watermarking.
  double low_entropy_fraction = 0.05;
  double low_entropy_boost = 1.5;
  /// Std-dev of the base unigram logits.
  double unigram_scale = 0.5;
  /// Bigram logits are bigram_scale * <e_a, W e_b> + bigram_noise * N(0,1),
  /// so tokens with similar embeddings behave similarly in context.
  double bigram_scale = 1.0;
  double bigram_noise = 0.3;
  std::size_t synonym_k = 20;

  bool operator==(const ModelConfig&) const = default;
};

/// K nearest tokens by embedding cosine, per token, descending similarity.
class SynonymIndex {
 public:
  SynonymIndex() = default;
  explicit SynonymIndex(std::vector<std::vector<Neighbor>> lists) : lists_(std::move(lists)) {}

  std::span<const Neighbor> synonyms(TokenId t) const { return lists_.at(static_cast<std::size_t>(t)); }
  std::size_t size() const { return lists_.size(); }
  bool operator==(const SynonymIndex&) const = default;

 private:
  std::vector<std::vector<Neighbor>> lists_;
};

/// Unigram + bigram toy LM. Immutable after construction.
class ToyLanguageModel {
 public:
  ToyLanguageModel(std::uint64_t seed, ModelConfig config, std::vector<double> unigram, Matrix bigram,
                   Matrix embeddings, int threads = 1);

  std::uint64_t seed() const { return seed_; }
  std::size_t vocab_size() const { return unigram_.size(); }
  std::size_t embedding_dim() const { return embeddings_.cols; }
  const ModelConfig& config() const { return config_; }
  double temperature() const { return config_.temperature; }
  const std::vector<double>& unigram_logits() const { return unigram_; }
  const Matrix& bigram_logits() const { return bigram_; }
  const Matrix& embeddings() const { return embeddings_; }
  const SynonymIndex& synonyms() const { return synonyms_; }
  Vocabulary vocabulary() const { return Vocabulary{vocab_size(), {}}; }

  /// Raw (un-tempered) logits for the next token after `prev`.
  void logits(std::optional<TokenId> prev, std::span<double> out) const;

 private:
  std::uint64_t seed_;
  ModelConfig config_;
  std::vector<double> unigram_;
  Matrix bigram_;
  Matrix embeddings_;
  SynonymIndex synonyms_;
};

/// Deterministic in (seed, m, d, config). Throws ConfigError on m < 2 or d < 2.
ToyLanguageModel build_model(std::uint64_t seed, std::size_t m, std::size_t d, const ModelConfig& config = {},
                             int threads = 1);

/// softmax((unigram + bigram[prev] + bias) / temperature).
std::vector<double> next_token_distribution(const ToyLanguageModel& model, std::optional<TokenId> prev,
                                            std::span<const double> logit_bias);
void next_token_distribution(const ToyLanguageModel& model, std::optional<TokenId> prev,
                             std::span<const double> logit_bias, std::span<double> out);

/// log-softmax of `logits / temperature` into `out`.
void log_softmax(std::span<const double> logits, double temperature, std::span<double> out);

/// Sum of log P(token_t | token_{t-1}) under the unbiased model; the first
/// token is scored with no previous token.
double sentence_log_likelihood(const ToyLanguageModel& model, std::span<const TokenId> tokens);

/// Draws one index from `probs` using a uniform in [0,1).
TokenId sample_index(std::span<const double> probs, double u);

/// Persistence. `.json` selects JSON, anything else the binary format.
void save_model(const ToyLanguageModel& model, const std::filesystem::path& path);
ToyLanguageModel load_model(const std::filesystem::path& path);
std::string model_to_json(const ToyLanguageModel& model);
std::vector<std::uint8_t> model_to_bytes(const ToyLanguageModel& model);

}  // namespace wmforge
