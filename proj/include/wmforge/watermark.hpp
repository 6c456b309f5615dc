#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wmforge/rng.hpp"
#include "wmforge/types.hpp"
#include "wmforge/vocab_lm.hpp"

namespace wmforge {

struct WatermarkKey {
  std::uint64_t value = 0;
  bool operator==(const WatermarkKey&) const = default;
};

/// Key-seeded partition of the vocabulary. Exactly floor(gamma * m) tokens
/// are green.
struct GreenRedSplit {
  WatermarkKey key;
  double gamma = 0.5;
  ColorCode color;

  std::size_t vocab_size() const { return color.size(); }
  std::size_t green_count() const;
  std::vector<TokenId> green_tokens() const;
  bool is_green(TokenId t) const { return color[static_cast<std::size_t>(t)] != 0; }
};

struct WatermarkParams {
  double delta = 2.0;
  double gamma = 0.25;
  std::vector<WatermarkKey> keys{WatermarkKey{1}};
};

struct LengthRange {
  std::size_t min = 200;
  std::size_t max = 200;
};

/// floor(gamma * m), robust to representation error in gamma * m.
std::size_t green_list_size(double gamma, std::size_t m);

/// Seeded Fisher-Yates permutation of 0..m-1; the first floor(gamma m)
/// tokens are green. Throws ConfigError unless 0 < gamma < 1.
GreenRedSplit derive_split(WatermarkKey key, double gamma, std::size_t m);

/// Samples `length` tokens with `bias` added to the logits at every step.
std::vector<TokenId> sample_sentence(const ToyLanguageModel& model, std::size_t length, Rng& rng,
                                     std::span<const double> bias);
std::vector<TokenId> sample_natural_sentence(const ToyLanguageModel& model, std::size_t length, Rng& rng);

/// Green tokens get +delta on their logits at every step.
std::vector<TokenId> sample_watermarked_sentence(const ToyLanguageModel& model, const GreenRedSplit& split,
                                                 double delta, std::size_t length, Rng& rng);

struct KeyedSentence {
  std::vector<TokenId> tokens;
  std::size_t key_index = 0;  // ground truth; evaluation only
};

/// n sentences, each watermarked under one key drawn uniformly from
/// params.keys. Sentence i uses the RNG stream stream_seed(seed, i).
std::vector<KeyedSentence> sample_multikey_corpus(const ToyLanguageModel& model, const WatermarkParams& params,
                                                  std::size_t n, LengthRange lengths, std::uint64_t seed,
                                                  int threads = 1);

}  // namespace wmforge
