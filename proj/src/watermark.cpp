#include "wmforge/watermark.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wmforge/errors.hpp"
#include "wmforge/kernels.hpp"

namespace wmforge {

std::size_t GreenRedSplit::green_count() const {
  return static_cast<std::size_t>(std::count(color.begin(), color.end(), std::uint8_t{1}));
}

std::vector<TokenId> GreenRedSplit::green_tokens() const {
  std::vector<TokenId> out;
  for (std::size_t j = 0; j < color.size(); ++j) {
    if (color[j]) out.push_back(static_cast<TokenId>(j));
  }
  return out;
}

std::size_t green_list_size(double gamma, std::size_t m) {
  return static_cast<std::size_t>(std::floor(gamma * static_cast<double>(m) + 1e-9));
}

GreenRedSplit derive_split(WatermarkKey key, double gamma, std::size_t m) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie strictly between 0 and 1");
  if (m < 2) throw ConfigError("vocabulary size must be at least 2");
  Rng rng(stream_seed(key.value, 0x5350));
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = m - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  GreenRedSplit split{key, gamma, ColorCode(m, 0)};
  const std::size_t g = green_list_size(gamma, m);
  for (std::size_t i = 0; i < g; ++i) split.color[perm[i]] = 1;
  return split;
}

std::vector<TokenId> sample_sentence(const ToyLanguageModel& model, std::size_t length, Rng& rng,
                                     std::span<const double> bias) {
  if (length == 0) throw InputError("sentence length must be >= 1");
  std::vector<double> probs(model.vocab_size());
  std::vector<TokenId> out;
  out.reserve(length);
  std::optional<TokenId> prev;
  for (std::size_t t = 0; t < length; ++t) {
    next_token_distribution(model, prev, bias, probs);
    const TokenId tok = sample_index(probs, rng.uniform());
    out.push_back(tok);
    prev = tok;
  }
  return out;
}

std::vector<TokenId> sample_natural_sentence(const ToyLanguageModel& model, std::size_t length, Rng& rng) {
  const std::vector<double> zero(model.vocab_size(), 0.0);
  return sample_sentence(model, length, rng, zero);
}

std::vector<TokenId> sample_watermarked_sentence(const ToyLanguageModel& model, const GreenRedSplit& split,
                                                 double delta, std::size_t length, Rng& rng) {
  if (split.vocab_size() != model.vocab_size()) throw InputError("split and model disagree on vocabulary size");
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw ConfigError("delta must be a finite non-negative number");
  std::vector<double> bias(model.vocab_size());
  for (std::size_t j = 0; j < bias.size(); ++j) bias[j] = split.color[j] ? delta : 0.0;
  return sample_sentence(model, length, rng, bias);
}

std::vector<KeyedSentence> sample_multikey_corpus(const ToyLanguageModel& model, const WatermarkParams& params,
                                                  std::size_t n, LengthRange lengths, std::uint64_t seed,
                                                  int threads) {
  if (n == 0) throw InputError("corpus size must be >= 1");
  if (params.keys.empty()) throw ConfigError("at least one watermark key is required");
  if (lengths.min == 0 || lengths.min > lengths.max) throw ConfigError("invalid length range");
  std::vector<GreenRedSplit> splits;
  for (const auto& k : params.keys) splits.push_back(derive_split(k, params.gamma, model.vocab_size()));
  std::vector<KeyedSentence> out(n);
  parallel_for(n, threads, [&](std::size_t i) {
    Rng rng(stream_seed(seed, i));
    const auto key_index = static_cast<std::size_t>(rng.below(splits.size()));
    const auto len = lengths.min + static_cast<std::size_t>(rng.below(lengths.max - lengths.min + 1));
    out[i] = KeyedSentence{sample_watermarked_sentence(model, splits[key_index], params.delta, len, rng), key_index};
  });
  return out;
}

}  // namespace wmforge
