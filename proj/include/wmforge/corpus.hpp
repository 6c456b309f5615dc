#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wmforge/kernels.hpp"
#include "wmforge/types.hpp"
#include "wmforge/watermark.hpp"

namespace wmforge {

enum class Label : std::uint8_t { watermarked, natural };

std::string to_string(Label l);
Label label_from_string(const std::string& s);

struct SentenceRecord {
  std::uint64_t id = 0;
  SparseCounts counts;  // sorted by token id
  long length = 0;
  Label claimed = Label::natural;
  Label truth = Label::natural;            // evaluation only
  std::optional<std::size_t> key_index;    // evaluation only
  std::optional<std::vector<TokenId>> tokens;

  bool operator==(const SentenceRecord& o) const;
};

struct CorpusMeta {
  int version = 1;
  std::size_t m = 0;
  double gamma = 0.25;
  double delta = 2.0;
  std::vector<WatermarkKey> keys;
  double r_c = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t error_seed = 0;
  std::uint64_t model_seed = 0;
  std::size_t len_min = 200;
  std::size_t len_max = 200;
  std::size_t n_watermarked = 0;
  std::size_t n_natural = 0;

  bool operator==(const CorpusMeta&) const = default;
};

struct Corpus {
  CorpusMeta meta;
  std::vector<SentenceRecord> records;

  bool operator==(const Corpus&) const = default;
};

struct TokenWeights {
  std::vector<double> w;
};

/// Sparse counts (sorted by token) of a token sequence.
SparseCounts counts_from_tokens(std::span<const TokenId> tokens);

/// n_watermarked sentences via the watermark sampler (one key per sentence,
/// uniform over params.keys) followed by n_natural unbiased sentences.
/// Length range must lie within [20, 400].
Corpus generate_corpus(const ToyLanguageModel& model, const WatermarkParams& params, std::size_t n_watermarked,
                       std::size_t n_natural, LengthRange lengths, std::uint64_t seed, bool keep_tokens = true,
                       int threads = 1);

/// Flips the claimed label of exactly floor(r_c * n_class) records in each
/// claimed class. True labels are untouched. 0 <= r_c < 1.
Corpus inject_errors(const Corpus& corpus, double r_c, std::uint64_t seed);

/// w_j = (freq in claimed-natural + 1) / (freq in claimed-watermarked + 1).
TokenWeights compute_token_weights(const Corpus& corpus);

/// Green iff watermarked frequency > natural frequency; with `list_size`,
/// the top-`list_size` tokens by watermarked frequency instead (ties: lower id).
ColorCode frequency_baseline_split(const Corpus& corpus, std::optional<std::size_t> list_size = std::nullopt);

/// Per-token occurrence totals over records with the given claimed label.
std::vector<long> token_frequencies(const Corpus& corpus, Label claimed);

// JSON Lines persistence: header line, then one record per line.
void write_corpus(const Corpus& corpus, std::ostream& out);
Corpus read_corpus(std::istream& in);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

}  // namespace wmforge
