#include "wmforge/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "wmforge/errors.hpp"
#include "wmforge/rng.hpp"

namespace wmforge {

std::string to_string(Label l) { return l == Label::watermarked ? "watermarked" : "natural"; }

Label label_from_string(const std::string& s) {
  if (s == "watermarked") return Label::watermarked;
  if (s == "natural") return Label::natural;
  throw IoError("unknown label '" + s + "'");
}

bool SentenceRecord::operator==(const SentenceRecord& o) const {
  auto same_counts = counts.size() == o.counts.size() &&
                     std::equal(counts.begin(), counts.end(), o.counts.begin(), [](auto& a, auto& b) {
                       return a.token == b.token && a.count == b.count;
                     });
  return id == o.id && same_counts && length == o.length && claimed == o.claimed && truth == o.truth &&
         key_index == o.key_index && tokens == o.tokens;
}

SparseCounts counts_from_tokens(std::span<const TokenId> tokens) {
  std::map<TokenId, std::int32_t> acc;
  for (TokenId t : tokens) ++acc[t];
  SparseCounts out;
  out.reserve(acc.size());
  for (const auto& [t, n] : acc) out.push_back({t, n});
  return out;
}

Corpus generate_corpus(const ToyLanguageModel& model, const WatermarkParams& params, std::size_t n_watermarked,
                       std::size_t n_natural, LengthRange lengths, std::uint64_t seed, bool keep_tokens,
                       int threads) {
  if (n_watermarked + n_natural == 0) throw InputError("corpus must contain at least one sentence");
  if (lengths.min < 20 || lengths.max > 400 || lengths.min > lengths.max) {
    throw ConfigError("length range must lie within [20, 400]");
  }
  Corpus c;
  c.meta.m = model.vocab_size();
  c.meta.gamma = params.gamma;
  c.meta.delta = params.delta;
  c.meta.keys = params.keys;
  c.meta.seed = seed;
  c.meta.model_seed = model.seed();
  c.meta.len_min = lengths.min;
  c.meta.len_max = lengths.max;
  c.meta.n_watermarked = n_watermarked;
  c.meta.n_natural = n_natural;
  c.records.resize(n_watermarked + n_natural);

  if (n_watermarked > 0) {
    auto wm = sample_multikey_corpus(model, params, n_watermarked, lengths, stream_seed(seed, 1), threads);
    for (std::size_t i = 0; i < n_watermarked; ++i) {
      auto& r = c.records[i];
      r.id = i;
      r.counts = counts_from_tokens(wm[i].tokens);
      r.length = static_cast<long>(wm[i].tokens.size());
      r.claimed = r.truth = Label::watermarked;
      r.key_index = wm[i].key_index;
      if (keep_tokens) r.tokens = std::move(wm[i].tokens);
    }
  }
  const std::uint64_t natural_seed = stream_seed(seed, 2);
  parallel_for(n_natural, threads, [&](std::size_t i) {
    Rng rng(stream_seed(natural_seed, i));
    const auto len = lengths.min + static_cast<std::size_t>(rng.below(lengths.max - lengths.min + 1));
    auto toks = sample_natural_sentence(model, len, rng);
    auto& r = c.records[n_watermarked + i];
    r.id = n_watermarked + i;
    r.counts = counts_from_tokens(toks);
    r.length = static_cast<long>(toks.size());
    r.claimed = r.truth = Label::natural;
    if (keep_tokens) r.tokens = std::move(toks);
  });
  return c;
}

Corpus inject_errors(const Corpus& corpus, double r_c, std::uint64_t seed) {
  if (!(r_c >= 0.0 && r_c < 1.0)) throw ConfigError("r_c must lie in [0, 1)");
  Corpus out = corpus;
  out.meta.r_c = r_c;
  out.meta.error_seed = seed;
  if (r_c == 0.0) return out;
  Rng rng(stream_seed(seed, 0x4552));
  for (Label cls : {Label::watermarked, Label::natural}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < corpus.records.size(); ++i) {
      if (corpus.records[i].claimed == cls) members.push_back(i);
    }
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
    const auto flips = static_cast<std::size_t>(std::floor(r_c * static_cast<double>(members.size()) + 1e-9));
    const Label other = cls == Label::watermarked ? Label::natural : Label::watermarked;
    for (std::size_t k = 0; k < flips; ++k) out.records[members[k]].claimed = other;
  }
  return out;
}

std::vector<long> token_frequencies(const Corpus& corpus, Label claimed) {
  std::vector<long> f(corpus.meta.m, 0);
  for (const auto& r : corpus.records) {
    if (r.claimed != claimed) continue;
    for (const auto& [t, n] : r.counts) f[static_cast<std::size_t>(t)] += n;
  }
  return f;
}

TokenWeights compute_token_weights(const Corpus& corpus) {
  const bool has_wm = std::any_of(corpus.records.begin(), corpus.records.end(),
                                  [](const auto& r) { return r.claimed == Label::watermarked; });
  const bool has_nat = std::any_of(corpus.records.begin(), corpus.records.end(),
                                   [](const auto& r) { return r.claimed == Label::natural; });
  if (!has_wm || !has_nat) throw InputError("token weights need both claimed classes to be nonempty");
  const auto wm = token_frequencies(corpus, Label::watermarked);
  const auto nat = token_frequencies(corpus, Label::natural);
  TokenWeights w{std::vector<double>(corpus.meta.m)};
  for (std::size_t j = 0; j < w.w.size(); ++j) {
    w.w[j] = (static_cast<double>(nat[j]) + 1.0) / (static_cast<double>(wm[j]) + 1.0);
  }
  return w;
}

ColorCode frequency_baseline_split(const Corpus& corpus, std::optional<std::size_t> list_size) {
  if (corpus.records.empty()) throw InputError("frequency baseline needs a nonempty corpus");
  const auto wm = token_frequencies(corpus, Label::watermarked);
  ColorCode color(corpus.meta.m, 0);
  if (list_size) {
    std::vector<std::size_t> order(color.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return wm[a] > wm[b]; });
    for (std::size_t k = 0; k < std::min(*list_size, order.size()); ++k) color[order[k]] = 1;
    return color;
  }
  const auto nat = token_frequencies(corpus, Label::natural);
  for (std::size_t j = 0; j < color.size(); ++j) color[j] = wm[j] > nat[j] ? 1 : 0;
  return color;
}

// ---------------------------------------------------------------- JSONL I/O

namespace {

nlohmann::json header_json(const CorpusMeta& m) {
  std::vector<std::uint64_t> keys;
  for (const auto& k : m.keys) keys.push_back(k.value);
  return {{"version", m.version},       {"m", m.m},
          {"gamma", m.gamma},           {"delta", m.delta},
          {"keys", keys},               {"r_c", m.r_c},
          {"seed", m.seed},             {"error_seed", m.error_seed},
          {"model_seed", m.model_seed}, {"len_min", m.len_min},
          {"len_max", m.len_max},       {"n_watermarked", m.n_watermarked},
          {"n_natural", m.n_natural}};
}

CorpusMeta meta_from_json(const nlohmann::json& j) {
  CorpusMeta m;
  m.version = j.at("version").get<int>();
  if (m.version != 1) throw IoError("unsupported corpus version " + std::to_string(m.version));
  m.m = j.at("m").get<std::size_t>();
  m.gamma = j.at("gamma").get<double>();
  m.delta = j.at("delta").get<double>();
  for (auto k : j.at("keys").get<std::vector<std::uint64_t>>()) m.keys.push_back(WatermarkKey{k});
  m.r_c = j.at("r_c").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.error_seed = j.value("error_seed", std::uint64_t{0});
  m.model_seed = j.value("model_seed", std::uint64_t{0});
  m.len_min = j.value("len_min", std::size_t{200});
  m.len_max = j.value("len_max", std::size_t{200});
  m.n_watermarked = j.value("n_watermarked", std::size_t{0});
  m.n_natural = j.value("n_natural", std::size_t{0});
  return m;
}

nlohmann::json record_json(const SentenceRecord& r) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [t, n] : r.counts) counts[std::to_string(t)] = n;
  nlohmann::json j = {{"id", r.id},
                      {"len", r.length},
                      {"counts", std::move(counts)},
                      {"claimed", to_string(r.claimed)},
                      {"true", to_string(r.truth)}};
  j["key"] = r.key_index ? nlohmann::json(*r.key_index) : nlohmann::json(nullptr);
  if (r.tokens) j["seq"] = *r.tokens;
  return j;
}

SentenceRecord record_from_json(const nlohmann::json& j, std::size_t m) {
  SentenceRecord r;
  r.id = j.at("id").get<std::uint64_t>();
  r.length = j.at("len").get<long>();
  for (const auto& [k, v] : j.at("counts").items()) {
    const auto tok = static_cast<TokenId>(std::stol(k));
    if (tok < 0 || static_cast<std::size_t>(tok) >= m) throw IoError("record token id out of range");
    r.counts.push_back({tok, v.get<std::int32_t>()});
  }
  std::sort(r.counts.begin(), r.counts.end(), [](auto& a, auto& b) { return a.token < b.token; });
  r.claimed = label_from_string(j.at("claimed").get<std::string>());
  r.truth = label_from_string(j.at("true").get<std::string>());
  if (j.contains("key") && !j.at("key").is_null()) r.key_index = j.at("key").get<std::size_t>();
  if (j.contains("seq")) r.tokens = j.at("seq").get<std::vector<TokenId>>();
  long total = 0;
  for (const auto& c : r.counts) total += c.count;
  if (total != r.length) throw IoError("record " + std::to_string(r.id) + ": counts do not sum to len");
  return r;
}

}  // namespace

void write_corpus(const Corpus& corpus, std::ostream& out) {
  out << header_json(corpus.meta).dump() << '\n';
  for (const auto& r : corpus.records) out << record_json(r).dump() << '\n';
}

Corpus read_corpus(std::istream& in) {
  Corpus c;
  std::string line;
  try {
    if (!std::getline(in, line)) throw IoError("empty corpus file");
    c.meta = meta_from_json(nlohmann::json::parse(line));
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      c.records.push_back(record_from_json(nlohmann::json::parse(line), c.meta.m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed corpus line: ") + e.what());
  }
  return c;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  write_corpus(corpus, f);
  if (!f) throw IoError("failed writing " + path.string());
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  return read_corpus(f);
}

}  // namespace wmforge
