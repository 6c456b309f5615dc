#include "wmforge/vocab_lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "wmforge/errors.hpp"
#include "wmforge/rng.hpp"

namespace wmforge {

namespace {
constexpr int kModelFormatVersion = 1;
constexpr char kBinaryMagic[4] = {'W', 'M', 'L', 'M'};

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw InputError(std::string(what) + " contains a non-finite value");
  }
}
}  // namespace

std::string Vocabulary::label(TokenId t) const {
  const auto i = static_cast<std::size_t>(t);
  if (i < labels.size()) return labels[i];
  return "t" + std::to_string(t);
}

ToyLanguageModel::ToyLanguageModel(std::uint64_t seed, ModelConfig config, std::vector<double> unigram,
                                   Matrix bigram, Matrix embeddings, int threads)
    : seed_(seed),
      config_(config),
      unigram_(std::move(unigram)),
      bigram_(std::move(bigram)),
      embeddings_(std::move(embeddings)) {
  const std::size_t m = unigram_.size();
  if (m < 2) throw ConfigError("vocabulary size must be at least 2");
  if (bigram_.rows != m || bigram_.cols != m) throw ConfigError("bigram matrix must be m x m");
  if (embeddings_.rows != m || embeddings_.cols < 2) throw ConfigError("embedding matrix must be m x d, d >= 2");
  if (!(config_.temperature > 0.0)) throw ConfigError("temperature must be positive");
  check_finite(unigram_, "unigram logits");
  check_finite(bigram_.data, "bigram logits");
  check_finite(embeddings_.data, "embeddings");
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < embeddings_.cols; ++c) s += embeddings_(i, c) * embeddings_(i, c);
    if (s == 0.0) throw ConfigError("embedding row has zero norm");
  }
  synonyms_ = SynonymIndex(threads > 1 ? kernels::cosine_topk_parallel(embeddings_, config_.synonym_k, threads)
                                       : kernels::cosine_topk_serial(embeddings_, config_.synonym_k));
}

void ToyLanguageModel::logits(std::optional<TokenId> prev, std::span<double> out) const {
  const std::size_t m = vocab_size();
  if (prev) {
    const double* row = bigram_.row(static_cast<std::size_t>(*prev));
    for (std::size_t j = 0; j < m; ++j) out[j] = unigram_[j] + row[j];
  } else {
    std::copy(unigram_.begin(), unigram_.end(), out.begin());
  }
}

ToyLanguageModel build_model(std::uint64_t seed, std::size_t m, std::size_t d, const ModelConfig& config,
                             int threads) {
  if (m < 2) throw ConfigError("vocabulary size m must be >= 2");
  if (d < 2) throw ConfigError("embedding dimension d must be >= 2");
  if (config.low_entropy_fraction < 0.0 || config.low_entropy_fraction > 1.0) {
    throw ConfigError("low_entropy_fraction must lie in [0, 1]");
  }
  Rng rng(stream_seed(seed, 0x4c4d));

  Matrix emb(m, d);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (auto& x : emb.data) x = rng.normal() * inv_sqrt_d;
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += emb(i, c) * emb(i, c);
    if (s == 0.0) emb(i, 0) = 1.0;
  }

  std::vector<double> unigram(m);
  for (auto& u : unigram) u = config.unigram_scale * rng.normal();

  // Spiked tokens: a seeded Fisher-Yates prefix.
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = m - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  const auto spiked = static_cast<std::size_t>(std::floor(config.low_entropy_fraction * static_cast<double>(m)));
  for (std::size_t i = 0; i < spiked; ++i) unigram[order[i]] += config.low_entropy_boost;

  Matrix mix(d, d);
  for (auto& x : mix.data) x = rng.normal() * inv_sqrt_d;
  Matrix projected(m, d);  // rows: W e_b
  for (std::size_t b = 0; b < m; ++b) {
    for (std::size_t r = 0; r < d; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += mix(r, c) * emb(b, c);
      projected(b, r) = s;
    }
  }
  Matrix bigram(m, m);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += emb(a, c) * projected(b, c);
      bigram(a, b) = config.bigram_scale * dot + config.bigram_noise * rng.normal();
    }
  }
  return ToyLanguageModel(seed, config, std::move(unigram), std::move(bigram), std::move(emb), threads);
}

void log_softmax(std::span<const double> logits, double temperature, std::span<double> out) {
  double mx = -INFINITY;
  for (double l : logits) mx = std::max(mx, l / temperature);
  double z = 0.0;
  for (double l : logits) z += std::exp(l / temperature - mx);
  const double lz = mx + std::log(z);
  for (std::size_t j = 0; j < logits.size(); ++j) out[j] = logits[j] / temperature - lz;
}

void next_token_distribution(const ToyLanguageModel& model, std::optional<TokenId> prev,
                             std::span<const double> logit_bias, std::span<double> out) {
  const std::size_t m = model.vocab_size();
  if (logit_bias.size() != m) throw InputError("logit bias length must equal vocabulary size");
  model.logits(prev, out);
  const double t = model.temperature();
  double mx = -INFINITY;
  for (std::size_t j = 0; j < m; ++j) {
    if (!std::isfinite(logit_bias[j])) throw InputError("logit bias must be finite");
    out[j] = (out[j] + logit_bias[j]) / t;
    mx = std::max(mx, out[j]);
  }
  double z = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    out[j] = std::exp(out[j] - mx);
    z += out[j];
  }
  for (std::size_t j = 0; j < m; ++j) out[j] /= z;
}

std::vector<double> next_token_distribution(const ToyLanguageModel& model, std::optional<TokenId> prev,
                                            std::span<const double> logit_bias) {
  std::vector<double> out(model.vocab_size());
  next_token_distribution(model, prev, logit_bias, out);
  return out;
}

double sentence_log_likelihood(const ToyLanguageModel& model, std::span<const TokenId> tokens) {
  if (tokens.empty()) throw InputError("sentence_log_likelihood: empty sequence");
  const std::size_t m = model.vocab_size();
  std::vector<double> logits(m), logp(m);
  double ll = 0.0;
  std::optional<TokenId> prev;
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= m) throw InputError("token id out of range");
    model.logits(prev, logits);
    log_softmax(logits, model.temperature(), logp);
    ll += logp[static_cast<std::size_t>(t)];
    prev = t;
  }
  return ll;
}

TokenId sample_index(std::span<const double> probs, double u) {
  double acc = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    acc += probs[j];
    if (u < acc) return static_cast<TokenId>(j);
  }
  // Rounding left u beyond the accumulated mass: last token with mass.
  for (std::size_t j = probs.size(); j-- > 0;) {
    if (probs[j] > 0.0) return static_cast<TokenId>(j);
  }
  return 0;
}

// ---------------------------------------------------------------- persistence

std::string model_to_json(const ToyLanguageModel& model) {
  const auto& cfg = model.config();
  nlohmann::json j;
  j["version"] = kModelFormatVersion;
  j["seed"] = model.seed();
  j["m"] = model.vocab_size();
  j["d"] = model.embedding_dim();
  j["config"] = {{"temperature", cfg.temperature},
                 {"low_entropy_fraction", cfg.low_entropy_fraction},
                 {"low_entropy_boost", cfg.low_entropy_boost},
                 {"unigram_scale", cfg.unigram_scale},
                 {"bigram_scale", cfg.bigram_scale},
                 {"bigram_noise", cfg.bigram_noise},
                 {"synonym_k", cfg.synonym_k}};
  j["unigram_logits"] = model.unigram_logits();
  auto rows = nlohmann::json::array();
  for (std::size_t a = 0; a < model.vocab_size(); ++a) {
    const double* r = model.bigram_logits().row(a);
    rows.push_back(std::vector<double>(r, r + model.vocab_size()));
  }
  j["bigram_logits"] = std::move(rows);
  auto emb = nlohmann::json::array();
  for (std::size_t a = 0; a < model.vocab_size(); ++a) {
    const double* r = model.embeddings().row(a);
    emb.push_back(std::vector<double>(r, r + model.embedding_dim()));
  }
  j["embeddings"] = std::move(emb);
  return j.dump();
}

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, const T& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("model file truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

ToyLanguageModel model_from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != kModelFormatVersion) {
    throw IoError("unsupported model version " + j.at("version").dump());
  }
  const auto m = j.at("m").get<std::size_t>();
  const auto d = j.at("d").get<std::size_t>();
  ModelConfig cfg;
  const auto& c = j.at("config");
  cfg.temperature = c.at("temperature").get<double>();
  cfg.low_entropy_fraction = c.at("low_entropy_fraction").get<double>();
  cfg.low_entropy_boost = c.at("low_entropy_boost").get<double>();
  cfg.unigram_scale = c.at("unigram_scale").get<double>();
  cfg.bigram_scale = c.at("bigram_scale").get<double>();
  cfg.bigram_noise = c.at("bigram_noise").get<double>();
  cfg.synonym_k = c.at("synonym_k").get<std::size_t>();
  auto unigram = j.at("unigram_logits").get<std::vector<double>>();
  Matrix bigram(m, m), emb(m, d);
  const auto& br = j.at("bigram_logits");
  const auto& er = j.at("embeddings");
  if (unigram.size() != m || br.size() != m || er.size() != m) throw IoError("model arrays disagree with m");
  for (std::size_t a = 0; a < m; ++a) {
    auto row = br[a].get<std::vector<double>>();
    auto erow = er[a].get<std::vector<double>>();
    if (row.size() != m || erow.size() != d) throw IoError("model row length mismatch");
    std::copy(row.begin(), row.end(), bigram.row(a));
    std::copy(erow.begin(), erow.end(), emb.row(a));
  }
  return ToyLanguageModel(j.at("seed").get<std::uint64_t>(), cfg, std::move(unigram), std::move(bigram),
                          std::move(emb));
}

}  // namespace

std::vector<std::uint8_t> model_to_bytes(const ToyLanguageModel& model) {
  std::vector<std::uint8_t> out(kBinaryMagic, kBinaryMagic + 4);
  const auto& cfg = model.config();
  put(out, static_cast<std::uint32_t>(kModelFormatVersion));
  put(out, model.seed());
  put(out, static_cast<std::uint64_t>(model.vocab_size()));
  put(out, static_cast<std::uint64_t>(model.embedding_dim()));
  for (double v : {cfg.temperature, cfg.low_entropy_fraction, cfg.low_entropy_boost, cfg.unigram_scale,
                   cfg.bigram_scale, cfg.bigram_noise}) {
    put(out, v);
  }
  put(out, static_cast<std::uint64_t>(cfg.synonym_k));
  for (double v : model.unigram_logits()) put(out, v);
  for (double v : model.bigram_logits().data) put(out, v);
  for (double v : model.embeddings().data) put(out, v);
  return out;
}

void save_model(const ToyLanguageModel& model, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  if (path.extension() == ".json") {
    f << model_to_json(model) << '\n';
  } else {
    const auto bytes = model_to_bytes(model);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  if (!f) throw IoError("failed writing " + path.string());
}

ToyLanguageModel load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  if (path.extension() == ".json") {
    try {
      return model_from_json(nlohmann::json::parse(f));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("malformed model file " + path.string() + ": " + e.what());
    }
  }
  std::vector<std::uint8_t> in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (in.size() < 4 || !std::equal(kBinaryMagic, kBinaryMagic + 4, in.begin())) {
    throw IoError("not a model file: " + path.string());
  }
  std::size_t pos = 4;
  const auto version = take<std::uint32_t>(in, pos);
  if (version != kModelFormatVersion) throw IoError("unsupported model version " + std::to_string(version));
  const auto seed = take<std::uint64_t>(in, pos);
  const auto m = take<std::uint64_t>(in, pos);
  const auto d = take<std::uint64_t>(in, pos);
  ModelConfig cfg;
  cfg.temperature = take<double>(in, pos);
  cfg.low_entropy_fraction = take<double>(in, pos);
  cfg.low_entropy_boost = take<double>(in, pos);
  cfg.unigram_scale = take<double>(in, pos);
  cfg.bigram_scale = take<double>(in, pos);
  cfg.bigram_noise = take<double>(in, pos);
  cfg.synonym_k = take<std::uint64_t>(in, pos);
  std::vector<double> unigram(m);
  for (auto& v : unigram) v = take<double>(in, pos);
  Matrix bigram(m, m), emb(m, d);
  for (auto& v : bigram.data) v = take<double>(in, pos);
  for (auto& v : emb.data) v = take<double>(in, pos);
  return ToyLanguageModel(seed, cfg, std::move(unigram), std::move(bigram), std::move(emb));
}

}  // namespace wmforge
