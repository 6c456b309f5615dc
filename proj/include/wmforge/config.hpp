#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "wmforge/removal.hpp"
#include "wmforge/stealer.hpp"
#include "wmforge/vocab_lm.hpp"

namespace wmforge {

enum class AttackMode { vanilla, oracle, pro, as2, multikey, freq };
std::string to_string(AttackMode m);
AttackMode attack_mode_from_string(const std::string& s);

/// One experiment. Every field has a default; a config file only needs the
/// keys it changes. Sub-seeds are derived from `seed`.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  int threads = 1;
  std::filesystem::path out_dir = "wmforge_out";

  std::size_t m = 300;
  std::size_t d = 16;
  ModelConfig model;

  double gamma = 0.25;
  double delta = 2.0;
  std::size_t num_keys = 1;

  std::size_t n_watermarked = 400;
  std::size_t n_natural = 400;
  std::size_t len_min = 200;
  std::size_t len_max = 200;
  double r_c = 0.0;

  double z_star = 4.0;

  AttackMode mode = AttackMode::pro;
  /// gamma/z_star inside are filled from the watermark and detector
  /// sections for AS1 modes; solver settings live here too.
  StealConfig steal;

  RemovalOptions removal;

  /// Throws ConfigError on any out-of-range field.
  void validate() const;

  std::uint64_t model_seed() const;
  std::uint64_t corpus_seed() const;
  std::uint64_t error_seed() const;
  std::uint64_t steal_seed() const;
  std::uint64_t removal_seed() const;
  std::vector<WatermarkKey> keys() const;
  /// StealConfig as the attack sees it (seeds and AS1 knowledge filled in).
  StealConfig effective_steal() const;
};

/// Defaults used by `run` when no config file is given: deterministic LP
/// iteration budget instead of a wall-clock limit.
ExperimentConfig default_config();

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j, const ExperimentConfig& base = default_config());
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

/// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);
std::string fnv1a_hex(const std::string& bytes);

}  // namespace wmforge
