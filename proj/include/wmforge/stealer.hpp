#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wmforge/corpus.hpp"
#include "wmforge/detector.hpp"
#include "wmforge/mip_model.hpp"
#include "wmforge/mip_solver.hpp"

namespace wmforge {

struct StealConfig {
  std::optional<double> gamma;   // AS1 only
  std::optional<double> z_star;  // AS1 only
  double beta_hat = 1.0;
  double beta_tilde = 1.0;
  double p_l = 0.9;
  double p_u = 1.0;
  std::optional<double> eta;  // default: gamma when known, else 0.5
  double epsilon = 0.02;
  bool use_separation = true;  // AS2 min/max proportion margin
  double mu = 0.0;
  int max_iterations = 20;
  std::uint64_t seed = 0;  // multi-key rho initialization
  SolverConfig solver;
  std::optional<std::filesystem::path> dump_lp_dir;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
  double effective_eta() const { return eta ? *eta : gamma ? *gamma : 0.5; }
};

/// Ground-truth green counts per record (evaluation and Oracle mode only).
struct OracleCounts {
  std::vector<long> green;  // indexed like corpus.records
};

struct StageOneBounds {
  std::vector<std::size_t> hat_records;    // record index of each b_hat entry
  std::vector<double> b_hat;
  std::vector<std::size_t> tilde_records;  // record index of each b_tilde entry
  std::vector<double> b_tilde;
  double b_hat_sum = 0.0;
  double b_tilde_sum = 0.0;
  double b_abs = 0.0;  // Pro only
};

/// A formulation plus where its variables live.
struct StealModel {
  MipModel model;
  std::size_t m = 0;
  std::size_t keys = 1;
  std::vector<std::size_t> hat_records;
  std::vector<std::size_t> tilde_records;
  std::vector<long> b_hat_var;    // per hat_records entry
  std::vector<long> b_tilde_var;  // per tilde_records entry
  std::vector<long> lambda_var;   // per record, -1 when absent
  long b_abs_var = -1;
  long p_lo_var = -1;
  long p_hi_var = -1;

  std::size_t c_var(std::size_t key, std::size_t token) const { return key * m + token; }
};

struct StageDiagnostics {
  std::string name;
  MipStatus status = MipStatus::infeasible;
  double objective = 0.0;
  double gap = 0.0;
  long nodes = 0;
  long lp_iterations = 0;
  double seconds = 0.0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool has_solution = false;
  bool audit_ok = false;  // meaningful only with a solution
  double max_violation = 0.0;
};

struct StealResult {
  std::string mode;
  std::vector<ColorCode> stolen;   // one per key
  std::vector<std::int8_t> lambda;  // per record: 1 kept, 0 excluded, -1 not modelled
  std::vector<int> rho;            // per record: assigned key, -1 for natural
  std::optional<StageOneBounds> bounds;
  std::vector<StageDiagnostics> stages;
  int iterations = 0;
  bool converged = true;
  std::vector<std::string> relaxations;
};

// Attacker views of the corpus.
std::vector<Label> claimed_labels(const Corpus& corpus);
/// Labels an AS1 attacker gets from the detector API.
std::vector<Label> detector_labels(const Corpus& corpus, const ColorCode& color, const DetectorConfig& config);
/// w_j = (count in label-natural + 1) / (count in label-watermarked + 1).
TokenWeights weights_for_labels(const Corpus& corpus, const std::vector<Label>& labels);
OracleCounts oracle_counts(const Corpus& corpus, const ColorCode& color);

// Formulations. `labels` has one entry per record.
StealModel build_vanilla_as1(const Corpus& corpus, const std::vector<Label>& labels, const TokenWeights& weights,
                             const StealConfig& config);
StealModel build_oracle_as1(const Corpus& corpus, const std::vector<Label>& labels, const OracleCounts& counts,
                            const TokenWeights& weights, const StealConfig& config);
StealModel build_pro_as1_stage1(const Corpus& corpus, const std::vector<Label>& labels, const StealConfig& config);
StealModel build_pro_as1_stage2(const Corpus& corpus, const std::vector<Label>& labels, const StageOneBounds& bounds,
                                const TokenWeights& weights, const StealConfig& config);
StealModel build_as2_stage1(const Corpus& corpus, const std::vector<Label>& labels, const StealConfig& config);
StealModel build_as2_stage2(const Corpus& corpus, const std::vector<Label>& labels, const StageOneBounds& bounds,
                            const TokenWeights& weights, const StealConfig& config);
/// `rho` holds the fixed key of every label-watermarked record (-1 elsewhere).
StealModel build_multikey_stage1(const Corpus& corpus, const std::vector<Label>& labels, const std::vector<int>& rho,
                                 std::size_t keys, const StealConfig& config);
StealModel build_multikey_stage2(const Corpus& corpus, const std::vector<Label>& labels, const std::vector<int>& rho,
                                 std::size_t keys, const StageOneBounds& bounds, const StealConfig& config);

/// Reads b values of a solved stage-1 model.
StageOneBounds extract_bounds(const StealModel& sm, const std::vector<double>& x);
std::vector<ColorCode> extract_colors(const StealModel& sm, const std::vector<double>& x);

// End-to-end attacks.
StealResult steal_vanilla(const Corpus& corpus, const std::vector<Label>& labels, const TokenWeights& weights,
                          const StealConfig& config);
StealResult steal_oracle(const Corpus& corpus, const std::vector<Label>& labels, const OracleCounts& counts,
                         const TokenWeights& weights, const StealConfig& config);
StealResult steal_pro(const Corpus& corpus, const std::vector<Label>& labels, const TokenWeights& weights,
                      const StealConfig& config);
/// Relaxes on infeasibility: drops the separation margin, then widens
/// [p_l, p_u] by 0.05 per side up to four times.
StealResult steal_as2(const Corpus& corpus, const std::vector<Label>& labels, const TokenWeights& weights,
                      const StealConfig& config);
/// Alternates the two stages with rho fixed and reassigns rho by the
/// largest green count until rho stops changing or max_iterations.
StealResult steal_multikey(const Corpus& corpus, const std::vector<Label>& labels, std::size_t keys,
                           const StealConfig& config);
StealResult steal_frequency(const Corpus& corpus, std::optional<std::size_t> list_size = std::nullopt);

/// argmax_k G(S_i, k) for every label-watermarked record, lowest k on ties.
std::vector<int> reassign_keys(const Corpus& corpus, const std::vector<Label>& labels,
                               const std::vector<ColorCode>& colors);

// Evaluation.
struct PrecisionMetrics {
  std::size_t n_g = 0;  // stolen list size
  std::size_t n_t = 0;  // stolen and truly green
  std::optional<double> precision;  // undefined when n_g = 0
};

PrecisionMetrics evaluate_split(const ColorCode& stolen, const ColorCode& truth);

struct MultiKeyMetrics {
  std::vector<std::size_t> assignment;  // stolen list k is scored against truth[assignment[k]]
  std::vector<PrecisionMetrics> per_key;
};

/// Matches stolen lists to true lists maximizing total intersection
/// (exhaustive over permutations; lexicographically first on ties).
MultiKeyMetrics evaluate_multikey(const std::vector<ColorCode>& stolen, const std::vector<ColorCode>& truth);

}  // namespace wmforge
