#pragma once

// Helpers shared by the single-key and multi-key formulations.

#include <string>
#include <vector>

#include "wmforge/stealer.hpp"

namespace wmforge::detail {

struct StageOutcome {
  MipSolution sol;
  StageDiagnostics diag;
};

void check_labels(const Corpus& corpus, const std::vector<Label>& labels);
/// Adds keys*m color binaries and splits records by label.
void init_model(StealModel& sm, const Corpus& corpus, const std::vector<Label>& labels, std::size_t keys);
std::vector<Term> green_terms(const StealModel& sm, const SentenceRecord& r, std::size_t key, double scale = 1.0);
void add_size_cap(StealModel& sm, std::size_t key, double cap, const std::string& name);
/// Sum of all color variables, weighted per token when `weights` is set.
std::vector<Term> weighted_size(const StealModel& sm, const TokenWeights* weights);
void add_aggregate_rows(StealModel& sm, const StageOneBounds& b, const StealConfig& cfg);
void add_lambda_counts(StealModel& sm, const StealConfig& cfg);
StageOutcome run_stage(const StealModel& sm, const std::string& name, const StealConfig& cfg,
                       const std::vector<double>* warm);
void fill_lambda(StealResult& res, const StealModel& sm, const std::vector<double>& x);
/// Applies the next relaxation step to `cfg` or throws InfeasibleError.
void relax_or_throw(StealConfig& cfg, StealResult& res, int& widenings);

}  // namespace wmforge::detail
