#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wmforge/config.hpp"
#include "wmforge/corpus.hpp"
#include "wmforge/removal.hpp"
#include "wmforge/stealer.hpp"

namespace wmforge {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

// Color-code files: {"version", "m", "mode"?, "lists": [[green token ids]...]}.
struct ColorCodeFile {
  std::size_t m = 0;
  std::string mode;  // "truth" for the true split
  std::vector<ColorCode> lists;
};
void save_color_codes(const ColorCodeFile& f, const std::filesystem::path& path);
ColorCodeFile load_color_codes(const std::filesystem::path& path);

/// True splits of the keys recorded in a corpus header.
std::vector<ColorCode> true_splits(const CorpusMeta& meta);

struct DetectionSummary {
  std::size_t natural = 0;
  std::size_t false_positives = 0;
  std::size_t watermarked = 0;
  std::size_t true_positives = 0;
  double fpr() const { return natural ? double(false_positives) / double(natural) : 0.0; }
  double tpr() const { return watermarked ? double(true_positives) / double(watermarked) : 0.0; }
};

/// A record counts as detected when any key flags it.
std::vector<DetectionResult> detect_corpus(const Corpus& corpus, const std::vector<ColorCode>& splits,
                                           const DetectorConfig& config);
DetectionSummary summarize_detection(const Corpus& corpus, const std::vector<DetectionResult>& results);

struct GiBiRow {
  std::uint64_t id = 0;
  long length = 0;
  double g = 0.0;              // detection threshold
  std::optional<double> b;     // b_hat; absent in modes without stage-1 bounds
  long g_true = 0;             // true green count
};

struct GiBiTable {
  std::vector<GiBiRow> rows;   // records the attack treated as watermarked
  double mean_gap_g = 0.0;     // mean |g - g_true|
  std::optional<double> mean_gap_b;  // mean |b - g_true|
};

/// Oracle mode uses the true counts as its b column; Vanilla and Freq have
/// none.
GiBiTable emit_gi_bi_diagnostic(const Corpus& corpus, const std::vector<Label>& labels, const StealResult& steal,
                                const OracleCounts& counts, double gamma, double z_star);

struct StealRow {
  std::string mode;
  std::size_t key = 0;
  std::size_t matched_truth = 0;
  PrecisionMetrics metrics;
};

struct RemovalRow {
  std::string strategy;
  RemovalMetrics metrics;
  double ppl_before = 0.0;  // mean over rewritten records
  double ppl_after = 0.0;
  std::size_t rewritten = 0;
  std::size_t flagged = 0;
  std::size_t replaced_tokens = 0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::string config_hash;
  DetectionSummary detection;
  std::vector<StealRow> steal_table;  // attack rows, then the frequency baseline
  std::optional<RemovalRow> removal;  // absent for multikey runs
  std::optional<GiBiTable> gi_bi;     // single-key runs
  StealResult steal;
  std::vector<std::pair<std::string, double>> stage_seconds;
};

/// Scores stolen lists against the truth (index matching for several keys).
std::vector<StealRow> score_stolen(const std::string& mode, const std::vector<ColorCode>& stolen,
                                   const std::vector<ColorCode>& truth);

/// generate, detect, steal, remove, evaluate. Artifacts go to
/// config.out_dir as each stage finishes, so a failed run keeps what it
/// produced. Errors keep their type and get a "stage <name>: " prefix.
ExperimentReport run_pipeline(const ExperimentConfig& config);

nlohmann::json report_to_json(const ExperimentReport& report);
/// report.json, summary.txt and the CSV tables.
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);
std::string report_summary(const ExperimentReport& report);
/// Parses report.json; throws IoError naming both versions when the schema
/// is newer than this build understands.
nlohmann::json load_report(const std::filesystem::path& path);

// CSV tables. None of them carry timings, so reruns compare byte for byte.
std::string steal_table_csv(const std::vector<StealRow>& rows);
std::string removal_table_csv(const RemovalRow& row);
std::string gi_bi_csv(const GiBiTable& table);
std::string solver_stages_csv(const StealResult& steal);

/// Stolen lists as green token ids, plus lambda, rho, stage-1 bounds and
/// per-stage solver diagnostics.
nlohmann::json steal_result_to_json(const StealResult& r);

}  // namespace wmforge
