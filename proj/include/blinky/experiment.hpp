#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "blinky/blinkiva.hpp"
#include "blinky/metrics.hpp"
#include "blinky/scene.hpp"

namespace blinky {

/// Algorithms the harness knows. "mixture" scores the unprocessed first
/// microphone against every reference.
inline const std::vector<std::string> kAlgorithms = {"auxiva", "blinkiva", "mixture"};

struct ExperimentPlan {
  std::vector<int> n_sources = {2, 3, 4};
  std::vector<int> n_mics = {2, 3, 4, 5, 6, 7};
  std::vector<std::string> algorithms = {"auxiva", "blinkiva"};
  int n_seeds = 50;
  std::uint64_t base_seed = 0;
  std::vector<std::string> source_wavs;  // empty: synthetic speech-like sources
  JointConfig joint;                     // K is set per grid point
  SceneConfig scene;                     // n_sources / n_mics / seed are set per grid point
  StftParams stft;
  std::size_t filter_len = 512;
  int threads = 1;
  std::string out_dir;

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentPlan& p);
void from_json(const nlohmann::json& j, ExperimentPlan& p);

/// One CSV row. source_index < 0 marks a skipped grid point.
struct ResultRow {
  std::string algo;
  int n_mics = 0;
  int n_sources = 0;
  std::uint64_t seed = 0;
  int source_index = 0;
  double sdr_db = 0.0;
  double sir_db = 0.0;
};

/// Canonical order: n_sources, n_mics, algo, seed, source_index.
bool canonical_less(const ResultRow& a, const ResultRow& b);

inline const char* kResultsHeader = "algo,n_mics,n_sources,seed,source_index,sdr_db,sir_db";

std::string format_row(const ResultRow& r);
void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

struct RunRecord {
  std::string algo;
  int n_mics = 0;
  int n_sources = 0;
  std::uint64_t seed = 0;
  EvalReport report;
  std::vector<double> cost_trace;  // empty for "mixture"
};

struct ConditionSummary {
  std::string algo;
  int n_mics = 0;
  int n_sources = 0;
  Summary summary;
};

/// Groups rows by (algo, n_mics, n_sources) and summarizes, treating
/// `weak_index` as the weak source.
std::vector<ConditionSummary> summarize_rows(const std::vector<ResultRow>& rows, int weak_index = 0);

void write_summary_csv(const std::filesystem::path& path, const std::vector<ConditionSummary>& s);

struct ExperimentResults {
  std::vector<ResultRow> rows;  // canonical order
  std::vector<RunRecord> runs;  // canonical order
  std::vector<ConditionSummary> summaries;
};

/// Runs every grid point and seed. One scene with max(n_mics) microphones is
/// drawn per (n_sources, seed) and its first M microphones serve each M.
/// Writes results.csv, summary.csv and results.json when out_dir is set.
ExperimentResults run_experiment(const ExperimentPlan& plan);

/// Reads a B x N blinky power matrix, one sensor per line, comma separated.
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m);

struct SeparateRequest {
  std::vector<std::string> mic_wavs;     // one multichannel file or several mono files
  std::string blinky_csv;                // U as CSV, or
  std::vector<std::string> blinky_wavs;  // sensor recordings turned into U
  std::string algo = "blinkiva";
  std::size_t n_sources = 1;
  JointConfig joint;
  StftParams stft;
  double sample_rate = 16000.0;
  int ref_mic = -1;  // microphone for projection back; -1 puts output k at microphone k
  std::string out_dir = ".";
};

struct SeparateOutput {
  std::vector<std::filesystem::path> wavs;
  std::filesystem::path report;
  std::vector<double> cost_trace;
};

/// Separates microphone recordings into n_sources WAV files plus a JSON run
/// report holding the cost trace and a config echo. Inputs are only read.
SeparateOutput separate_files(const SeparateRequest& req);

}  // namespace blinky
