#include "blinky/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include "blinky/error.hpp"
#include "blinky/wav.hpp"

namespace blinky {

void ExperimentPlan::validate() const {
  if (n_sources.empty() || n_mics.empty() || algorithms.empty())
    throw ConfigError("plan grid must list n_sources, n_mics and algorithms");
  for (const auto& a : algorithms)
    if (std::find(kAlgorithms.begin(), kAlgorithms.end(), a) == kAlgorithms.end())
      throw ConfigError("unknown algorithm '" + a + "'");
  for (int k : n_sources)
    if (k < 1) throw ConfigError("n_sources must be positive");
  for (int m : n_mics)
    if (m < 1) throw ConfigError("n_mics must be positive");
  if (n_seeds < 1) throw ConfigError("n_seeds must be positive");
  if (threads < 1) throw ConfigError("threads must be positive");
  for (const auto& w : source_wavs)
    if (!std::filesystem::exists(w)) throw ConfigError("source WAV not found: " + w);
  const int max_k = *std::max_element(n_sources.begin(), n_sources.end());
  if (!source_wavs.empty() && source_wavs.size() < static_cast<std::size_t>(max_k))
    throw ConfigError("need at least as many source WAVs as sources");
}

void to_json(nlohmann::json& j, const ExperimentPlan& p) {
  j = nlohmann::json{{"n_sources", p.n_sources},
                     {"n_mics", p.n_mics},
                     {"algorithms", p.algorithms},
                     {"n_seeds", p.n_seeds},
                     {"base_seed", p.base_seed},
                     {"source_wavs", p.source_wavs},
                     {"joint", p.joint},
                     {"scene", p.scene},
                     {"frame_size", p.stft.frame_size},
                     {"filter_len", p.filter_len},
                     {"out_dir", p.out_dir}};
}

void from_json(const nlohmann::json& j, ExperimentPlan& p) {
  ExperimentPlan d;
  p.n_sources = j.value("n_sources", d.n_sources);
  p.n_mics = j.value("n_mics", d.n_mics);
  p.algorithms = j.value("algorithms", d.algorithms);
  p.n_seeds = j.value("n_seeds", d.n_seeds);
  p.base_seed = j.value("base_seed", d.base_seed);
  p.source_wavs = j.value("source_wavs", d.source_wavs);
  if (j.contains("joint")) p.joint = j["joint"].get<JointConfig>();
  if (j.contains("scene")) p.scene = j["scene"].get<SceneConfig>();
  p.stft.frame_size = j.value("frame_size", d.stft.frame_size);
  p.stft.hop = p.stft.frame_size / 2;
  p.filter_len = j.value("filter_len", d.filter_len);
  p.threads = j.value("threads", d.threads);
  p.out_dir = j.value("out_dir", d.out_dir);
}

bool canonical_less(const ResultRow& a, const ResultRow& b) {
  return std::tie(a.n_sources, a.n_mics, a.algo, a.seed, a.source_index) <
         std::tie(b.n_sources, b.n_mics, b.algo, b.seed, b.source_index);
}

std::string format_row(const ResultRow& r) {
  char buf[64];
  std::string line = r.algo + "," + std::to_string(r.n_mics) + "," + std::to_string(r.n_sources) +
                     "," + std::to_string(r.seed) + "," + std::to_string(r.source_index);
  std::snprintf(buf, sizeof buf, ",%.6f,%.6f", r.sdr_db, r.sir_db);
  return line + buf;
}

void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << kResultsHeader << '\n';
  for (const auto& r : rows) out << format_row(r) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  return out;
}

}  // namespace

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader)
    throw IoError(path.string() + ": unexpected header");
  std::vector<ResultRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c = split(line, ',');
    if (c.size() != 7) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 7 columns");
    try {
      rows.push_back({c[0], std::stoi(c[1]), std::stoi(c[2]), std::stoull(c[3]), std::stoi(c[4]),
                      std::strtod(c[5].c_str(), nullptr), std::strtod(c[6].c_str(), nullptr)});
    } catch (const std::exception&) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    }
  }
  return rows;
}

std::vector<ConditionSummary> summarize_rows(const std::vector<ResultRow>& rows, int weak_index) {
  using Key = std::tuple<int, int, std::string>;
  using RunKey = std::tuple<int, int, std::string, std::uint64_t>;
  std::map<Key, std::vector<EvalReport>> groups;
  std::map<RunKey, std::size_t> position;  // index of the run's report within its group
  for (const auto& r : rows) {
    if (r.source_index < 0) continue;
    auto& reports = groups[Key{r.n_sources, r.n_mics, r.algo}];
    auto [it, fresh] = position.try_emplace(RunKey{r.n_sources, r.n_mics, r.algo, r.seed}, reports.size());
    if (fresh) {
      reports.emplace_back();
      reports.back().weak_source = static_cast<std::size_t>(weak_index);
    }
    auto& rep = reports[it->second];
    const auto idx = static_cast<std::size_t>(r.source_index);
    if (rep.sdr.size() <= idx) {
      rep.sdr.resize(idx + 1, std::nan(""));
      rep.sir.resize(idx + 1, std::nan(""));
    }
    rep.sdr[idx] = r.sdr_db;
    rep.sir[idx] = r.sir_db;
  }
  std::vector<ConditionSummary> out;
  for (const auto& [key, reports] : groups) {
    const auto& [k, m, algo] = key;
    out.push_back({algo, m, k, summarize(reports)});
  }
  return out;
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<ConditionSummary>& s) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "algo,n_mics,n_sources,subset,metric,q25,median,q75,count\n";
  auto emit = [&](const ConditionSummary& c, const char* subset, const char* metric, const Quartiles& q) {
    char buf[128];
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%zu", q.q25, q.median, q.q75, q.count);
    out << c.algo << ',' << c.n_mics << ',' << c.n_sources << ',' << subset << ',' << metric << buf << '\n';
  };
  for (const auto& c : s) {
    emit(c, "all", "sdr", c.summary.sdr);
    emit(c, "all", "sir", c.summary.sir);
    emit(c, "weak", "sdr", c.summary.weak_sdr);
    emit(c, "weak", "sir", c.summary.weak_sir);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    for (const auto& cell : split(line, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw IoError(path.string() + ": non-numeric cell '" + cell + "'");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows[0].size())
      throw IoError(path.string() + ": rows have different lengths");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path.string() + ": empty matrix");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[32];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

TimeSignal first_channels(const TimeSignal& s, Eigen::Index m) {
  TimeSignal out;
  out.data = s.data.topRows(m);
  out.sample_rate = s.sample_rate;
  return out;
}

// Separated spectrogram (already projected back) to time domain, then scored.
EvalReport score(const Spectrogram& y, const TimeSignal& references, std::size_t filter_len) {
  const TimeSignal est = synthesize(y, references.sample_rate);
  auto rep = bss_eval(references, est, filter_len);
  return rep;
}

std::size_t weakest(const std::vector<double>& variances) {
  return static_cast<std::size_t>(std::min_element(variances.begin(), variances.end()) - variances.begin());
}

struct Task {
  int n_sources;
  int seed_index;
};

std::vector<RunRecord> run_task(const ExperimentPlan& plan, const Task& task,
                                std::vector<ResultRow>& rows) {
  const int K = task.n_sources;
  const std::uint64_t seed = plan.base_seed + static_cast<std::uint64_t>(task.seed_index);
  std::vector<int> mics;
  for (int m : plan.n_mics) {
    if (m >= K) {
      mics.push_back(m);
      continue;
    }
    std::cerr << "warning: skipping n_sources=" << K << " n_mics=" << m << " (fewer mics than sources)\n";
    for (const auto& algo : plan.algorithms)
      rows.push_back({algo, m, K, seed, -1, std::nan(""), std::nan("")});
  }
  std::vector<RunRecord> runs;
  if (mics.empty()) return runs;

  SceneConfig sc = plan.scene;
  sc.n_sources = K;
  sc.n_mics = *std::max_element(mics.begin(), mics.end());
  sc.seed = seed;
  if (sc.variances.size() != static_cast<std::size_t>(K)) sc.variances.clear();
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(K)};
  Rng rng(seq);

  Scene scene;
  if (plan.source_wavs.empty()) {
    scene = mix(sc, rng, plan.stft);
  } else {
    std::vector<std::vector<double>> sources;
    for (int k = 0; k < K; ++k) {
      const auto& path = plan.source_wavs[(static_cast<std::size_t>(task.seed_index) + static_cast<std::size_t>(k)) %
                                          plan.source_wavs.size()];
      const auto w = read_wav(path, sc.sample_rate);
      const auto row = w.data.row(0);
      sources.emplace_back(row.data(), row.data() + row.size());
    }
    scene = mix(sc, sources, rng, plan.stft);
  }
  const std::size_t weak = weakest(sc.source_variances());

  for (int M : mics) {
    const Spectrogram x = analyze(first_channels(scene.mic_signals, M), plan.stft.frame_size, plan.stft.hop);
    for (const auto& algo : plan.algorithms) {
      RunRecord rec{algo, M, K, seed, {}, {}};
      if (algo == "auxiva") {
        const auto res = auxiva_run(x, plan.joint.n_iter, AuxIvaOptions{plan.joint.floor_scale, {}});
        const Spectrogram yp = projection_back(res.demixed, res.demixing, 0);
        rec.report = score(yp.select(select_channels(yp, static_cast<std::size_t>(K))), scene.references,
                           plan.filter_len);
        rec.cost_trace = res.cost_trace;
      } else if (algo == "blinkiva") {
        JointConfig cfg = plan.joint;
        cfg.K = static_cast<std::size_t>(K);
        cfg.on_update = {};
        const auto res = blinkiva_run(x, scene.blinky_power, cfg);
        rec.report = score(projection_back(res.demixed, res.state.W, 0), scene.references, plan.filter_len);
        rec.cost_trace = res.cost_trace;
      } else {
        TimeSignal est(K, scene.references.length(), scene.references.sample_rate);
        for (int k = 0; k < K; ++k) est.data.row(k) = scene.mic_signals.data.row(0);
        const auto crit = pairwise_criteria(scene.references, est, plan.filter_len);
        for (int k = 0; k < K; ++k) {
          rec.report.sdr.push_back(crit.sdr(k, k));
          rec.report.sir.push_back(crit.sir(k, k));
          rec.report.permutation.push_back(static_cast<std::size_t>(k));
        }
      }
      rec.report.weak_source = weak;
      for (int k = 0; k < K; ++k)
        rows.push_back({algo, M, K, seed, k, rec.report.sdr[static_cast<std::size_t>(k)],
                        rec.report.sir[static_cast<std::size_t>(k)]});
      runs.push_back(std::move(rec));
    }
  }
  return runs;
}

}  // namespace

ExperimentResults run_experiment(const ExperimentPlan& plan) {
  plan.validate();
  std::vector<Task> tasks;
  for (int k : plan.n_sources)
    for (int s = 0; s < plan.n_seeds; ++s) tasks.push_back({k, s});

  std::vector<std::vector<ResultRow>> task_rows(tasks.size());
  std::vector<std::vector<RunRecord>> task_runs(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        task_runs[i] = run_task(plan, tasks[i], task_rows[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(plan.threads), tasks.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ExperimentResults res;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    res.rows.insert(res.rows.end(), task_rows[i].begin(), task_rows[i].end());
    for (auto& r : task_runs[i]) res.runs.push_back(std::move(r));
  }
  std::sort(res.rows.begin(), res.rows.end(), canonical_less);
  std::sort(res.runs.begin(), res.runs.end(), [](const RunRecord& a, const RunRecord& b) {
    return std::tie(a.n_sources, a.n_mics, a.algo, a.seed) < std::tie(b.n_sources, b.n_mics, b.algo, b.seed);
  });
  const int weak = static_cast<int>(weakest(plan.scene.variances.empty()
                                                ? std::vector<double>{0.25, 1.0}
                                                : plan.scene.variances));
  res.summaries = summarize_rows(res.rows, weak);

  if (!plan.out_dir.empty()) {
    const std::filesystem::path dir(plan.out_dir);
    std::filesystem::create_directories(dir);
    write_results_csv(dir / "results.csv", res.rows);
    write_summary_csv(dir / "summary.csv", res.summaries);
    nlohmann::json j;
    j["plan"] = plan;
    j["runs"] = nlohmann::json::array();
    for (const auto& r : res.runs)
      j["runs"].push_back({{"algo", r.algo},
                           {"n_mics", r.n_mics},
                           {"n_sources", r.n_sources},
                           {"seed", r.seed},
                           {"report", r.report},
                           {"cost_trace", r.cost_trace}});
    std::ofstream out(dir / "results.json");
    if (!out) throw IoError("cannot write " + (dir / "results.json").string());
    out << j.dump(2) << '\n';
  }
  return res;
}

SeparateOutput separate_files(const SeparateRequest& req) {
  if (req.algo != "auxiva" && req.algo != "blinkiva")
    throw ConfigError("unknown algorithm '" + req.algo + "' (expected auxiva or blinkiva)");
  if (req.mic_wavs.empty()) throw ConfigError("no microphone input given");
  const bool have_blinky = !req.blinky_csv.empty() || !req.blinky_wavs.empty();
  if (req.algo == "blinkiva" && !have_blinky)
    throw ConfigError("blinkiva needs blinky power data (--blinky); use --algo auxiva to separate without it");

  auto stack = [&](const std::vector<std::string>& paths) {
    if (paths.size() == 1) return read_wav(paths[0], req.sample_rate);
    TimeSignal out;
    for (std::size_t i = 0; i < paths.size(); ++i) {
      const auto w = read_wav(paths[i], req.sample_rate);
      if (i == 0) out = TimeSignal(static_cast<Eigen::Index>(paths.size()), w.length(), w.sample_rate);
      if (w.length() != out.length()) throw ConfigError("input length mismatch: " + paths[i]);
      out.data.row(static_cast<Eigen::Index>(i)) = w.data.row(0);
    }
    return out;
  };

  const TimeSignal mics = stack(req.mic_wavs);
  if (req.n_sources < 1 || req.n_sources > static_cast<std::size_t>(mics.channels()))
    throw ConfigError("number of sources must be between 1 and the number of microphones");
  if (req.ref_mic >= mics.channels()) throw ConfigError("reference microphone out of range");
  const Spectrogram x = analyze(mics, req.stft.frame_size, req.stft.hop);
  auto restore = [&](const Spectrogram& y, const DemixingStack& w) {
    return req.ref_mic < 0 ? projection_back_diagonal(y, w)
                           : projection_back(y, w, static_cast<std::size_t>(req.ref_mic));
  };

  SeparateOutput out;
  Spectrogram y;
  std::vector<std::size_t> picked;
  if (req.algo == "blinkiva") {
    Eigen::MatrixXd U;
    if (!req.blinky_csv.empty()) {
      U = read_matrix_csv(req.blinky_csv);
    } else {
      const TimeSignal b = stack(req.blinky_wavs);
      if (b.length() != mics.length()) throw ConfigError("blinky and microphone recordings differ in length");
      U = blinky_signals(b, req.stft);
    }
    JointConfig cfg = req.joint;
    cfg.K = req.n_sources;
    const auto res = blinkiva_run(x, U, cfg);
    y = restore(res.demixed, res.state.W);
    out.cost_trace = res.cost_trace;
    for (std::size_t k = 0; k < req.n_sources; ++k) picked.push_back(k);
  } else {
    const auto res = auxiva_run(x, req.joint.n_iter, AuxIvaOptions{req.joint.floor_scale, {}});
    const Spectrogram yp = restore(res.demixed, res.demixing);
    picked = select_channels(yp, req.n_sources);
    y = yp.select(picked);
    out.cost_trace = res.cost_trace;
  }

  const std::filesystem::path dir(req.out_dir);
  std::filesystem::create_directories(dir);
  const TimeSignal sep = synthesize(y, mics.sample_rate);
  for (Eigen::Index k = 0; k < sep.channels(); ++k) {
    TimeSignal one;
    one.data = sep.data.row(k);
    one.sample_rate = sep.sample_rate;
    const auto path = dir / ("separated_" + std::to_string(k + 1) + ".wav");
    write_wav(path, one);
    out.wavs.push_back(path);
  }

  nlohmann::json report{{"algo", req.algo},
                        {"n_sources", req.n_sources},
                        {"mic_wavs", req.mic_wavs},
                        {"blinky_csv", req.blinky_csv},
                        {"blinky_wavs", req.blinky_wavs},
                        {"frame_size", req.stft.frame_size},
                        {"ref_mic", req.ref_mic},
                        {"joint", req.joint},
                        {"channels", picked},
                        {"cost_trace", out.cost_trace}};
  out.report = dir / "run_report.json";
  std::ofstream rf(out.report);
  if (!rf) throw IoError("cannot write " + out.report.string());
  rf << report.dump(2) << '\n';
  return out;
}

}  // namespace blinky
