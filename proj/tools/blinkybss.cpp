// Command line front end: simulate scenes, separate recordings, run
// benchmark sweeps and summarize their results.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "blinky/error.hpp"
#include "blinky/experiment.hpp"
#include "blinky/wav.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw blinky::IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw blinky::ConfigError(path + ": " + e.what());
  }
}

void print_summary(const std::vector<blinky::ConditionSummary>& summaries) {
  std::printf("%-9s %6s %9s %10s %10s %10s %10s\n", "algo", "n_mics", "n_sources", "SDR med", "SIR med",
              "weak SDR", "weak SIR");
  for (const auto& c : summaries)
    std::printf("%-9s %6d %9d %10.2f %10.2f %10.2f %10.2f\n", c.algo.c_str(), c.n_mics, c.n_sources,
                c.summary.sdr.median, c.summary.sir.median, c.summary.weak_sdr.median,
                c.summary.weak_sir.median);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blind source separation with microphones and sound power sensors"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic scene");
  std::string sim_config, sim_out = "scene";
  std::vector<std::string> sim_wavs;
  std::uint64_t sim_seed = 0;
  int sim_sources = 0, sim_mics = 0, sim_blinkies = 0;
  sim->add_option("--config", sim_config, "SceneConfig JSON");
  sim->add_option("--seed", sim_seed, "Scene seed");
  sim->add_option("--sources", sim_sources, "Number of target sources");
  sim->add_option("--mics", sim_mics, "Number of microphones");
  sim->add_option("--blinkies", sim_blinkies, "Number of blinkies");
  sim->add_option("--source-wavs", sim_wavs, "Source recordings (synthetic speech-like sources if omitted)");
  sim->add_option("--out-dir", sim_out, "Output directory");

  // separate
  auto* sep = app.add_subcommand("separate", "Separate microphone recordings");
  blinky::SeparateRequest req;
  std::string sep_config;
  sep->add_option("--mics", req.mic_wavs, "One multichannel WAV or several mono WAVs")->required();
  sep->add_option("--blinky", req.blinky_csv, "Blinky power matrix CSV (B rows x N frames)");
  sep->add_option("--blinky-wavs", req.blinky_wavs, "Blinky sensor recordings");
  sep->add_option("--algo", req.algo, "auxiva or blinkiva")->check(CLI::IsMember({"auxiva", "blinkiva"}));
  sep->add_option("--sources", req.n_sources, "Number of sources to extract");
  sep->add_option("--config", sep_config, "JointConfig JSON");
  sep->add_option("--iters", req.joint.n_iter, "Outer iterations");
  sep->add_option("--nmf-sub-iters", req.joint.nmf_sub_iter, "NMF sub-iterations per outer iteration");
  sep->add_option("--seed", req.joint.seed, "Gain initialization seed");
  sep->add_option("--frame-size", req.stft.frame_size, "STFT frame size");
  sep->add_option("--ref-mic", req.ref_mic, "Projection-back microphone (-1: output k at microphone k)");
  sep->add_option("--out-dir", req.out_dir, "Output directory");

  // bench
  auto* bench = app.add_subcommand("bench", "Run a seeded experiment grid");
  std::string bench_config, bench_out;
  std::vector<int> bench_sources, bench_mics;
  std::vector<std::string> bench_algos;
  int bench_seeds = 0, bench_threads = 0, bench_blinkies = 0;
  std::size_t bench_iters = 0, bench_sub = 0;
  std::uint64_t bench_seed = 0;
  double bench_duration = 0.0;
  bench->add_option("--config", bench_config, "ExperimentPlan JSON");
  bench->add_option("--seed", bench_seed, "Base seed");
  bench->add_option("--seeds", bench_seeds, "Number of seeds per grid point");
  bench->add_option("--sources", bench_sources, "Grid over number of sources");
  bench->add_option("--mics", bench_mics, "Grid over number of microphones");
  bench->add_option("--blinkies", bench_blinkies, "Number of blinkies");
  bench->add_option("--algo", bench_algos, "Algorithms (auxiva, blinkiva, mixture)");
  bench->add_option("--iters", bench_iters, "Outer iterations");
  bench->add_option("--nmf-sub-iters", bench_sub, "NMF sub-iterations");
  bench->add_option("--duration", bench_duration, "Scene duration in seconds");
  bench->add_option("--threads", bench_threads, "Worker threads");
  bench->add_option("--out-dir", bench_out, "Output directory");

  // report
  auto* rep = app.add_subcommand("report", "Summarize a results CSV into plot-ready quartiles");
  std::string rep_in, rep_out;
  int rep_weak = 0;
  rep->add_option("--results", rep_in, "results.csv from bench")->required();
  rep->add_option("--weak-index", rep_weak, "Index of the weak source");
  rep->add_option("--out", rep_out, "Summary CSV path (stdout table only if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*sim) {
      blinky::SceneConfig cfg;
      if (!sim_config.empty()) cfg = load_json(sim_config).get<blinky::SceneConfig>();
      if (sim->count("--seed")) cfg.seed = sim_seed;
      if (sim_sources > 0) cfg.n_sources = sim_sources;
      if (sim_mics > 0) cfg.n_mics = sim_mics;
      if (sim_blinkies > 0) cfg.n_blinkies = sim_blinkies;
      blinky::Rng rng(cfg.seed);
      blinky::Scene scene;
      if (sim_wavs.empty()) {
        scene = blinky::mix(cfg, rng);
      } else {
        std::vector<std::vector<double>> sources;
        for (const auto& p : sim_wavs) {
          const auto w = blinky::read_wav(p, cfg.sample_rate);
          sources.emplace_back(w.data.row(0).data(), w.data.row(0).data() + w.length());
        }
        scene = blinky::mix(cfg, sources, rng);
      }
      const std::filesystem::path dir(sim_out);
      std::filesystem::create_directories(dir);
      blinky::write_wav(dir / "mics.wav", scene.mic_signals);
      blinky::write_wav(dir / "blinky_mics.wav", scene.blinky_mics);
      blinky::write_matrix_csv(dir / "blinky.csv", scene.blinky_power);
      for (Eigen::Index k = 0; k < scene.references.channels(); ++k) {
        blinky::TimeSignal ref;
        ref.data = scene.references.data.row(k);
        ref.sample_rate = scene.references.sample_rate;
        blinky::write_wav(dir / ("reference_" + std::to_string(k + 1) + ".wav"), ref);
      }
      nlohmann::json j = cfg;
      j["noise_variance"] = scene.levels.noise_variance;
      j["interferer_variance"] = scene.levels.interferer_variance;
      std::ofstream(dir / "scene.json") << j.dump(2) << '\n';
      std::cout << "wrote scene to " << dir.string() << '\n';
    } else if (*sep) {
      if (!sep_config.empty()) {
        auto joint = load_json(sep_config).get<blinky::JointConfig>();
        if (sep->count("--iters")) joint.n_iter = req.joint.n_iter;
        if (sep->count("--nmf-sub-iters")) joint.nmf_sub_iter = req.joint.nmf_sub_iter;
        if (sep->count("--seed")) joint.seed = req.joint.seed;
        req.joint = joint;
      }
      req.stft.hop = req.stft.frame_size / 2;
      const auto out = blinky::separate_files(req);
      for (const auto& w : out.wavs) std::cout << "wrote " << w.string() << '\n';
      std::cout << "wrote " << out.report.string() << '\n';
    } else if (*bench) {
      blinky::ExperimentPlan plan;
      if (!bench_config.empty()) plan = load_json(bench_config).get<blinky::ExperimentPlan>();
      if (bench->count("--seed")) plan.base_seed = bench_seed;
      if (bench_seeds > 0) plan.n_seeds = bench_seeds;
      if (!bench_sources.empty()) plan.n_sources = bench_sources;
      if (!bench_mics.empty()) plan.n_mics = bench_mics;
      if (!bench_algos.empty()) plan.algorithms = bench_algos;
      if (bench_blinkies > 0) plan.scene.n_blinkies = bench_blinkies;
      if (bench->count("--iters")) plan.joint.n_iter = bench_iters;
      if (bench_sub > 0) plan.joint.nmf_sub_iter = bench_sub;
      if (bench_duration > 0.0) plan.scene.duration_s = bench_duration;
      if (bench_threads > 0) plan.threads = bench_threads;
      if (!bench_out.empty()) plan.out_dir = bench_out;
      if (plan.out_dir.empty()) plan.out_dir = "bench_out";
      const auto res = blinky::run_experiment(plan);
      print_summary(res.summaries);
    } else if (*rep) {
      const auto rows = blinky::read_results_csv(rep_in);
      const auto summaries = blinky::summarize_rows(rows, rep_weak);
      if (!rep_out.empty()) blinky::write_summary_csv(rep_out, summaries);
      print_summary(summaries);
    }
  } catch (const blinky::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const blinky::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return 0;
}
