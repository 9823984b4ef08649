// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <blinky/auxiva.hpp>
#include <blinky/blinkiva.hpp>
#include <blinky/experiment.hpp>
#include <blinky/metrics.hpp>
#include <blinky/nmf.hpp>
#include <blinky/scene.hpp>
#include <blinky/stft.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

using namespace blinky;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

Eigen::MatrixXd uniform(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> ud(lo, hi);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = ud(rng);
  return m;
}

Eigen::MatrixXcd gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXcd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = {nd(rng), nd(rng)};
  return m;
}

TimeSignal noise_signal(Eigen::Index ch, Eigen::Index n, unsigned seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  TimeSignal s(ch, n);
  for (Eigen::Index c = 0; c < ch; ++c)
    for (Eigen::Index t = 0; t < n; ++t) s.data(c, t) = nd(rng);
  return s;
}

JointState random_state(std::size_t F, std::size_t N, std::size_t M, std::size_t K, std::size_t B,
                        unsigned seed) {
  std::mt19937_64 rng(seed);
  Spectrogram x(F, N, M, 2 * (F - 1), F - 1);
  for (std::size_t f = 0; f < F; ++f) x.bin(f) = gaussian(M, N, rng);
  JointState s;
  s.W = DemixingStack::identity(F, M);
  for (auto& wf : s.W.W) wf = gaussian(M, M, rng) + 2.0 * Eigen::MatrixXcd::Identity(M, M);
  s.Y = demix(x, s.W);
  s.pm.K = K;
  s.pm.P = s.Y.frame_power();
  s.pm.R = uniform(M, N, rng, 0.1, 2.0);
  s.pm.G = uniform(B, K, rng, 0.1, 2.0);
  s.pm.U = uniform(B, N, rng, 1.0, 50.0);
  return s;
}

// 1. STFT round trip on 20 s of noise.
Outcome stft_round_trip() {
  const auto x = noise_signal(1, 20 * 16000, 1);
  const auto t0 = Clock::now();
  const auto y = synthesize(analyze(x, 4096, 2048));
  const double secs = seconds_since(t0);
  const Eigen::Index m = 4096;
  const double err =
      (x.data.middleCols(m, x.length() - 2 * m) - y.data.middleCols(m, y.length() - 2 * m)).cwiseAbs().maxCoeff();
  return {err <= 1e-10 && secs < 1.0, fmt("interior max error %.3g, %.3f s", err, secs)};
}

double grid_minimum(const Eigen::MatrixXd& U, const Eigen::MatrixXd& P, double F) {
  auto eval = [&](double r1, double r2) {
    Eigen::MatrixXd R(1, 2);
    R << r1, r2;
    Eigen::MatrixXd G(2, 1);
    for (int b = 0; b < 2; ++b) G(b, 0) = 0.5 * (U(b, 0) / (2 * F * r1) + U(b, 1) / (2 * F * r2));
    return is_divergence_stacked(U, P, G, R, F);
  };
  double c1 = std::log(P(0, 0) / F), c2 = std::log(P(0, 1) / F), half = 6.0;
  double best = std::numeric_limits<double>::infinity();
  const int n = 200;
  for (int zoom = 0; zoom < 12; ++zoom) {
    double b1 = c1, b2 = c2;
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j) {
        const double l1 = c1 - half + 2 * half * i / n, l2 = c2 - half + 2 * half * j / n;
        const double d = eval(std::exp(l1), std::exp(l2));
        if (d < best) best = d, b1 = l1, b2 = l2;
      }
    c1 = b1, c2 = b2;
    half *= 0.1;
  }
  return best;
}

// 2. NMF monotonicity on 200 instances and a brute-force optimum.
Outcome nmf_monotone() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> dim(1, 8);
  std::size_t steps = 0, violations = 0;
  for (int t = 0; t < 200; ++t) {
    const int B = dim(rng), K = dim(rng), N = dim(rng);
    const double F = 1 + dim(rng) * 10;
    const auto U = uniform(B, N, rng, 0.01, 10.0);
    const auto P = uniform(K, N, rng, 0.01, 10.0);
    Eigen::MatrixXd G = uniform(B, K, rng, 0.1, 2.0), R = uniform(K, N, rng, 0.1, 2.0);
    double prev = is_divergence_stacked(U, P, G, R, F);
    for (int i = 0; i < 100; ++i) {
      R = update_R_coupled(U, G, R, P, F);
      const double mid = is_divergence_stacked(U, P, G, R, F);
      G = update_G(U, G, R, F);
      const double next = is_divergence_stacked(U, P, G, R, F);
      violations += (mid > prev + 1e-9 * std::abs(prev)) + (next > mid + 1e-9 * std::abs(mid));
      steps += 2;
      prev = next;
    }
  }
  double worst_gap = 0.0;
  for (int t = 0; t < 5; ++t) {
    const double F = 3;
    const auto U = uniform(2, 2, rng, 0.5, 5.0);
    const auto P = uniform(1, 2, rng, 0.5, 5.0);
    Eigen::MatrixXd G = uniform(2, 1, rng, 0.1, 2.0), R = uniform(1, 2, rng, 0.1, 2.0);
    for (int i = 0; i < 20000; ++i) {
      R = update_R_coupled(U, G, R, P, F);
      G = update_G(U, G, R, F);
    }
    worst_gap = std::max(worst_gap, std::abs(is_divergence_stacked(U, P, G, R, F) - grid_minimum(U, P, F)));
  }
  const double secs = seconds_since(t0);
  return {violations == 0 && worst_gap <= 1e-4 && secs < 30.0,
          fmt("%zu/%zu increasing steps, grid gap %.2g, %.1f s", violations, steps, worst_gap, secs)};
}

SceneConfig grid_scene() {
  SceneConfig c;  // 20 s, rir 2048 taps, 150 ms decay, B = 6
  c.n_sources = 2;
  c.n_blinkies = 6;
  return c;
}

// 3. Every IP update of a full run is normalized.
Outcome ip_normalization() {
  SceneConfig c = grid_scene();
  c.n_mics = 4;
  Rng rng(3);
  const auto scene = mix(c, rng);
  const auto x = analyze(scene.mic_signals, 4096, 2048);
  JointConfig cfg;
  cfg.K = 2;
  std::size_t calls = 0;
  double worst = 0.0;
  cfg.on_update = [&](std::size_t, std::size_t, std::size_t, double q) {
    ++calls;
    worst = std::max(worst, std::abs(q - 1.0));
  };
  blinkiva_run(x, scene.blinky_power, cfg);
  return {calls == cfg.n_iter * 4 * x.n_bins() && worst <= 1e-8,
          fmt("%zu updates, max |w^H V w - 1| = %.2g", calls, worst)};
}

// 4. Rescaling keeps the cost.
Outcome rescale_invariance() {
  double worst = 0.0;
  for (unsigned seed = 0; seed < 20; ++seed) {
    auto s = random_state(6, 10, 2 + seed % 3, 1 + seed % 2, 3, 400 + seed);
    const double before = cost_J(s);
    rescale(s);
    worst = std::max(worst, std::abs(cost_J(s) - before) / std::abs(before));
  }
  return {worst <= 1e-9, fmt("20 states, max relative change %.2g", worst)};
}

// 5. Finite-difference gradient in the uncoupled variances after their update.
Outcome uncoupled_stationarity() {
  double worst = 0.0;
  for (unsigned seed = 0; seed < 10; ++seed) {
    const std::size_t M = 2 + seed % 3;
    auto s = random_state(5, 6, M, 1, 2, 500 + seed);
    uncoupled_phase(s, 0.0);
    for (Eigen::Index k = 1; k < static_cast<Eigen::Index>(M); ++k)
      for (Eigen::Index n = 0; n < 6; ++n) {
        const double r = s.pm.R(k, n), h = 1e-5 * r;
        auto plus = s, minus = s;
        plus.pm.R(k, n) = r + h;
        minus.pm.R(k, n) = r - h;
        worst = std::max(worst, std::abs((cost_J(plus) - cost_J(minus)) / (2 * h)));
      }
  }
  return {worst <= 1e-6, fmt("max |dJ/dr| = %.2g", worst)};
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

struct GridOutcome {
  Outcome improvement, ordering, weak, trace;
};

// 6 and 7. Desk-scale grid: K = 2, M in {2, 3, 4}, 10 seeds.
GridOutcome separation_grid() {
  ExperimentPlan plan;
  plan.n_sources = {2};
  plan.n_mics = {2, 3, 4};
  plan.algorithms = {"auxiva", "blinkiva", "mixture"};
  plan.n_seeds = 10;
  plan.scene = grid_scene();
  const auto t0 = Clock::now();
  const auto res = run_experiment(plan);
  const double secs = seconds_since(t0);

  using Key = std::tuple<int, std::uint64_t, int>;
  std::map<std::string, std::map<Key, double>> sir;
  for (const auto& r : res.rows) sir[r.algo][Key{r.n_mics, r.seed, r.source_index}] = r.sir_db;

  GridOutcome out;
  out.improvement.detail = fmt("%.0f s;", secs);
  out.ordering.detail = out.weak.detail = "";
  out.improvement.pass = secs < 600.0;
  for (int M : plan.n_mics) {
    std::vector<double> gain, b_all, a_all, b_weak, a_weak;
    for (const auto& [key, v] : sir["blinkiva"]) {
      if (std::get<0>(key) != M) continue;
      gain.push_back(v - sir["mixture"].at(key));
      b_all.push_back(v);
      a_all.push_back(sir["auxiva"].at(key));
      if (std::get<2>(key) == 0) {  // source 0 has variance 0.25
        b_weak.push_back(v);
        a_weak.push_back(sir["auxiva"].at(key));
      }
    }
    const double g = median(gain), b = median(b_all), a = median(a_all), bw = median(b_weak), aw = median(a_weak);
    out.improvement.pass &= g >= 10.0;
    out.ordering.pass &= b >= a;
    out.weak.pass &= bw >= aw;
    out.improvement.detail += fmt(" M=%d %+.2f dB", M, g);
    out.ordering.detail += fmt("%sM=%d %.2f vs %.2f", M == 2 ? "" : ", ", M, b, a);
    out.weak.detail += fmt("%sM=%d %.2f vs %.2f", M == 2 ? "" : ", ", M, bw, aw);
  }
  out.ordering.detail = "blinkiva vs auxiva median SIR: " + out.ordering.detail;
  out.weak.detail = "weak source median SIR: " + out.weak.detail;

  std::size_t steps = 0, up = 0;
  double worst = 0.0;
  for (const auto& run : res.runs) {
    if (run.algo != "blinkiva") continue;
    for (std::size_t i = 1; i < run.cost_trace.size(); ++i) {
      const double prev = run.cost_trace[i - 1], d = run.cost_trace[i] - prev;
      ++steps;
      if (d > 0.0) {
        ++up;
        worst = std::max(worst, d / std::abs(prev));
      }
    }
  }
  const double frac = 1.0 - double(up) / double(steps);
  out.trace = {frac >= 0.95 && worst <= 1e-4,
               fmt("%.2f%% of %zu steps nonincreasing, max relative increase %.2g", 100 * frac, steps, worst)};
  return out;
}

// 8. bss_eval checks.
Outcome bss_eval_checks() {
  bool ok = true;
  double worst_scale = 0.0;
  for (unsigned seed = 0; seed < 8; ++seed) {
    const Eigen::Index K = 1 + seed % 4;
    const auto refs = noise_signal(K, 2000, 800 + seed);
    std::mt19937_64 rng(900 + seed);
    TimeSignal est(K, 2000);
    est.data = uniform(K, K, rng, -1.0, 1.0) * refs.data + noise_signal(K, 2000, 1000 + seed, 0.2).data;
    const auto crit = pairwise_criteria(refs, est, 32);
    const auto rep = bss_eval(refs, est, 32);
    std::vector<std::size_t> perm(static_cast<std::size_t>(K));
    std::iota(perm.begin(), perm.end(), 0);
    double best = -1e300;
    do {
      double s = 0.0;
      for (std::size_t j = 0; j < perm.size(); ++j)
        s += crit.sir(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(perm[j]));
      best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const double got = std::accumulate(rep.sir.begin(), rep.sir.end(), 0.0);
    ok &= std::abs(got - best) <= 1e-9 * std::max(1.0, std::abs(best));

    auto scaled = est;
    scaled.data *= 3.7;
    scaled.data.row(0) *= 1e-2;
    const auto rs = bss_eval(refs, scaled, 32);
    for (std::size_t j = 0; j < rs.sir.size(); ++j)
      worst_scale = std::max({worst_scale, std::abs(rs.sir[j] - rep.sir[j]), std::abs(rs.sdr[j] - rep.sdr[j])});
  }
  const auto ref = noise_signal(1, 16000, 1100);
  auto noisy = ref;
  auto n = noise_signal(1, 16000, 1101);
  n.data *= 0.1 * std::sqrt(ref.data.squaredNorm() / n.data.squaredNorm());
  noisy.data += n.data;
  const double sdr = bss_eval(ref, noisy).sdr[0];
  return {ok && worst_scale <= 1e-6 && std::abs(sdr - 20.0) <= 0.5,
          fmt("brute-force permutations %s, scale drift %.2g dB, -20 dB noise SDR %.2f dB",
              ok ? "match" : "differ", worst_scale, sdr)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 9. Same plan twice, single-threaded, byte-identical CSV.
Outcome determinism() {
  ExperimentPlan plan;
  plan.n_sources = {2};
  plan.n_mics = {2, 3};
  plan.algorithms = {"auxiva", "blinkiva", "mixture"};
  plan.n_seeds = 2;
  plan.scene = grid_scene();
  plan.scene.duration_s = 6.0;
  plan.joint.n_iter = 30;
  plan.threads = 1;
  const auto root = fs::temp_directory_path() / "blinkybss_acceptance";
  fs::remove_all(root);
  plan.out_dir = (root / "a").string();
  run_experiment(plan);
  plan.out_dir = (root / "b").string();
  run_experiment(plan);
  const auto a = slurp(root / "a" / "results.csv"), b = slurp(root / "b" / "results.csv");
  const auto lines = std::count(a.begin(), a.end(), '\n');
  return {!a.empty() && a == b, fmt("%ld lines, %s", static_cast<long>(lines), a == b ? "identical" : "differ")};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](const std::string& name, const Outcome& o) {
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  };
  auto run = [&](const std::string& name, const std::function<Outcome()>& f) {
    try {
      report(name, f());
    } catch (const std::exception& e) {
      report(name, {false, std::string("exception: ") + e.what()});
    }
  };

  run("1 stft round trip", stft_round_trip);
  run("2 nmf monotonicity and optimum", nmf_monotone);
  run("3 ip normalization", ip_normalization);
  run("4 rescale invariance", rescale_invariance);
  run("5 uncoupled variance stationarity", uncoupled_stationarity);
  try {
    const auto g = separation_grid();
    report("6a sir improvement over mixture", g.improvement);
    report("6b blinkiva median sir >= auxiva", g.ordering);
    report("6c weak source median sir", g.weak);
    report("7 cost trace", g.trace);
  } catch (const std::exception& e) {
    for (const char* n : {"6a sir improvement over mixture", "6b blinkiva median sir >= auxiva",
                          "6c weak source median sir", "7 cost trace"})
      report(n, {false, std::string("exception: ") + e.what()});
  }
  run("8 bss_eval", bss_eval_checks);
  run("9 determinism", determinism);
  std::printf("%d criteria failed\n", failed);
  return failed ? 1 : 0;
}
