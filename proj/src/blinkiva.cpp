#include "blinky/blinkiva.hpp"

#include <cmath>
#include <random>
#include <string>

#include "blinky/error.hpp"

namespace blinky {

void JointConfig::validate(std::size_t n_channels) const {
  if (nmf_sub_iter < 1) throw ConfigError("nmf_sub_iter must be at least 1");
  if (K < 1 || K > n_channels) throw ConfigError("K must satisfy 1 <= K <= M");
  if (!(floor_scale >= 0.0)) throw ConfigError("floor_scale must be nonnegative");
}

void to_json(nlohmann::json& j, const JointConfig& c) {
  j = nlohmann::json{{"n_iter", c.n_iter},
                     {"nmf_sub_iter", c.nmf_sub_iter},
                     {"K", c.K},
                     {"floor_scale", c.floor_scale},
                     {"seed", c.seed},
                     {"flat_iters", c.flat_iters}};
}

void from_json(const nlohmann::json& j, JointConfig& c) {
  JointConfig d;
  c.n_iter = j.value("n_iter", d.n_iter);
  c.nmf_sub_iter = j.value("nmf_sub_iter", d.nmf_sub_iter);
  c.K = j.value("K", d.K);
  c.floor_scale = j.value("floor_scale", d.floor_scale);
  c.seed = j.value("seed", d.seed);
  c.flat_iters = j.value("flat_iters", d.flat_iters);
}

double JointState::floor() const { return floor_scale * pm.P.mean() / n_bins(); }

JointCostTerms cost_terms(const JointState& s) {
  const double F = s.n_bins();
  const double N = static_cast<double>(s.Y.n_frames());
  const auto& pm = s.pm;
  JointCostTerms t;
  for (const auto& wf : s.W.W) t.log_det -= 2.0 * N * std::log(std::abs(wf.determinant()));
  if (!(pm.R.array() > 0.0).all()) throw NumericalError("nonpositive source variance in cost");
  t.sources = (pm.P.array() / pm.R.array() + F * pm.R.array().log()).sum();
  const Eigen::ArrayXXd mixvar = (pm.G * pm.R_K()).array();
  if (!(mixvar > 0.0).all()) throw NumericalError("nonpositive mixture variance in cost");
  t.blinkies = (F * mixvar.log() + pm.U.array() / (2.0 * mixvar)).sum();
  return t;
}

double cost_J(const JointState& state) { return cost_terms(state).total(); }

double cost_nmf_part(const JointState& s) {
  const double F = s.n_bins();
  const auto& pm = s.pm;
  const Eigen::ArrayXXd r = pm.R_K().array();
  const Eigen::ArrayXXd mixvar = (pm.G * pm.R_K()).array();
  return (pm.P_K().array() / r + F * r.log()).sum() +
         (F * mixvar.log() + pm.U.array() / (2.0 * mixvar)).sum();
}

Eigen::MatrixXd update_uncoupled_variances(const Eigen::MatrixXd& P, std::size_t K, double n_bins,
                                           double eps) {
  const Eigen::Index rest = P.rows() - static_cast<Eigen::Index>(K);
  if (rest < 0) throw ConfigError("K exceeds the number of channels");
  return (P.bottomRows(rest) / n_bins).cwiseMax(eps);
}

void rescale(JointState& s) {
  auto& pm = s.pm;
  const Eigen::VectorXd lambda = pm.R.rowwise().mean();
  if (!((lambda.array() > 0.0).all() && lambda.allFinite()))
    throw NumericalError("rescale: zero row mean in R");
  const Eigen::VectorXd inv = lambda.cwiseInverse();
  const Eigen::VectorXcd inv_sqrt = inv.cwiseSqrt().cast<cplx>();
  const auto K = static_cast<Eigen::Index>(pm.K);
  pm.R = inv.asDiagonal() * pm.R;
  pm.P = inv.asDiagonal() * pm.P;
  pm.G = pm.G * lambda.head(K).asDiagonal();
  for (auto& wf : s.W.W) wf = inv_sqrt.asDiagonal() * wf;
  for (std::size_t f = 0; f < s.Y.n_bins(); ++f) s.Y.bin(f) = inv_sqrt.asDiagonal() * s.Y.bin(f);
}

JointState initialize_joint(const Spectrogram& x, const Eigen::MatrixXd& U, const JointConfig& cfg) {
  cfg.validate(x.n_channels());
  if (static_cast<std::size_t>(U.cols()) != x.n_frames())
    throw ConfigError("blinky matrix has " + std::to_string(U.cols()) + " frames, spectrogram has " +
                      std::to_string(x.n_frames()));
  if (U.rows() < 1) throw ConfigError("blinky matrix has no rows");
  if (!((U.array() >= 0.0).all() && U.allFinite()))
    throw ConfigError("blinky power must be finite and nonnegative");

  JointState s;
  s.floor_scale = cfg.floor_scale;
  s.W = DemixingStack::identity(x.n_bins(), x.n_channels());
  s.Y = x;
  s.pm.K = cfg.K;
  s.pm.U = U;
  s.pm.P = x.frame_power();
  s.pm.R = (s.pm.P / s.n_bins()).cwiseMax(s.floor());
  if (!(s.pm.R.array() > 0.0).all()) throw NumericalError("input spectrogram is silent");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  const double k = static_cast<double>(cfg.K);
  s.pm.G.resize(U.rows(), static_cast<Eigen::Index>(cfg.K));
  for (Eigen::Index b = 0; b < s.pm.G.rows(); ++b)
    for (Eigen::Index j = 0; j < s.pm.G.cols(); ++j) s.pm.G(b, j) = unif(rng) / k;
  return s;
}

void nmf_phase(JointState& s, std::size_t sub_iter, double eps) {
  auto& pm = s.pm;
  const double F = s.n_bins();
  const auto K = static_cast<Eigen::Index>(pm.K);
  for (std::size_t i = 0; i < sub_iter; ++i) {
    Eigen::MatrixXd rk = update_R_coupled(pm.U, pm.G, pm.R_K(), pm.P_K(), F);
    pm.R.topRows(K) = rk.cwiseMax(eps);
    pm.G = update_G(pm.U, pm.G, pm.R_K(), F);
  }
}

void uncoupled_phase(JointState& s, double eps, bool time_invariant) {
  auto& pm = s.pm;
  const auto rest = pm.R.rows() - static_cast<Eigen::Index>(pm.K);
  if (rest <= 0) return;
  pm.R.bottomRows(rest) = update_uncoupled_variances(pm.P, pm.K, s.n_bins(), eps);
  if (time_invariant) {
    for (Eigen::Index k = pm.R.rows() - rest; k < pm.R.rows(); ++k)
      pm.R.row(k).setConstant(pm.R.row(k).mean());
  }
}

void ip_phase(const Spectrogram& x, JointState& s, double eps, const IpObserver& observer,
              std::size_t iteration) {
  ip_sweep(x, s.W, s.pm.R.cwiseMax(eps).cwiseInverse(), observer, iteration);
}

void demix_phase(const Spectrogram& x, JointState& s) {
  s.Y = demix(x, s.W);
  s.pm.P = s.Y.frame_power();
}

void to_json(nlohmann::json& j, const SeparationResult& r) {
  const auto& pm = r.state.pm;
  auto matrix = [](const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      std::vector<double> row(static_cast<std::size_t>(m.cols()));
      for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(i, c);
      rows.push_back(row);
    }
    return rows;
  };
  nlohmann::json w = nlohmann::json::array();
  for (const auto& wf : r.state.W.W)
    w.push_back({{"real", matrix(wf.real())}, {"imag", matrix(wf.imag())}});
  j = nlohmann::json{{"K", pm.K},
                     {"cost_trace", r.cost_trace},
                     {"G", matrix(pm.G)},
                     {"R", matrix(pm.R)},
                     {"W", std::move(w)}};
}

SeparationResult blinkiva_run(const Spectrogram& x, const Eigen::MatrixXd& U, const JointConfig& cfg) {
  SeparationResult res;
  auto& s = res.state;
  s = initialize_joint(x, U, cfg);
  res.cost_trace.push_back(cost_J(s));
  for (std::size_t it = 0; it < cfg.n_iter; ++it) {
    const double eps = s.floor();
    nmf_phase(s, cfg.nmf_sub_iter, eps);
    uncoupled_phase(s, eps, it < cfg.flat_iters);
    ip_phase(x, s, eps, cfg.on_update, it);
    demix_phase(x, s);
    rescale(s);
    res.cost_trace.push_back(cost_J(s));
  }
  std::vector<std::size_t> coupled(cfg.K);
  for (std::size_t k = 0; k < cfg.K; ++k) coupled[k] = k;
  res.demixed = s.Y.select(coupled);
  return res;
}

namespace {

// Scales channel k of y by (W_f^-1)(ref(k), k).
template <typename Ref>
Spectrogram project(const Spectrogram& y, const DemixingStack& w, Ref ref) {
  if (w.n_bins() != y.n_bins()) throw ConfigError("projection back: bin count mismatch");
  if (y.n_channels() > w.n_channels()) throw ConfigError("projection back: too many channels");
  Spectrogram out = y;
  for (std::size_t f = 0; f < y.n_bins(); ++f) {
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(w.W[f]);
    if (!lu.isInvertible())
      throw NumericalError("projection back: singular demixing matrix at f=" + std::to_string(f));
    const Eigen::MatrixXcd a = lu.inverse();
    for (std::size_t k = 0; k < y.n_channels(); ++k)
      out.bin(f).row(static_cast<Eigen::Index>(k)) *=
          a(static_cast<Eigen::Index>(ref(k)), static_cast<Eigen::Index>(k));
  }
  return out;
}

}  // namespace

Spectrogram projection_back(const Spectrogram& y, const DemixingStack& w, std::size_t channel) {
  if (channel >= w.n_channels()) throw ConfigError("projection back: reference channel out of range");
  return project(y, w, [channel](std::size_t) { return channel; });
}

Spectrogram projection_back_diagonal(const Spectrogram& y, const DemixingStack& w) {
  return project(y, w, [](std::size_t k) { return k; });
}

}  // namespace blinky
