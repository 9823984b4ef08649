#include "blinky/auxiva.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "blinky/error.hpp"

namespace blinky {

DemixingStack DemixingStack::identity(std::size_t n_bins, std::size_t n_channels) {
  const auto m = static_cast<Eigen::Index>(n_channels);
  return DemixingStack{std::vector<Eigen::MatrixXcd>(n_bins, Eigen::MatrixXcd::Identity(m, m))};
}

double DemixingStack::max_condition() const {
  double worst = 1.0;
  for (const auto& w : W) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(w);
    const auto& s = svd.singularValues();
    const double c = s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1)
                                           : std::numeric_limits<double>::infinity();
    worst = std::max(worst, c);
  }
  return worst;
}

Spectrogram demix(const Spectrogram& x, const DemixingStack& w) {
  if (w.n_bins() != x.n_bins() || w.n_channels() != x.n_channels())
    throw ConfigError("demixing stack does not match spectrogram shape");
  Spectrogram y(x.n_bins(), x.n_frames(), x.n_channels(), x.frame_size(), x.hop(),
                x.signal_length());
  for (std::size_t f = 0; f < x.n_bins(); ++f) y.bin(f).noalias() = w.W[f] * x.bin(f);
  return y;
}

Eigen::MatrixXcd weighted_covariance(const Eigen::MatrixXcd& x, const Eigen::VectorXd& weight) {
  // Hermitian rank update on x * diag(sqrt(weight)) computes one triangle only.
  const Eigen::MatrixXcd xs = x * weight.cwiseSqrt().cast<cplx>().asDiagonal();
  Eigen::MatrixXcd v = Eigen::MatrixXcd::Zero(x.rows(), x.rows());
  v.selfadjointView<Eigen::Lower>().rankUpdate(xs, 1.0 / static_cast<double>(x.cols()));
  return v.selfadjointView<Eigen::Lower>();
}

std::vector<Eigen::MatrixXcd> weighted_covariances(const Eigen::MatrixXcd& x, const Eigen::MatrixXd& weights) {
  const Eigen::Index m = x.rows();
  const Eigen::Index n = x.cols();
  if (weights.cols() != n) throw ConfigError("weights do not match the frame count");
  // products x_i x_j^* for i <= j, one column per frame
  const Eigen::Index pairs = m * (m + 1) / 2;
  Eigen::MatrixXd zr(pairs, n), zi(pairs, n);
  for (Eigen::Index t = 0; t < n; ++t) {
    Eigen::Index p = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = i; j < m; ++j, ++p) {
        const cplx z = x(i, t) * std::conj(x(j, t));
        zr(p, t) = z.real();
        zi(p, t) = z.imag();
      }
    }
  }
  const Eigen::MatrixXd wt = weights.transpose() / static_cast<double>(n);
  const Eigen::MatrixXd cr = zr * wt;
  const Eigen::MatrixXd ci = zi * wt;
  std::vector<Eigen::MatrixXcd> out(static_cast<std::size_t>(weights.rows()), Eigen::MatrixXcd(m, m));
  for (Eigen::Index k = 0; k < weights.rows(); ++k) {
    auto& v = out[static_cast<std::size_t>(k)];
    Eigen::Index p = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = i; j < m; ++j, ++p) {
        v(i, j) = cplx(cr(p, k), ci(p, k));
        v(j, i) = std::conj(v(i, j));
      }
      v(i, i) = cplx(cr(p - (m - i), k), 0.0);
    }
  }
  return out;
}

double ip_update(Eigen::MatrixXcd& w, const Eigen::MatrixXcd& v, std::size_t k, std::size_t bin) {
  const Eigen::Index m = w.rows();
  const Eigen::MatrixXcd wv = w * v;
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(wv);
  if (!lu.isInvertible())
    throw NumericalError("update singular matrix at f=" + std::to_string(bin) +
                         ", k=" + std::to_string(k));
  Eigen::VectorXcd e = Eigen::VectorXcd::Zero(m);
  e(static_cast<Eigen::Index>(k)) = 1.0;
  Eigen::VectorXcd col = lu.solve(e);
  const double q = (col.adjoint() * v * col)(0, 0).real();
  if (!(q > 0.0) || !std::isfinite(q))
    throw NumericalError("update singular matrix at f=" + std::to_string(bin) +
                         ", k=" + std::to_string(k));
  col /= std::sqrt(q);
  w.row(static_cast<Eigen::Index>(k)) = col.adjoint();
  return (col.adjoint() * v * col)(0, 0).real();
}

void ip_sweep(const Spectrogram& x, DemixingStack& w, const Eigen::MatrixXd& weights,
              const IpObserver& observer, std::size_t iteration) {
  const std::size_t M = x.n_channels();
  std::vector<std::vector<Eigen::MatrixXcd>> cov(x.n_bins());
  for (std::size_t f = 0; f < x.n_bins(); ++f) cov[f] = weighted_covariances(x.bin(f), weights);
  for (std::size_t k = 0; k < M; ++k) {
    for (std::size_t f = 0; f < x.n_bins(); ++f) {
      const double q = ip_update(w.W[f], cov[f][k], k, f);
      if (observer) observer(iteration, k, f, q);
    }
  }
}

namespace {

Eigen::MatrixXd gauss_variances(const Eigen::MatrixXd& power, double n_bins, double floor_scale) {
  const double eps = floor_scale * power.mean() / n_bins;
  return (power / n_bins).cwiseMax(eps);
}

}  // namespace

double auxiva_cost(const Spectrogram& demixed, const DemixingStack& w, double floor_scale) {
  const double F = static_cast<double>(demixed.n_bins());
  const double N = static_cast<double>(demixed.n_frames());
  const Eigen::MatrixXd p = demixed.frame_power();
  const Eigen::MatrixXd r = gauss_variances(p, F, floor_scale);
  double cost = 0.0;
  for (const auto& wf : w.W) cost -= 2.0 * N * std::log(std::abs(wf.determinant()));
  cost += (p.array() / r.array() + F * r.array().log()).sum();
  return cost;
}

AuxIvaResult auxiva_run(const Spectrogram& x, std::size_t n_iter, const AuxIvaOptions& opts) {
  const std::size_t F = x.n_bins();
  const std::size_t M = x.n_channels();
  AuxIvaResult res;
  res.demixing = DemixingStack::identity(F, M);
  res.demixed = x;
  res.cost_trace.push_back(auxiva_cost(res.demixed, res.demixing, opts.floor_scale));

  for (std::size_t it = 0; it < n_iter; ++it) {
    const Eigen::MatrixXd r =
        gauss_variances(res.demixed.frame_power(), static_cast<double>(F), opts.floor_scale);
    ip_sweep(x, res.demixing, r.cwiseInverse(), opts.on_update, it);
    res.demixed = demix(x, res.demixing);
    res.cost_trace.push_back(auxiva_cost(res.demixed, res.demixing, opts.floor_scale));
  }
  return res;
}

std::vector<std::size_t> select_channels(const Spectrogram& demixed, std::size_t k) {
  if (k > demixed.n_channels()) throw ConfigError("cannot select more channels than available");
  const Eigen::VectorXd power = demixed.frame_power().rowwise().sum();
  std::vector<std::size_t> idx(demixed.n_channels());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return power(static_cast<Eigen::Index>(a)) > power(static_cast<Eigen::Index>(b));
  });
  idx.resize(k);
  return idx;
}

}  // namespace blinky
