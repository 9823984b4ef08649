#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "blinky/stft.hpp"

namespace blinky {

/// Per-frequency M x M demixing matrices. Row k of W_f is w_fk^H, so that
/// y_fn = W_f x_fn.
struct DemixingStack {
  std::vector<Eigen::MatrixXcd> W;

  static DemixingStack identity(std::size_t n_bins, std::size_t n_channels);

  std::size_t n_bins() const { return W.size(); }
  std::size_t n_channels() const { return W.empty() ? 0 : static_cast<std::size_t>(W[0].rows()); }

  /// Largest 2-norm condition number over all bins.
  double max_condition() const;
};

/// Y = W X bin by bin.
Spectrogram demix(const Spectrogram& x, const DemixingStack& w);

/// Observer called after each IP update with (iteration, k, f, w^H V w).
using IpObserver = std::function<void(std::size_t, std::size_t, std::size_t, double)>;

/// Weighted covariance V = (1/N) sum_n weight[n] x_n x_n^H of the M x N block X.
Eigen::MatrixXcd weighted_covariance(const Eigen::MatrixXcd& x, const Eigen::VectorXd& weight);

/// weighted_covariance for every row of `weights` (K x N) at once.
std::vector<Eigen::MatrixXcd> weighted_covariances(const Eigen::MatrixXcd& x, const Eigen::MatrixXd& weights);

/// IP updates of all rows k = 0..M-1 at every bin, k outer and f inner,
/// with V_fk built from `weights` row k. Shared by both separation algorithms.
void ip_sweep(const Spectrogram& x, DemixingStack& w, const Eigen::MatrixXd& weights,
              const IpObserver& observer = {}, std::size_t iteration = 0);

/// One iterative-projection step on row k of W:
///   w <- (W V)^{-1} e_k,  w <- w / sqrt(w^H V w),  row k of W <- w^H.
/// Returns w^H V w after normalization. Throws NumericalError
/// ("update singular matrix") when W V cannot be inverted; `bin` only
/// labels the message.
double ip_update(Eigen::MatrixXcd& w, const Eigen::MatrixXcd& v, std::size_t k, std::size_t bin = 0);

/// Time-varying Gaussian source model: r_kn = max(eps, ||y_kn||^2 / F),
/// with eps = floor_scale * mean(P) / F, and IP weights 1 / r_kn.
struct AuxIvaOptions {
  double floor_scale = 1e-10;
  IpObserver on_update;
};

struct AuxIvaResult {
  Spectrogram demixed;
  DemixingStack demixing;
  std::vector<double> cost_trace;  // surrogate cost after each iteration, entry 0 at the start
};

/// AuxIVA cost: -2N sum_f log|det W_f| + sum_{k,n} (P_kn / r_kn + F log r_kn)
/// with r_kn = max(eps, P_kn / F) taken from the demixed power P.
double auxiva_cost(const Spectrogram& demixed, const DemixingStack& w, double floor_scale = 1e-10);

AuxIvaResult auxiva_run(const Spectrogram& x, std::size_t n_iter, const AuxIvaOptions& opts = {});

/// Indices of the K channels with the largest total power, in descending power order.
std::vector<std::size_t> select_channels(const Spectrogram& demixed, std::size_t k);

}  // namespace blinky
