#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "blinky/auxiva.hpp"
#include "blinky/nmf.hpp"
#include "blinky/stft.hpp"

namespace blinky {

struct JointConfig {
  std::size_t n_iter = 100;
  std::size_t nmf_sub_iter = 20;
  std::size_t K = 1;            // number of channels coupled to the blinkies
  double floor_scale = 1e-10;   // eps = floor_scale * mean(P) / F
  std::uint64_t seed = 0;       // gain initialization
  std::size_t flat_iters = 10;  // leading iterations with frame-averaged uncoupled rows
  IpObserver on_update;         // called after every IP row update

  void validate(std::size_t n_channels) const;
};

void to_json(nlohmann::json& j, const JointConfig& c);
void from_json(const nlohmann::json& j, JointConfig& c);

/// Free parameters and derived quantities of the joint model.
/// Invariant after every demix step: P = Y.frame_power().
struct JointState {
  DemixingStack W;
  PowerMatrices pm;
  Spectrogram Y;
  double floor_scale = 1e-10;

  double n_bins() const { return static_cast<double>(Y.n_bins()); }
  double floor() const;  // variance floor eps for the current P
};

/// Joint cost split into its three sums. The constant is dropped.
struct JointCostTerms {
  double log_det = 0.0;   // -2N sum_f log|det W_f|
  double sources = 0.0;   // sum_{k,n} P_kn / r_kn + F log r_kn   (all M rows)
  double blinkies = 0.0;  // sum_{b,n} F log (G R_K)_bn + U_bn / (2 (G R_K)_bn)

  double total() const { return log_det + sources + blinkies; }
};

JointCostTerms cost_terms(const JointState& state);

/// Negative log-likelihood of the joint model up to an additive constant.
/// Throws NumericalError on nonpositive variances.
double cost_J(const JointState& state);

/// The part of the cost that the NMF updates act on:
/// sum over k <= K of (P_kn / r_kn + F log r_kn) plus the blinky sum.
double cost_nmf_part(const JointState& state);

/// r_kn = max(eps, P_kn / F) for rows k >= K. Returns the (M - K) x N block.
Eigen::MatrixXd update_uncoupled_variances(const Eigen::MatrixXd& P, std::size_t K,
                                           double n_bins, double eps = 0.0);

/// Fixes the scale indeterminacy with Lambda = diag(mean of each row of R):
///   R <- Lambda^-1 R, G <- G Lambda_K, W_f <- Lambda^-1/2 W_f, P <- Lambda^-1 P
/// (and Y <- Lambda^-1/2 Y). Afterwards every row of R has mean 1.
void rescale(JointState& state);

/// W = I, Y = X, P = |Y|^2 summed over bins, R = max(eps, P / F), G uniform on
/// [0.5, 1.5) / K drawn from cfg.seed.
JointState initialize_joint(const Spectrogram& x, const Eigen::MatrixXd& U, const JointConfig& cfg);

/// Alternating R_K then G updates, `sub_iter` times. R_K is also clamped at eps.
void nmf_phase(JointState& state, std::size_t sub_iter, double eps);

/// Sets rows K..M-1 of R from the current P. With `time_invariant`, each row
/// is set to its mean over frames instead.
void uncoupled_phase(JointState& state, double eps, bool time_invariant = false);

/// IP updates for every k (outer) and f (inner) with weights 1 / max(eps, r_kn).
/// Does not recompute Y.
void ip_phase(const Spectrogram& x, JointState& state, double eps,
              const IpObserver& observer = {}, std::size_t iteration = 0);

/// Y = W X and P = frame power of Y.
void demix_phase(const Spectrogram& x, JointState& state);

struct SeparationResult {
  Spectrogram demixed;             // coupled channels 0..K-1
  JointState state;                // full final state
  std::vector<double> cost_trace;  // entry 0 at initialization, then one per iteration after rescale
};

void to_json(nlohmann::json& j, const SeparationResult& r);

SeparationResult blinkiva_run(const Spectrogram& x, const Eigen::MatrixXd& U, const JointConfig& cfg);

/// Restores the scale of each separated channel at microphone `channel`:
/// y_k[f, :] *= (W_f^-1)(channel, k). Channel c of `y` corresponds to row c of W_f.
Spectrogram projection_back(const Spectrogram& y, const DemixingStack& w, std::size_t channel = 0);

/// Same, but channel k is restored at microphone k: y_k[f, :] *= (W_f^-1)(k, k).
Spectrogram projection_back_diagonal(const Spectrogram& y, const DemixingStack& w);

}  // namespace blinky
