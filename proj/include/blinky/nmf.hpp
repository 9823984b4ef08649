#pragma once

#include <cstddef>

#include <Eigen/Dense>

namespace blinky {

/// Nonnegative factors of the joint model.
///   U: B x N blinky power        G: B x K gains
///   R: M x N source variances    P: M x N demixed frame power
/// The first K rows of R and P (R_K, P_K) are coupled to the blinkies through
/// U ~ 2F * G R_K.
struct PowerMatrices {
  Eigen::MatrixXd U;
  Eigen::MatrixXd G;
  Eigen::MatrixXd R;
  Eigen::MatrixXd P;
  std::size_t K = 0;

  auto R_K() { return R.topRows(static_cast<Eigen::Index>(K)); }
  auto R_K() const { return R.topRows(static_cast<Eigen::Index>(K)); }
  auto P_K() const { return P.topRows(static_cast<Eigen::Index>(K)); }
};

/// Relative floor applied to G and R_K after each multiplicative update.
inline constexpr double kNmfFloor = 1e-12;

/// Multiplicative IS-NMF update of the gains:
///   G <- G .* ( ((U / 2F) .* (G R)^-2) R^T ./ ((G R)^-1 R^T) )^(1/2)
/// Throws NumericalError("degenerate NMF state") on a zero denominator.
Eigen::MatrixXd update_G(const Eigen::MatrixXd& U, const Eigen::MatrixXd& G,
                         const Eigen::MatrixXd& R_K, double n_bins);

/// Multiplicative update of the coupled variances:
///   R <- R .* ( (P/F .* R^-2 + G^T ((U / 2F) .* (G R)^-2)) ./ (R^-1 + G^T (G R)^-1) )^(1/2)
/// Rows b of G that are entirely zero drop out of the blinky terms, so G = 0
/// gives R <- (R .* P / F)^(1/2).
Eigen::MatrixXd update_R_coupled(const Eigen::MatrixXd& U, const Eigen::MatrixXd& G,
                                 const Eigen::MatrixXd& R_K, const Eigen::MatrixXd& P_K,
                                 double n_bins);

/// Itakura-Saito divergence D(A | B) = sum (a/b - log(a/b) - 1). Entries must be positive.
double is_divergence(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// D_IS(U~ | G~ R_K) with U~ = (1/F) [U/2 ; P_K] and G~ = [G ; I_K].
/// F times this value equals the NMF-dependent part of the joint cost up to a constant.
double is_divergence_stacked(const Eigen::MatrixXd& U, const Eigen::MatrixXd& P_K,
                             const Eigen::MatrixXd& G, const Eigen::MatrixXd& R_K, double n_bins);

}  // namespace blinky
