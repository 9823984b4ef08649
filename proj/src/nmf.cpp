#include "blinky/nmf.hpp"

#include <cmath>

#include "blinky/error.hpp"

namespace blinky {

namespace {

void check_shapes(const Eigen::MatrixXd& U, const Eigen::MatrixXd& G, const Eigen::MatrixXd& R_K) {
  if (G.rows() != U.rows() || G.cols() != R_K.rows() || R_K.cols() != U.cols())
    throw ConfigError("NMF shape mismatch");
}

void apply_floor(Eigen::MatrixXd& x) {
  const double floor = kNmfFloor * x.mean();
  x = x.cwiseMax(floor);
}

// Elementwise inverse that maps zeros to zero (rows of G R with no support).
Eigen::ArrayXXd safe_inverse(const Eigen::ArrayXXd& x) {
  return (x > 0.0).select(x.inverse(), 0.0);
}

}  // namespace

Eigen::MatrixXd update_G(const Eigen::MatrixXd& U, const Eigen::MatrixXd& G,
                         const Eigen::MatrixXd& R_K, double n_bins) {
  check_shapes(U, G, R_K);
  const Eigen::ArrayXXd gr = (G * R_K).array();
  if (!((gr > 0.0).all() && gr.allFinite())) throw NumericalError("degenerate NMF state");
  const Eigen::ArrayXXd inv = gr.inverse();
  const Eigen::MatrixXd a = (U.array() / (2.0 * n_bins) * inv.square()).matrix();
  const Eigen::MatrixXd num = a * R_K.transpose();
  const Eigen::MatrixXd den = inv.matrix() * R_K.transpose();
  if (!((den.array() > 0.0).all() && den.allFinite())) throw NumericalError("degenerate NMF state");
  Eigen::MatrixXd out = (G.array() * (num.array() / den.array()).sqrt()).matrix();
  apply_floor(out);
  return out;
}

Eigen::MatrixXd update_R_coupled(const Eigen::MatrixXd& U, const Eigen::MatrixXd& G,
                                 const Eigen::MatrixXd& R_K, const Eigen::MatrixXd& P_K,
                                 double n_bins) {
  check_shapes(U, G, R_K);
  if (P_K.rows() != R_K.rows() || P_K.cols() != R_K.cols()) throw ConfigError("NMF shape mismatch");
  if (!((R_K.array() > 0.0).all() && R_K.allFinite())) throw NumericalError("degenerate NMF state");
  const Eigen::ArrayXXd inv = safe_inverse((G * R_K).array());
  const Eigen::MatrixXd a = (U.array() / (2.0 * n_bins) * inv.square()).matrix();
  const Eigen::ArrayXXd r = R_K.array();
  const Eigen::ArrayXXd num =
      P_K.array() / n_bins * r.inverse().square() + (G.transpose() * a).array();
  const Eigen::ArrayXXd den = r.inverse() + (G.transpose() * inv.matrix()).array();
  if (!((den > 0.0).all() && den.allFinite())) throw NumericalError("degenerate NMF state");
  Eigen::MatrixXd out = (r * (num / den).sqrt()).matrix();
  apply_floor(out);
  return out;
}

double is_divergence(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ConfigError("divergence shape mismatch");
  if (!((a.array() > 0.0).all() && (b.array() > 0.0).all()))
    throw ConfigError("IS divergence needs positive entries");
  const Eigen::ArrayXXd q = a.array() / b.array();
  return (q - q.log() - 1.0).sum();
}

double is_divergence_stacked(const Eigen::MatrixXd& U, const Eigen::MatrixXd& P_K,
                             const Eigen::MatrixXd& G, const Eigen::MatrixXd& R_K, double n_bins) {
  check_shapes(U, G, R_K);
  const Eigen::Index B = U.rows();
  const Eigen::Index K = R_K.rows();
  Eigen::MatrixXd target(B + K, U.cols());
  target << U / 2.0, P_K;
  target /= n_bins;
  Eigen::MatrixXd stacked(B + K, K);
  stacked << G, Eigen::MatrixXd::Identity(K, K);
  return is_divergence(target, stacked * R_K);
}

}  // namespace blinky
