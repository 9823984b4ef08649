#include "blinky/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <unsupported/Eigen/FFT>

#include "blinky/error.hpp"

namespace blinky {

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"sdr", r.sdr}, {"sir", r.sir}, {"permutation", r.permutation}};
  if (r.weak_source)
    j["weak_source"] = *r.weak_source;
  else
    j["weak_source"] = nullptr;
}

namespace {

double safe_db(double num, double den) {
  if (den <= 0.0) return num > 0.0 ? kDbCap : -kDbCap;
  if (num <= 0.0) return -kDbCap;
  return std::clamp(10.0 * std::log10(num / den), -kDbCap, kDbCap);
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

class Spectra {
 public:
  explicit Spectra(std::size_t nfft) : nfft_(nfft) { fft_.SetFlag(Eigen::FFT<double>::HalfSpectrum); }

  std::vector<cplx> forward(const double* x, std::size_t n) {
    std::vector<double> buf(nfft_, 0.0);
    std::copy_n(x, n, buf.begin());
    std::vector<cplx> out;
    fft_.fwd(out, buf);
    return out;
  }

  std::vector<double> inverse(const std::vector<cplx>& spec) {
    std::vector<double> out;
    fft_.inv(out, spec, static_cast<Eigen::Index>(nfft_));
    return out;
  }

  // c(tau) = sum_t a(t) b(t + tau) for tau in (-n, n), from the two spectra.
  std::vector<double> correlation(const std::vector<cplx>& a, const std::vector<cplx>& b) {
    std::vector<cplx> prod(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) prod[i] = std::conj(a[i]) * b[i];
    return inverse(prod);
  }

  double at(const std::vector<double>& corr, std::ptrdiff_t lag) const {
    const auto n = static_cast<std::ptrdiff_t>(nfft_);
    return corr[static_cast<std::size_t>(((lag % n) + n) % n)];
  }

 private:
  std::size_t nfft_;
  Eigen::FFT<double> fft_;
};

}  // namespace

PairwiseCriteria pairwise_criteria(const TimeSignal& references, const TimeSignal& estimates,
                                   std::size_t filter_len) {
  const auto K = static_cast<std::size_t>(references.channels());
  const auto T = static_cast<std::size_t>(references.length());
  if (K == 0) throw ConfigError("bss_eval needs at least one reference");
  if (static_cast<std::size_t>(estimates.channels()) != K)
    throw ConfigError("bss_eval: reference and estimate counts differ");
  if (static_cast<std::size_t>(estimates.length()) != T)
    throw ConfigError("bss_eval: reference and estimate lengths differ");
  if (filter_len == 0 || filter_len > T) throw ConfigError("bss_eval: invalid filter length");
  for (std::size_t j = 0; j < K; ++j)
    if (references.data.row(static_cast<Eigen::Index>(j)).squaredNorm() == 0.0)
      throw ConfigError("bss_eval: reference " + std::to_string(j) + " has zero energy");

  const std::size_t L = filter_len;
  const std::size_t padded = T + L - 1;
  Spectra fft(next_pow2(padded));

  std::vector<std::vector<cplx>> ref_spec, est_spec;
  for (std::size_t j = 0; j < K; ++j)
    ref_spec.push_back(fft.forward(references.data.row(static_cast<Eigen::Index>(j)).data(), T));
  for (std::size_t i = 0; i < K; ++i)
    est_spec.push_back(fft.forward(estimates.data.row(static_cast<Eigen::Index>(i)).data(), T));

  // Gram matrix of all delayed references: block (i, j) is Toeplitz in c_ij(a - b).
  const auto KL = static_cast<Eigen::Index>(K * L);
  Eigen::MatrixXd gram(KL, KL);
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = 0; j < K; ++j) {
      const auto c = fft.correlation(ref_spec[i], ref_spec[j]);
      for (std::size_t a = 0; a < L; ++a)
        for (std::size_t b = 0; b < L; ++b)
          gram(static_cast<Eigen::Index>(i * L + a), static_cast<Eigen::Index>(j * L + b)) =
              fft.at(c, static_cast<std::ptrdiff_t>(a) - static_cast<std::ptrdiff_t>(b));
    }
  }
  const double reg = 1e-10 * gram.trace();
  Eigen::MatrixXd gram_all = gram;
  gram_all.diagonal().array() += reg;
  const Eigen::LLT<Eigen::MatrixXd> llt_all(gram_all);
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llt_single;
  for (std::size_t j = 0; j < K; ++j) {
    const auto o = static_cast<Eigen::Index>(j * L);
    const auto l = static_cast<Eigen::Index>(L);
    Eigen::MatrixXd g = gram.block(o, o, l, l);
    g.diagonal().array() += 1e-10 * g.trace();
    llt_single.emplace_back(g);
  }
  if (llt_all.info() != Eigen::Success) throw NumericalError("bss_eval: reference Gram matrix is singular");

  // Every energy follows from the coefficients: a filtered sum sum_i c_i * s_i
  // has energy c^T G c, and its inner product with the estimate is c^T rhs.
  PairwiseCriteria crit{Eigen::MatrixXd(K, K), Eigen::MatrixXd(K, K)};
  for (std::size_t i = 0; i < K; ++i) {
    Eigen::VectorXd rhs(KL);
    for (std::size_t j = 0; j < K; ++j) {
      const auto c = fft.correlation(ref_spec[j], est_spec[i]);
      for (std::size_t a = 0; a < L; ++a)
        rhs(static_cast<Eigen::Index>(j * L + a)) = fft.at(c, static_cast<std::ptrdiff_t>(a));
    }
    const double e_est = estimates.data.row(static_cast<Eigen::Index>(i)).squaredNorm();
    const Eigen::VectorXd c_all = llt_all.solve(rhs);
    const Eigen::VectorXd g_all = gram * c_all;
    const double e_all = c_all.dot(g_all);
    for (std::size_t j = 0; j < K; ++j) {
      const auto o = static_cast<Eigen::Index>(j * L);
      const auto l = static_cast<Eigen::Index>(L);
      const Eigen::VectorXd c_j = llt_single[j].solve(rhs.segment(o, l));
      const double e_target = c_j.dot(gram.block(o, o, l, l) * c_j);
      // ||P_all - P_j||^2 and ||e - P_j||^2
      const double e_interf = std::max(0.0, e_all - 2.0 * c_j.dot(g_all.segment(o, l)) + e_target);
      const double e_distort = std::max(0.0, e_est - 2.0 * c_j.dot(rhs.segment(o, l)) + e_target);
      crit.sdr(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = safe_db(e_target, e_distort);
      crit.sir(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = safe_db(e_target, e_interf);
    }
  }
  return crit;
}

EvalReport bss_eval(const TimeSignal& references, const TimeSignal& estimates, std::size_t filter_len) {
  const auto crit = pairwise_criteria(references, estimates, filter_len);
  const auto K = static_cast<std::size_t>(crit.sir.rows());
  std::vector<std::size_t> perm(K);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::size_t> best = perm;
  double best_score = -std::numeric_limits<double>::infinity();
  do {
    double score = 0.0;
    for (std::size_t j = 0; j < K; ++j)
      score += crit.sir(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(perm[j]));
    if (score > best_score) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  EvalReport rep;
  rep.permutation = best;
  for (std::size_t j = 0; j < K; ++j) {
    rep.sdr.push_back(crit.sdr(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(best[j])));
    rep.sir.push_back(crit.sir(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(best[j])));
  }
  return rep;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw ConfigError("quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

Quartiles quartiles(const std::vector<double>& values) {
  if (values.empty()) return {};
  return {quantile(values, 0.25), quantile(values, 0.5), quantile(values, 0.75), values.size()};
}

Summary summarize(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ConfigError("summarize needs at least one report");
  std::vector<double> sdr, sir, wsdr, wsir;
  for (const auto& r : reports) {
    sdr.insert(sdr.end(), r.sdr.begin(), r.sdr.end());
    sir.insert(sir.end(), r.sir.begin(), r.sir.end());
    if (r.weak_source && *r.weak_source < r.sdr.size()) {
      wsdr.push_back(r.sdr[*r.weak_source]);
      wsir.push_back(r.sir[*r.weak_source]);
    }
  }
  return {quartiles(sdr), quartiles(sir), quartiles(wsdr), quartiles(wsir)};
}

}  // namespace blinky
