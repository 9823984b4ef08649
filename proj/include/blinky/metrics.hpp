#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <json.hpp>

#include "blinky/stft.hpp"

namespace blinky {

/// Decibel values are capped to this magnitude.
inline constexpr double kDbCap = 100.0;

/// Separation quality of K estimates against K references.
/// Entry j of sdr/sir refers to reference j, which is matched to estimate
/// permutation[j].
struct EvalReport {
  std::vector<double> sdr;
  std::vector<double> sir;
  std::vector<std::size_t> permutation;
  std::optional<std::size_t> weak_source;  // reference index of the weak source, if any
};

void to_json(nlohmann::json& j, const EvalReport& r);

/// Pairwise criteria before permutation resolution: entry (j, i) compares
/// estimate i against reference j.
struct PairwiseCriteria {
  Eigen::MatrixXd sdr;
  Eigen::MatrixXd sir;
};

/// Decomposes every estimate against every reference with `filter_len`-tap
/// least-squares projections:
///   s_target = projection on delayed copies of reference j
///   e_interf = projection on all references - s_target
///   e_artif  = estimate - projection on all references
PairwiseCriteria pairwise_criteria(const TimeSignal& references, const TimeSignal& estimates,
                                   std::size_t filter_len = 512);

/// Global bss_eval SDR and SIR. The permutation maximizes the mean SIR over
/// all K! assignments. Throws ConfigError on shape mismatch or a silent reference.
EvalReport bss_eval(const TimeSignal& references, const TimeSignal& estimates,
                    std::size_t filter_len = 512);

/// Quantile with linear interpolation between order statistics at
/// position p * (n - 1), the same rule as numpy's default.
double quantile(std::vector<double> values, double p);

struct Quartiles {
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  std::size_t count = 0;
};

Quartiles quartiles(const std::vector<double>& values);

struct Summary {
  Quartiles sdr;
  Quartiles sir;
  Quartiles weak_sdr;  // count 0 when no report flags a weak source
  Quartiles weak_sir;
};

/// Pools every source of every report; the weak-source statistics pool only
/// each report's flagged weak source. Throws ConfigError on empty input.
Summary summarize(const std::vector<EvalReport>& reports);

}  // namespace blinky
