#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "blinky/stft.hpp"

namespace blinky {

using Rng = std::mt19937_64;

struct StftParams {
  std::size_t frame_size = 4096;
  std::size_t hop = 2048;
};

/// Mixing specification of a synthetic scene.
struct SceneConfig {
  int n_sources = 2;      // K
  int n_mics = 2;         // M
  int n_blinkies = 6;     // B
  int n_interferers = 10; // Q
  std::vector<double> variances;  // empty: 0.25 for the first source, 1 for the rest
  double snr_db = 60.0;
  double sinr_db = 10.0;  // +inf disables interferers
  int rir_length = 2048;
  double rir_decay_ms = 150.0;
  std::uint64_t seed = 0;
  double duration_s = 20.0;
  double sample_rate = 16000.0;

  /// Per-source target variances with the default profile filled in.
  std::vector<double> source_variances() const;

  /// Throws ConfigError on violated invariants.
  void validate(const StftParams& stft = {}) const;
};

void to_json(nlohmann::json& j, const SceneConfig& c);
void from_json(const nlohmann::json& j, SceneConfig& c);

/// Noise and per-interferer variances meeting the SNR and SINR targets.
struct NoiseLevels {
  double noise_variance = 0.0;       // sigma_n^2
  double interferer_variance = 0.0;  // sigma_i^2, zero when interferers are disabled
};

/// Solves
///   SNR  = (1/K) sum_k s_k / sigma_n^2
///   SINR = sum_k s_k / (Q sigma_i^2 + sigma_n^2)
/// for the noise and interferer variances. Throws ConfigError("infeasible SINR")
/// when sigma_i^2 would be nonpositive.
NoiseLevels calibrate_levels(const SceneConfig& config);

struct Scene {
  std::vector<TimeSignal> premix_images;  // per target, M channels
  TimeSignal mic_signals;                 // M channels
  TimeSignal blinky_mics;                 // B channels, the simulated sensor microphones
  Eigen::MatrixXd blinky_power;           // U, B x N
  TimeSignal references;                  // K channels, target images at microphone 1
  NoiseLevels levels;
};

/// Synthetic room impulse response: a unit tap at `delay` followed by
/// zero-mean Gaussian taps under the envelope exp(-(t - delay) / tau), with tau
/// placing the -60 dB amplitude point at `decay_ms`. `tail_gain` is the
/// envelope amplitude next to the direct tap; the default gives a tail of
/// roughly half the direct energy at 150 ms.
std::vector<double> generate_rir(double decay_ms, std::size_t length, std::size_t delay, Rng& rng,
                                 double sample_rate = 16000.0, double tail_gain = 0.054);

/// Speech-like test source: resonant colored noise under a random
/// syllabic envelope with silent gaps, unit mean power.
std::vector<double> speech_like_source(std::size_t length, double sample_rate, Rng& rng);

/// Stationary noise with the same spectral coloring as speech_like_source.
std::vector<double> speech_shaped_noise(std::size_t length, double sample_rate, Rng& rng);

/// Linear convolution truncated to the input length, computed by FFT overlap-add.
std::vector<double> convolve(const std::vector<double>& signal, const std::vector<double>& filter);

/// Builds the full scene. `sources` holds K mono signals at least
/// duration_s long; they are truncated to the configured duration.
Scene mix(const SceneConfig& config, const std::vector<std::vector<double>>& sources, Rng& rng,
          const StftParams& stft = {});

/// Convenience: draws the K sources with speech_like_source from the same rng.
Scene mix(const SceneConfig& config, Rng& rng, const StftParams& stft = {});

/// u_bn = sum_f |X_b[f, n]|^2 over the analysis of each blinky channel.
Eigen::MatrixXd blinky_signals(const TimeSignal& blinky_mics, const StftParams& stft);

}  // namespace blinky
