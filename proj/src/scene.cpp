#include "blinky/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include <unsupported/Eigen/FFT>

#include "blinky/error.hpp"

namespace blinky {

std::vector<double> SceneConfig::source_variances() const {
  if (!variances.empty()) return variances;
  std::vector<double> v(static_cast<std::size_t>(std::max(n_sources, 0)), 1.0);
  if (!v.empty()) v[0] = 0.25;
  return v;
}

void SceneConfig::validate(const StftParams& stft) const {
  if (n_sources < 1) throw ConfigError("n_sources must be at least 1");
  if (n_sources > n_mics) throw ConfigError("n_sources must not exceed n_mics");
  if (n_blinkies < 1) throw ConfigError("n_blinkies must be at least 1");
  if (n_interferers < 0) throw ConfigError("n_interferers must be nonnegative");
  const auto v = source_variances();
  if (v.size() != static_cast<std::size_t>(n_sources))
    throw ConfigError("variances must list one value per source");
  for (double x : v)
    if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError("variances must be positive");
  if (!std::isfinite(snr_db)) throw ConfigError("snr_db must be finite");
  if (rir_length < 1) throw ConfigError("rir_length must be positive");
  if (!(rir_decay_ms > 0.0)) throw ConfigError("rir_decay_ms must be positive");
  if (!(sample_rate > 0.0)) throw ConfigError("sample_rate must be positive");
  const double min_len = static_cast<double>(stft.frame_size + stft.hop);
  if (!(duration_s * sample_rate >= min_len))
    throw ConfigError("duration_s too short for two STFT frames");
}

void to_json(nlohmann::json& j, const SceneConfig& c) {
  j = nlohmann::json{{"n_sources", c.n_sources},
                     {"n_mics", c.n_mics},
                     {"n_blinkies", c.n_blinkies},
                     {"n_interferers", c.n_interferers},
                     {"variances", c.source_variances()},
                     {"snr_db", c.snr_db},
                     {"rir_length", c.rir_length},
                     {"rir_decay_ms", c.rir_decay_ms},
                     {"seed", c.seed},
                     {"duration_s", c.duration_s}};
  // JSON has no infinity; null encodes a disabled SINR target.
  if (std::isinf(c.sinr_db))
    j["sinr_db"] = nullptr;
  else
    j["sinr_db"] = c.sinr_db;
}

void from_json(const nlohmann::json& j, SceneConfig& c) {
  SceneConfig d;
  c.n_sources = j.value("n_sources", d.n_sources);
  c.n_mics = j.value("n_mics", d.n_mics);
  c.n_blinkies = j.value("n_blinkies", d.n_blinkies);
  c.n_interferers = j.value("n_interferers", d.n_interferers);
  c.variances = j.value("variances", std::vector<double>{});
  c.snr_db = j.value("snr_db", d.snr_db);
  if (j.contains("sinr_db") && j["sinr_db"].is_null())
    c.sinr_db = std::numeric_limits<double>::infinity();
  else
    c.sinr_db = j.value("sinr_db", d.sinr_db);
  c.rir_length = j.value("rir_length", d.rir_length);
  c.rir_decay_ms = j.value("rir_decay_ms", d.rir_decay_ms);
  c.seed = j.value("seed", d.seed);
  c.duration_s = j.value("duration_s", d.duration_s);
}

NoiseLevels calibrate_levels(const SceneConfig& config) {
  const auto v = config.source_variances();
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  const double k = static_cast<double>(v.size());
  NoiseLevels lv;
  lv.noise_variance = (total / k) / std::pow(10.0, config.snr_db / 10.0);
  if (std::isinf(config.sinr_db) && config.sinr_db > 0) return lv;
  if (config.n_interferers == 0) throw ConfigError("infeasible SINR: no interferers to reach a finite SINR");
  lv.interferer_variance = (total / std::pow(10.0, config.sinr_db / 10.0) - lv.noise_variance) /
                           static_cast<double>(config.n_interferers);
  if (!(lv.interferer_variance > 0.0)) throw ConfigError("infeasible SINR");
  return lv;
}

std::vector<double> generate_rir(double decay_ms, std::size_t length, std::size_t delay, Rng& rng,
                                 double sample_rate, double tail_gain) {
  if (!(decay_ms > 0.0)) throw ConfigError("RIR decay must be positive");
  if (!(length > delay)) throw ConfigError("RIR length must exceed the delay");
  // amplitude falls by 60 dB (factor 1000) after decay_ms
  const double tau = decay_ms * 1e-3 * sample_rate / std::log(1000.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> h(length, 0.0);
  h[delay] = 1.0;
  for (std::size_t t = delay + 1; t < length; ++t) {
    const double env = tail_gain * std::exp(-static_cast<double>(t - delay) / tau);
    h[t] = env * gauss(rng);
  }
  return h;
}

namespace {

// Spectral tilt shared by the speech-like generators: one-pole lowpass
// followed by a resonance around 700 Hz.
std::vector<double> colored_noise(std::size_t length, double sample_rate, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double r = 0.9;
  const double theta = 2.0 * std::numbers::pi * 700.0 / sample_rate;
  const double a1 = 2.0 * r * std::cos(theta);
  const double a2 = -r * r;
  std::vector<double> y(length);
  double lp = 0.0, y1 = 0.0, y2 = 0.0;
  for (std::size_t t = 0; t < length; ++t) {
    lp = gauss(rng) + 0.7 * lp;
    const double out = lp + 0.5 * (a1 * y1 + a2 * y2);
    y2 = y1;
    y1 = out;
    y[t] = out;
  }
  return y;
}

void normalize_power(std::vector<double>& x) {
  double p = 0.0;
  for (double v : x) p += v * v;
  p /= static_cast<double>(std::max<std::size_t>(x.size(), 1));
  if (p > 0.0) {
    const double s = 1.0 / std::sqrt(p);
    for (double& v : x) v *= s;
  }
}

double mean_square(const double* x, std::size_t n) {
  double p = 0.0;
  for (std::size_t i = 0; i < n; ++i) p += x[i] * x[i];
  return p / static_cast<double>(n);
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Block spectra of one input signal, reused across many filters.
class OverlapAdd {
 public:
  OverlapAdd(const std::vector<double>& signal, std::size_t max_filter)
      : length_(signal.size()) {
    block_ = std::max<std::size_t>(max_filter, 1024);
    nfft_ = next_pow2(block_ + max_filter - 1);
    fft_.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<double> buf(nfft_);
    for (std::size_t start = 0; start < length_; start += block_) {
      std::fill(buf.begin(), buf.end(), 0.0);
      const std::size_t n = std::min(block_, length_ - start);
      std::copy_n(signal.begin() + static_cast<std::ptrdiff_t>(start), n, buf.begin());
      std::vector<cplx> spec;
      fft_.fwd(spec, buf);
      blocks_.push_back(std::move(spec));
    }
    max_filter_ = max_filter;
  }

  std::vector<double> apply(const std::vector<double>& filter) {
    if (filter.size() > max_filter_) throw ConfigError("filter longer than planned");
    std::vector<double> fbuf(nfft_, 0.0);
    std::copy(filter.begin(), filter.end(), fbuf.begin());
    std::vector<cplx> fspec;
    fft_.fwd(fspec, fbuf);
    std::vector<double> out(length_, 0.0);
    std::vector<cplx> prod(fspec.size());
    std::vector<double> tbuf;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = blocks_[b][i] * fspec[i];
      fft_.inv(tbuf, prod, static_cast<Eigen::Index>(nfft_));
      const std::size_t start = b * block_;
      const std::size_t n = std::min(nfft_, length_ - start);
      for (std::size_t i = 0; i < n; ++i) out[start + i] += tbuf[i];
    }
    return out;
  }

 private:
  std::size_t length_ = 0;
  std::size_t block_ = 0;
  std::size_t nfft_ = 0;
  std::size_t max_filter_ = 0;
  Eigen::FFT<double> fft_;
  std::vector<std::vector<cplx>> blocks_;
};

}  // namespace

std::vector<double> speech_shaped_noise(std::size_t length, double sample_rate, Rng& rng) {
  auto y = colored_noise(length, sample_rate, rng);
  normalize_power(y);
  return y;
}

std::vector<double> speech_like_source(std::size_t length, double sample_rate, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> env(length, 0.0);
  std::size_t t = 0;
  bool active = unif(rng) < 0.5;
  while (t < length) {
    const double seg_s = active ? 0.8 + 1.7 * unif(rng) : 0.2 + 0.8 * unif(rng);
    const std::size_t seg_end =
        std::min(length, t + static_cast<std::size_t>(seg_s * sample_rate));
    if (active) {
      // syllables: half-sine bumps with random length and peak
      while (t < seg_end) {
        const auto syl = static_cast<std::size_t>((0.12 + 0.18 * unif(rng)) * sample_rate);
        const double peak = 0.3 + 0.7 * unif(rng);
        const std::size_t end = std::min(seg_end, t + syl);
        for (std::size_t i = t; i < end; ++i) {
          const double phase = static_cast<double>(i - t) / static_cast<double>(syl);
          env[i] = peak * std::sin(std::numbers::pi * phase);
        }
        t = end;
      }
    }
    t = seg_end;
    active = !active;
  }
  auto y = colored_noise(length, sample_rate, rng);
  for (std::size_t i = 0; i < length; ++i) y[i] *= env[i];
  normalize_power(y);
  return y;
}

std::vector<double> convolve(const std::vector<double>& signal, const std::vector<double>& filter) {
  if (signal.empty() || filter.empty()) return std::vector<double>(signal.size(), 0.0);
  OverlapAdd ola(signal, filter.size());
  return ola.apply(filter);
}

Eigen::MatrixXd blinky_signals(const TimeSignal& blinky_mics, const StftParams& stft) {
  return analyze(blinky_mics, stft.frame_size, stft.hop).frame_power();
}

namespace {

// Propagates one dry signal to every microphone and blinky.
struct Propagated {
  std::vector<std::vector<double>> mics;
  std::vector<std::vector<double>> blinkies;
};

Propagated propagate(const std::vector<double>& dry, const SceneConfig& c, Rng& rng) {
  const auto L = static_cast<std::size_t>(c.rir_length);
  std::uniform_int_distribution<std::size_t> delay_dist(0, std::min<std::size_t>(50, L - 1));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  OverlapAdd ola(dry, L);
  Propagated p;
  for (int m = 0; m < c.n_mics; ++m) {
    const auto h = generate_rir(c.rir_decay_ms, L, delay_dist(rng), rng, c.sample_rate);
    p.mics.push_back(ola.apply(h));
  }
  for (int b = 0; b < c.n_blinkies; ++b) {
    // spread of reverberation and distance attenuation across the sensor grid
    const double decay = c.rir_decay_ms * (0.5 + unif(rng));
    const double gain = std::pow(10.0, -20.0 * unif(rng) / 20.0);
    auto h = generate_rir(decay, L, delay_dist(rng), rng, c.sample_rate);
    for (double& v : h) v *= gain;
    p.blinkies.push_back(ola.apply(h));
  }
  return p;
}

void add_scaled(TimeSignal& dst, Eigen::Index row, const std::vector<double>& src, double s) {
  for (Eigen::Index t = 0; t < dst.length(); ++t) dst.data(row, t) += s * src[static_cast<std::size_t>(t)];
}

}  // namespace

Scene mix(const SceneConfig& config, const std::vector<std::vector<double>>& sources, Rng& rng,
          const StftParams& stft) {
  config.validate(stft);
  if (sources.size() != static_cast<std::size_t>(config.n_sources))
    throw ConfigError("expected " + std::to_string(config.n_sources) + " source signals, got " +
                      std::to_string(sources.size()));
  const auto T = static_cast<std::size_t>(std::llround(config.duration_s * config.sample_rate));
  for (const auto& s : sources)
    if (s.size() < T) throw ConfigError("source signal shorter than duration_s");

  const auto variances = config.source_variances();
  Scene scene;
  scene.levels = calibrate_levels(config);
  const auto M = static_cast<Eigen::Index>(config.n_mics);
  const auto B = static_cast<Eigen::Index>(config.n_blinkies);
  const auto K = static_cast<Eigen::Index>(config.n_sources);
  const auto Tn = static_cast<Eigen::Index>(T);
  scene.mic_signals = TimeSignal(M, Tn, config.sample_rate);
  scene.blinky_mics = TimeSignal(B, Tn, config.sample_rate);
  scene.references = TimeSignal(K, Tn, config.sample_rate);

  for (Eigen::Index k = 0; k < K; ++k) {
    std::vector<double> dry(sources[static_cast<std::size_t>(k)].begin(),
                            sources[static_cast<std::size_t>(k)].begin() + static_cast<std::ptrdiff_t>(T));
    const auto p = propagate(dry, config, rng);
    const double ref_power = mean_square(p.mics[0].data(), T);
    if (!(ref_power > 0.0)) throw ConfigError("source " + std::to_string(k) + " is silent");
    const double s = std::sqrt(variances[static_cast<std::size_t>(k)] / ref_power);
    TimeSignal image(M, Tn, config.sample_rate);
    for (Eigen::Index m = 0; m < M; ++m) {
      add_scaled(image, m, p.mics[static_cast<std::size_t>(m)], s);
      add_scaled(scene.mic_signals, m, p.mics[static_cast<std::size_t>(m)], s);
    }
    for (Eigen::Index b = 0; b < B; ++b)
      add_scaled(scene.blinky_mics, b, p.blinkies[static_cast<std::size_t>(b)], s);
    scene.references.data.row(k) = image.data.row(0);
    scene.premix_images.push_back(std::move(image));
  }

  if (scene.levels.interferer_variance > 0.0) {
    for (int q = 0; q < config.n_interferers; ++q) {
      const auto dry = speech_shaped_noise(T, config.sample_rate, rng);
      const auto p = propagate(dry, config, rng);
      const double s = std::sqrt(scene.levels.interferer_variance / mean_square(p.mics[0].data(), T));
      for (Eigen::Index m = 0; m < M; ++m)
        add_scaled(scene.mic_signals, m, p.mics[static_cast<std::size_t>(m)], s);
      for (Eigen::Index b = 0; b < B; ++b)
        add_scaled(scene.blinky_mics, b, p.blinkies[static_cast<std::size_t>(b)], s);
    }
  }

  // white sensor noise, calibrated to the exact empirical variance per channel
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto add_noise = [&](TimeSignal& sig) {
    std::vector<double> n(T);
    for (Eigen::Index c = 0; c < sig.channels(); ++c) {
      for (auto& v : n) v = gauss(rng);
      const double s = std::sqrt(scene.levels.noise_variance / mean_square(n.data(), T));
      add_scaled(sig, c, n, s);
    }
  };
  add_noise(scene.mic_signals);
  add_noise(scene.blinky_mics);

  scene.blinky_power = blinky_signals(scene.blinky_mics, stft);
  return scene;
}

Scene mix(const SceneConfig& config, Rng& rng, const StftParams& stft) {
  config.validate(stft);
  const auto T = static_cast<std::size_t>(std::llround(config.duration_s * config.sample_rate));
  std::vector<std::vector<double>> sources;
  for (int k = 0; k < config.n_sources; ++k)
    sources.push_back(speech_like_source(T, config.sample_rate, rng));
  return mix(config, sources, rng, stft);
}

}  // namespace blinky
