#include "blinky/stft.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <unsupported/Eigen/FFT>

#include "blinky/error.hpp"

namespace blinky {

Spectrogram::Spectrogram(std::size_t n_bins, std::size_t n_frames,
                         std::size_t n_channels, std::size_t frame_size,
                         std::size_t hop, std::size_t signal_length)
    : bins_(n_bins, Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n_channels),
                                           static_cast<Eigen::Index>(n_frames))),
      n_frames_(n_frames),
      n_channels_(n_channels),
      frame_size_(frame_size),
      hop_(hop),
      signal_length_(signal_length) {}

Spectrogram Spectrogram::select(const std::vector<std::size_t>& channels) const {
  Spectrogram out(n_bins(), n_frames_, channels.size(), frame_size_, hop_,
                  signal_length_);
  for (std::size_t f = 0; f < n_bins(); ++f) {
    for (std::size_t c = 0; c < channels.size(); ++c) {
      if (channels[c] >= n_channels_) throw ConfigError("channel index out of range");
      out.bins_[f].row(static_cast<Eigen::Index>(c)) =
          bins_[f].row(static_cast<Eigen::Index>(channels[c]));
    }
  }
  return out;
}

Eigen::MatrixXd Spectrogram::frame_power() const {
  Eigen::MatrixXd power = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_channels_),
                                                static_cast<Eigen::Index>(n_frames_));
  for (const auto& b : bins_) power += b.cwiseAbs2();
  return power;
}

Eigen::VectorXd sqrt_hann(std::size_t frame_size) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(frame_size));
  const double L = static_cast<double>(frame_size);
  for (std::size_t t = 0; t < frame_size; ++t) {
    w(static_cast<Eigen::Index>(t)) =
        std::sqrt(0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / L)));
  }
  return w;
}

std::size_t frame_count(std::size_t length, std::size_t hop) { return (length + hop - 1) / hop + 1; }

namespace {

void check_geometry(std::size_t frame_size, std::size_t hop) {
  if (frame_size == 0 || frame_size % 2 != 0)
    throw ConfigError("frame size must be a positive even number");
  if (hop != frame_size / 2) throw ConfigError("hop must be half the frame size");
}

}  // namespace

Spectrogram analyze(const TimeSignal& signal, std::size_t frame_size, std::size_t hop) {
  check_geometry(frame_size, hop);
  const auto len = static_cast<std::size_t>(signal.length());
  if (len < frame_size) throw ConfigError("signal too short");
  if (!signal.data.allFinite()) throw ConfigError("signal contains non-finite samples");

  const std::size_t n_frames = frame_count(len, hop);
  const std::size_t n_bins = frame_size / 2 + 1;
  const std::size_t n_chan = static_cast<std::size_t>(signal.channels());
  Spectrogram spec(n_bins, n_frames, n_chan, frame_size, hop, len);

  const Eigen::VectorXd window = sqrt_hann(frame_size);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(frame_size);
  std::vector<cplx> bins;

  for (std::size_t m = 0; m < n_chan; ++m) {
    const auto row = signal.data.row(static_cast<Eigen::Index>(m));
    for (std::size_t n = 0; n < n_frames; ++n) {
      for (std::size_t t = 0; t < frame_size; ++t) {
        // sample index in the unpadded signal
        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(n * hop + t) -
                                 static_cast<std::ptrdiff_t>(hop);
        const double x = (s >= 0 && static_cast<std::size_t>(s) < len) ? row(s) : 0.0;
        frame[t] = window(static_cast<Eigen::Index>(t)) * x;
      }
      fft.fwd(bins, frame);
      for (std::size_t f = 0; f < n_bins; ++f) spec(f, n, m) = bins[f];
    }
  }
  return spec;
}

TimeSignal synthesize(const Spectrogram& spec, double sample_rate) {
  const std::size_t L = spec.frame_size();
  const std::size_t hop = spec.hop();
  check_geometry(L, hop);
  if (spec.n_bins() != L / 2 + 1)
    throw ConfigError("inconsistent frame geometry: bin count " + std::to_string(spec.n_bins()) +
                      " for frame size " + std::to_string(L));
  if (spec.n_frames() == 0) throw ConfigError("inconsistent frame geometry: no frames");

  const std::size_t n_frames = spec.n_frames();
  const std::size_t full_len = (n_frames - 1) * hop;
  const std::size_t out_len = spec.signal_length() > 0 ? spec.signal_length() : full_len;
  if (out_len > full_len) throw ConfigError("inconsistent frame geometry: too few frames");

  TimeSignal out(static_cast<Eigen::Index>(spec.n_channels()),
                 static_cast<Eigen::Index>(out_len), sample_rate);
  const Eigen::VectorXd window = sqrt_hann(L);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<cplx> bins(spec.n_bins());
  std::vector<double> frame;

  for (std::size_t m = 0; m < spec.n_channels(); ++m) {
    auto row = out.data.row(static_cast<Eigen::Index>(m));
    for (std::size_t n = 0; n < n_frames; ++n) {
      for (std::size_t f = 0; f < spec.n_bins(); ++f) bins[f] = spec(f, n, m);
      fft.inv(frame, bins, static_cast<Eigen::Index>(L));
      for (std::size_t t = 0; t < L; ++t) {
        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(n * hop + t) -
                                 static_cast<std::ptrdiff_t>(hop);
        if (s >= 0 && static_cast<std::size_t>(s) < out_len)
          row(s) += window(static_cast<Eigen::Index>(t)) * frame[t];
      }
    }
  }
  return out;
}

}  // namespace blinky
