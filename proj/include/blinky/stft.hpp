#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace blinky {

using cplx = std::complex<double>;

/// Multichannel real time-domain signal. Rows are channels, columns samples.
struct TimeSignal {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> data;
  double sample_rate = 16000.0;

  TimeSignal() = default;
  TimeSignal(Eigen::Index channels, Eigen::Index samples, double rate = 16000.0)
      : data(Eigen::MatrixXd::Zero(channels, samples)), sample_rate(rate) {}

  Eigen::Index channels() const { return data.rows(); }
  Eigen::Index length() const { return data.cols(); }
};

/// One-sided STFT of a multichannel signal.
///
/// Storage is frequency-major: `bins[f]` is the M x N matrix of channel
/// spectra at bin f, which is the layout the demixing updates consume.
class Spectrogram {
 public:
  Spectrogram() = default;
  Spectrogram(std::size_t n_bins, std::size_t n_frames, std::size_t n_channels,
              std::size_t frame_size, std::size_t hop,
              std::size_t signal_length = 0);

  std::size_t n_bins() const { return bins_.size(); }
  std::size_t n_frames() const { return n_frames_; }
  std::size_t n_channels() const { return n_channels_; }
  std::size_t frame_size() const { return frame_size_; }
  std::size_t hop() const { return hop_; }
  std::size_t signal_length() const { return signal_length_; }
  void set_signal_length(std::size_t len) { signal_length_ = len; }

  cplx& operator()(std::size_t f, std::size_t n, std::size_t m) {
    return bins_[f](static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  }
  const cplx& operator()(std::size_t f, std::size_t n, std::size_t m) const {
    return bins_[f](static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  }

  Eigen::MatrixXcd& bin(std::size_t f) { return bins_[f]; }
  const Eigen::MatrixXcd& bin(std::size_t f) const { return bins_[f]; }

  /// Spectrogram holding only the listed channels, in the given order.
  Spectrogram select(const std::vector<std::size_t>& channels) const;

  /// Sum over bins of |X[f,n,m]|^2, as an M x N matrix.
  Eigen::MatrixXd frame_power() const;

 private:
  std::vector<Eigen::MatrixXcd> bins_;
  std::size_t n_frames_ = 0;
  std::size_t n_channels_ = 0;
  std::size_t frame_size_ = 0;
  std::size_t hop_ = 0;
  std::size_t signal_length_ = 0;
};

/// Square-root periodic Hann window of the given length. Its square satisfies
/// the constant-overlap-add identity at half overlap with sum exactly 1.
Eigen::VectorXd sqrt_hann(std::size_t frame_size);

/// Number of frames produced for a signal of `length` samples.
/// The signal is padded with hop zeros in front and enough zeros at the back
/// that every sample is covered by two frames: N = ceil(length / hop) + 1.
std::size_t frame_count(std::size_t length, std::size_t hop);

/// Forward STFT: X[f,n,m] = sum_t w[t] x_m[n*hop + t - hop] exp(-2 pi i f t / L).
///
/// No normalization is applied. Parseval for one frame reads
///   sum_{f=0}^{L/2} c_f |X[f]|^2 = L * sum_t (w[t] x[t])^2,
/// with c_f = 1 at DC and Nyquist and 2 elsewhere, so the blinky power
/// sum_f |X[f]|^2 equals (L/2) times the windowed frame energy up to the
/// half-weighted DC and Nyquist bins.
Spectrogram analyze(const TimeSignal& signal, std::size_t frame_size,
                    std::size_t hop);

/// Inverse STFT by weighted overlap-add with the same square-root Hann window.
/// Returns `signal_length()` samples when known, otherwise (N - 1) * hop.
TimeSignal synthesize(const Spectrogram& spec, double sample_rate = 16000.0);

}  // namespace blinky
