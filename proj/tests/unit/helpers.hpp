#pragma once

#include <blinky/stft.hpp>

#include <Eigen/Dense>
#include <random>

namespace testing {

inline blinky::TimeSignal random_signal(Eigen::Index channels, Eigen::Index samples, unsigned seed,
                                        double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  blinky::TimeSignal s(channels, samples);
  for (Eigen::Index c = 0; c < channels; ++c)
    for (Eigen::Index t = 0; t < samples; ++t) s.data(c, t) = nd(rng);
  return s;
}

inline Eigen::MatrixXcd random_complex(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXcd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = {nd(rng), nd(rng)};
  return m;
}

inline blinky::Spectrogram random_spectrogram(std::size_t F, std::size_t N, std::size_t M, unsigned seed) {
  std::mt19937_64 rng(seed);
  blinky::Spectrogram s(F, N, M, 2 * (F - 1), F - 1);
  for (std::size_t f = 0; f < F; ++f) s.bin(f) = random_complex(M, N, rng);
  return s;
}

inline Eigen::MatrixXd random_positive(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                                       double lo = 0.1, double hi = 2.0) {
  std::uniform_real_distribution<double> ud(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = ud(rng);
  return m;
}

}  // namespace testing
