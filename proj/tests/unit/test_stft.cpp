#include <doctest.h>

#include <blinky/error.hpp>
#include <blinky/scene.hpp>
#include <blinky/stft.hpp>

#include "helpers.hpp"

#include <cmath>
#include <numbers>

using namespace blinky;

namespace {

// Plain O(L^2) windowed DFT of frame n of channel m, same framing as analyze.
std::vector<cplx> direct_frame_dft(const TimeSignal& x, std::size_t m, std::size_t n, std::size_t L) {
  const std::size_t hop = L / 2;
  const auto w = sqrt_hann(L);
  std::vector<cplx> out(L / 2 + 1);
  for (std::size_t f = 0; f <= L / 2; ++f) {
    cplx acc = 0.0;
    for (std::size_t t = 0; t < L; ++t) {
      const long idx = static_cast<long>(n * hop + t) - static_cast<long>(hop);
      if (idx < 0 || idx >= x.length()) continue;
      const double ph = -2.0 * std::numbers::pi * double(f * t % L) / double(L);
      acc += w[t] * x.data(m, idx) * cplx(std::cos(ph), std::sin(ph));
    }
    out[f] = acc;
  }
  return out;
}

double interior_max_error(const TimeSignal& a, const TimeSignal& b, Eigen::Index margin) {
  return (a.data.middleCols(margin, a.length() - 2 * margin) -
          b.data.middleCols(margin, b.length() - 2 * margin))
      .cwiseAbs()
      .maxCoeff();
}

}  // namespace

TEST_CASE("window squares sum to one at half overlap") {
  for (std::size_t L : {8u, 512u, 4096u}) {
    const auto w = sqrt_hann(L);
    for (std::size_t t = 0; t < L / 2; ++t)
      CHECK(std::abs(w[t] * w[t] + w[t + L / 2] * w[t + L / 2] - 1.0) < 1e-15);
  }
}

TEST_CASE("frame geometry") {
  CHECK(frame_count(4096, 2048) == 3);
  CHECK(frame_count(4097, 2048) == 4);
  const auto x = testing::random_signal(2, 5000, 1);
  const auto X = analyze(x, 1024, 512);
  CHECK(X.n_bins() == 513);
  CHECK(X.n_frames() == frame_count(5000, 512));
  CHECK(X.n_channels() == 2);
  CHECK(X.hop() == 512);
  CHECK(X.frame_size() == 1024);
}

TEST_CASE("analyze rejects bad input") {
  const auto x = testing::random_signal(1, 2000, 2);
  CHECK_THROWS_AS(analyze(x, 1023, 511), ConfigError);
  CHECK_THROWS_AS(analyze(x, 1024, 256), ConfigError);
  CHECK_THROWS_WITH(analyze(x, 4096, 2048), doctest::Contains("signal too short"));
  auto bad = x;
  bad.data(0, 10) = std::nan("");
  CHECK_THROWS_AS(analyze(bad, 512, 256), ConfigError);
}

TEST_CASE("zero signal gives zero spectrogram and back") {
  TimeSignal z(2, 3000);
  const auto X = analyze(z, 512, 256);
  for (std::size_t f = 0; f < X.n_bins(); ++f) CHECK(X.bin(f).cwiseAbs().maxCoeff() == 0.0);
  const auto y = synthesize(X);
  CHECK(y.length() == 3000);
  CHECK(y.data.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("analyze matches a direct windowed DFT") {
  const std::size_t L = 64;
  const auto x = testing::random_signal(2, 300, 3);
  const auto X = analyze(x, L, L / 2);
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t n : {0u, 1u, 5u, static_cast<unsigned>(X.n_frames() - 1)}) {
      const auto ref = direct_frame_dft(x, m, n, L);
      for (std::size_t f = 0; f <= L / 2; ++f) CHECK(std::abs(X(f, n, m) - ref[f]) < 1e-12);
    }
}

TEST_CASE("bin-centred sinusoid concentrates in its bin") {
  const std::size_t L = 1024, k = 37;
  TimeSignal x(1, 8 * L);
  for (Eigen::Index t = 0; t < x.length(); ++t)
    x.data(0, t) = std::cos(2.0 * std::numbers::pi * double(k) * double(t) / double(L));
  const auto X = analyze(x, L, L / 2);
  for (std::size_t n = 2; n + 2 < X.n_frames(); ++n) {
    const auto ref = direct_frame_dft(x, 0, n, L);
    double peak = 0.0;
    std::size_t arg = 0;
    for (std::size_t f = 0; f < X.n_bins(); ++f) {
      CHECK(std::abs(X(f, n, 0) - ref[f]) < 1e-9);
      if (std::norm(X(f, n, 0)) > peak) peak = std::norm(X(f, n, 0)), arg = f;
    }
    CHECK(arg == k);
    // The square-root Hann leaks like 1/(4d^2 - 1) in amplitude, so the
    // -60 dB floor is reached about 17 bins away from the tone.
    for (std::size_t f = 0; f < X.n_bins(); ++f) {
      const auto d = f > k ? f - k : k - f;
      if (d >= 17) CHECK(10.0 * std::log10(std::norm(X(f, n, 0)) / peak) < -60.0);
    }
  }
}

TEST_CASE("round trip reconstructs interior samples") {
  for (std::size_t L : {512u, 1024u, 4096u}) {
    const auto x = testing::random_signal(2, 16000, 4 + unsigned(L));
    const auto y = synthesize(analyze(x, L, L / 2));
    REQUIRE(y.length() == x.length());
    CHECK(interior_max_error(x, y, static_cast<Eigen::Index>(L)) <= 1e-10);
  }
}

TEST_CASE("round trip keeps the energy of a long speech-like signal") {
  Rng rng(11);
  const auto s = speech_like_source(20 * 16000, 16000.0, rng);
  TimeSignal x(1, static_cast<Eigen::Index>(s.size()));
  for (std::size_t t = 0; t < s.size(); ++t) x.data(0, static_cast<Eigen::Index>(t)) = s[t];
  const auto y = synthesize(analyze(x, 4096, 2048));
  const Eigen::Index margin = 4096, len = x.length() - 2 * margin;
  const double ex = x.data.middleCols(margin, len).squaredNorm();
  const double ey = y.data.middleCols(margin, len).squaredNorm();
  CHECK(std::abs(ey - ex) / ex <= 1e-9);
}

TEST_CASE("Parseval constant is the same for every frame") {
  const std::size_t L = 256;
  const auto x = testing::random_signal(1, 4000, 5);
  const auto X = analyze(x, L, L / 2);
  const auto P = X.frame_power();
  const auto w = sqrt_hann(L);
  for (std::size_t n = 0; n < X.n_frames(); ++n) {
    double energy = 0.0, dc = 0.0, nyq = 0.0;
    for (std::size_t t = 0; t < L; ++t) {
      const long idx = static_cast<long>(n * L / 2 + t) - static_cast<long>(L / 2);
      if (idx < 0 || idx >= x.length()) continue;
      const double v = w[t] * x.data(0, idx);
      energy += v * v;
      dc += v;
      nyq += (t % 2 ? -v : v);
    }
    const double expected = (double(L) * energy + dc * dc + nyq * nyq) / 2.0;
    CHECK(std::abs(P(0, n) - expected) <= 1e-9 * std::max(1.0, expected));
  }
}

TEST_CASE("analyze is linear") {
  const auto a = testing::random_signal(2, 3000, 6);
  const auto b = testing::random_signal(2, 3000, 7);
  TimeSignal c(2, 3000);
  c.data = 0.3 * a.data - 1.7 * b.data;
  const auto A = analyze(a, 512, 256), B = analyze(b, 512, 256), C = analyze(c, 512, 256);
  double scale = 0.0, err = 0.0;
  for (std::size_t f = 0; f < A.n_bins(); ++f) {
    scale = std::max(scale, C.bin(f).cwiseAbs().maxCoeff());
    err = std::max(err, (C.bin(f) - (0.3 * A.bin(f) - 1.7 * B.bin(f))).cwiseAbs().maxCoeff());
  }
  CHECK(err <= 1e-12 * scale);
}

TEST_CASE("channels are analyzed independently") {
  const auto x = testing::random_signal(3, 2500, 8);
  const auto X = analyze(x, 256, 128);
  for (Eigen::Index m = 0; m < 3; ++m) {
    TimeSignal mono(1, x.length());
    mono.data = x.data.row(m);
    const auto Xm = analyze(mono, 256, 128);
    for (std::size_t f = 0; f < X.n_bins(); ++f) CHECK(X.bin(f).row(m) == Xm.bin(f).row(0));
  }
}

TEST_CASE("synthesize rejects inconsistent geometry") {
  Spectrogram bad(100, 4, 1, 256, 128);
  CHECK_THROWS_AS(synthesize(bad), ConfigError);
  Spectrogram short_frames(129, 3, 1, 256, 128, 10000);
  CHECK_THROWS_WITH(synthesize(short_frames), doctest::Contains("inconsistent frame geometry"));
}

TEST_CASE("select keeps the requested channels in order") {
  const auto X = testing::random_spectrogram(5, 7, 3, 9);
  const auto S = X.select({2, 0});
  REQUIRE(S.n_channels() == 2);
  for (std::size_t f = 0; f < 5; ++f) {
    CHECK(S.bin(f).row(0) == X.bin(f).row(2));
    CHECK(S.bin(f).row(1) == X.bin(f).row(0));
  }
  CHECK_THROWS_AS(X.select({3}), ConfigError);
}
