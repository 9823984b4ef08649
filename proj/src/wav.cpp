#include "blinky/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "blinky/error.hpp"

namespace blinky {

namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::vector<char>& buf, std::size_t pos) {
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  return v;
}

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

TimeSignal read_wav(const std::filesystem::path& path, std::optional<double> expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto bad = [&](const std::string& why) { return IoError(path.string() + ": " + why); };
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw bad("not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t data_pos = 0, data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.data() + pos, 4);
    const auto len = read_le<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > buf.size() && id != "data") throw bad("truncated chunk " + id);
    if (id == "fmt ") {
      if (len < 16) throw bad("short fmt chunk");
      format = read_le<std::uint16_t>(buf, body);
      channels = read_le<std::uint16_t>(buf, body + 2);
      rate = read_le<std::uint32_t>(buf, body + 4);
      bits = read_le<std::uint16_t>(buf, body + 14);
      if (format == kFormatExtensible) {
        if (len < 26) throw bad("short extensible fmt chunk");
        format = read_le<std::uint16_t>(buf, body + 24);
      }
      have_fmt = true;
    } else if (id == "data") {
      data_pos = body;
      data_len = std::min<std::size_t>(len, buf.size() - body);
      break;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt) throw bad("missing fmt chunk");
  if (data_pos == 0) throw bad("missing data chunk");
  if (channels == 0) throw bad("zero channels");

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32) throw bad("only 16-bit PCM and 32-bit float are supported");
  if (expected_rate && std::abs(*expected_rate - rate) > 0.5)
    throw ConfigError("sample rate mismatch: " + path.string() + " is " + std::to_string(rate) +
                      " Hz, expected " + std::to_string(static_cast<long>(*expected_rate)) + " Hz");

  const std::size_t width = bits / 8;
  const std::size_t frames = data_len / (width * channels);
  TimeSignal sig(channels, static_cast<Eigen::Index>(frames), static_cast<double>(rate));
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t p = data_pos + (t * channels + c) * width;
      const double v = pcm16 ? read_le<std::int16_t>(buf, p) / 32768.0
                             : static_cast<double>(read_le<float>(buf, p));
      sig.data(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) = v;
    }
  }
  return sig;
}

void write_wav(const std::filesystem::path& path, const TimeSignal& signal, WavFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const auto channels = static_cast<std::uint16_t>(signal.channels());
  const std::uint16_t bits = format == WavFormat::Pcm16 ? 16 : 32;
  const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(signal.sample_rate));
  const std::uint32_t block = channels * (bits / 8u);
  const auto data_len = static_cast<std::uint32_t>(block * static_cast<std::size_t>(signal.length()));

  out.write("RIFF", 4);
  put<std::uint32_t>(out, 36 + data_len);
  out.write("WAVEfmt ", 8);
  put<std::uint32_t>(out, 16);
  put<std::uint16_t>(out, format == WavFormat::Pcm16 ? kFormatPcm : kFormatFloat);
  put<std::uint16_t>(out, channels);
  put<std::uint32_t>(out, rate);
  put<std::uint32_t>(out, rate * block);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(block));
  put<std::uint16_t>(out, bits);
  out.write("data", 4);
  put<std::uint32_t>(out, data_len);
  for (Eigen::Index t = 0; t < signal.length(); ++t) {
    for (Eigen::Index c = 0; c < signal.channels(); ++c) {
      const double v = signal.data(c, t);
      if (format == WavFormat::Pcm16) {
        const double s = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
        put<std::int16_t>(out, static_cast<std::int16_t>(s));
      } else {
        put<float>(out, static_cast<float>(v));
      }
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace blinky
