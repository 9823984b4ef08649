#pragma once

#include <filesystem>
#include <optional>

#include "blinky/stft.hpp"

namespace blinky {

enum class WavFormat { Pcm16, Float32 };

/// Reads 16-bit PCM or 32-bit float WAV (plain or extensible header).
/// PCM samples map to [-1, 1) by division by 32768. When `expected_rate` is
/// given, a different file rate throws ConfigError("sample rate mismatch");
/// no resampling is done.
TimeSignal read_wav(const std::filesystem::path& path, std::optional<double> expected_rate = {});

/// Writes all channels interleaved. Float32 keeps float-representable data exact;
/// Pcm16 clips to [-1, 1).
void write_wav(const std::filesystem::path& path, const TimeSignal& signal,
               WavFormat format = WavFormat::Float32);

}  // namespace blinky
