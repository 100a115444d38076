#pragma once

#include <filesystem>

#include "pafa/features.hpp"

namespace pafa {

// Minimal RIFF/WAVE support: reads mono or multi-channel PCM16 and
// float32 (channels averaged), writes 16-bit PCM mono. Samples are
// normalized doubles in [-1, 1].
WaveBuffer read_wav(const std::filesystem::path& path);
void write_wav16(const std::filesystem::path& path, const WaveBuffer& w);

}  // namespace pafa
