#pragma once

#include <string>

#include "promptcodec/types.hpp"

namespace promptcodec::io {

// Reads a mono RIFF/WAVE file (16-bit PCM or 32-bit float). Multi-channel
// input is rejected; when expected_rate > 0 a differing file rate is an error
// (resampling on ingest is out of scope).
Waveform read_wav(const std::string& path, int expected_rate = 0);

// Writes 16-bit PCM, samples clamped to [-1, 1].
void write_wav(const std::string& path, const Waveform& w);

// Parses only the fmt chunk; validates mono but not sample format.
int read_wav_sample_rate(const std::string& path);

}  // namespace promptcodec::io
