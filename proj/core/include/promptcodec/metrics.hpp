// Objective metrics: mel-cepstral distortion, short-time objective
// intelligibility, and bitrate accounting.
#pragma once

#include "promptcodec/quantizer.hpp"
#include "promptcodec/types.hpp"

namespace promptcodec::metrics {

struct MetricReport {
    double mcd = 0.0;
    double stoi = 0.0;  // clipped to [0, 1]
    double bitrate_bps = 0.0;
    int n_frames = 0;
};

// Mel-cepstral distortion over 80 log-mel bands: DCT-II cepstra c0..c13,
// c0 excluded, (10*sqrt(2)/ln 10) * mean frame-wise L2. No DTW; deg is
// truncated or zero-padded to the reference length.
double mcd(const Waveform& ref, const Waveform& deg);

// Standard STOI: resample to 10 kHz, drop frames 40 dB below the reference
// peak, 15 one-third-octave bands from 150 Hz, 384 ms envelope segments,
// clipped normalized correlation averaged over bands and segments.
double stoi(const Waveform& ref, const Waveform& deg);

// frame_rate * n_q * ceil(log2 K) + side_info_bits * frame_rate / n_frames.
double bitrate_bps(double frame_rate, int n_q, int codebook_size, int64_t n_frames = 0,
                   int64_t prompt_side_info_bits = 0);

}  // namespace promptcodec::metrics
