// Deterministic signal-processing frontend: framing, STFT, mel spectrogram,
// FBank features, pre-emphasis and polyphase resampling.
#pragma once

#include <vector>

#include "promptcodec/types.hpp"

namespace promptcodec::dsp {

struct SpectrogramConfig {
    int n_fft = 1024;
    int hop = 256;
    int win = 1024;
    int n_mels = 80;
    double fmin = 0.0;
    double fmax = 0.0;  // 0 resolves to sample_rate / 2
    double log_floor = 1e-5;
};

// Throws InvalidConfig on violated invariants. fmax is resolved against the
// sample rate here.
void validate_config(const SpectrogramConfig& cfg, int sample_rate);

struct ComplexSpectrogram {
    std::vector<double> re;  // [frames x bins] row-major
    std::vector<double> im;
    int frames = 0;
    int bins = 0;
};

// Periodic Hann window of length n.
std::vector<double> hann_periodic(int n);

// Slaney-normalized triangular mel filterbank, [n_mels x (n_fft/2+1)] row-major.
std::vector<double> mel_filterbank(int n_mels, int n_fft, int sample_rate, double fmin,
                                   double fmax);

// Centered, reflect-padded STFT; frames = 1 + floor(len/hop).
ComplexSpectrogram stft(const Waveform& w, const SpectrogramConfig& cfg);

// log(max(mel_power, log_floor)) of the STFT power spectrogram.
FeatureMatrix mel_spectrogram(const Waveform& w, const SpectrogramConfig& cfg);

Waveform pre_emphasis(const Waveform& w, double coeff = 0.97);

// Mel pipeline with 0.97 pre-emphasis and per-band mean normalization over time.
FeatureMatrix fbank(const Waveform& w, const SpectrogramConfig& cfg);

// Windowed-sinc polyphase resampler (rational rate conversion).
Waveform resample(const Waveform& w, int target_rate);

}  // namespace promptcodec::dsp
