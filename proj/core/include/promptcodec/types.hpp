// Shared domain value types passed between the codec stages.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "promptcodec/errors.hpp"

namespace promptcodec {

// Mono PCM signal, samples nominally in [-1, 1].
struct Waveform {
    std::vector<double> samples;
    int sample_rate = 0;

    int64_t length() const { return static_cast<int64_t>(samples.size()); }
    double duration_seconds() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

// Time-major feature matrix [frames x bins] (mel spectrogram, FBank, ...).
struct FeatureMatrix {
    std::vector<double> values;  // row-major
    int frames = 0;
    int bins = 0;
    double frame_rate = 0.0;  // Hz

    double& at(int t, int b) { return values[static_cast<size_t>(t) * bins + b]; }
    double at(int t, int b) const { return values[static_cast<size_t>(t) * bins + b]; }
};

// Time-major latent matrix [frames x dim]; houses z, z_q and the fused decoder input.
struct LatentSequence {
    std::vector<double> values;  // row-major
    int frames = 0;
    int dim = 0;
    double frame_rate = 0.0;  // Hz

    double& at(int t, int d) { return values[static_cast<size_t>(t) * dim + d]; }
    double at(int t, int d) const { return values[static_cast<size_t>(t) * dim + d]; }
};

// Integer codebook indices [frames x n_q]; column order is group-major,
// residual-minor: column g*R + r holds group g, residual stage r.
struct CodeIndices {
    std::vector<int> values;  // row-major
    int frames = 0;
    int n_q = 0;

    int& at(int t, int q) { return values[static_cast<size_t>(t) * n_q + q]; }
    int at(int t, int q) const { return values[static_cast<size_t>(t) * n_q + q]; }
};

enum class PromptSource { conditional, voiceprint };

// One utterance-level D-dimensional prompt vector (z_PC or z_PV after alignment).
struct PromptEmbedding {
    std::vector<double> vector;
    PromptSource source = PromptSource::conditional;
};

}  // namespace promptcodec
