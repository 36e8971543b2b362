// Waveform encoder (strided conv stacks with residual units) and decoder
// (transposed convs with residual blocks). Encoder and decoder are not
// mirrored but share the same total stride M.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "promptcodec/layers.hpp"
#include "promptcodec/types.hpp"

namespace promptcodec {

struct CodecConfig {
    int sample_rate = 24000;
    int latent_dim = 256;
    std::vector<int> encoder_strides{8, 5, 4, 2};
    std::vector<int> decoder_strides{5, 4, 4, 4};
    int base_channels = 32;
    int kernel_scale = 2;  // per-stage kernel = kernel_scale * stride
    uint64_t seed = 1234;

    int total_stride() const;  // product of encoder strides
    void validate() const;     // both stride products equal, sizes positive
};

namespace detail {

// ELU -> dilated conv (k=3) -> ELU -> 1x1 conv, with skip connection.
struct ResidualUnit {
    nn::Conv1dLayer c1, c2;
    ResidualUnit() = default;
    ResidualUnit(int channels, int dilation, std::mt19937_64& rng);
    nn::Tensor forward(const nn::Tensor& x) const;
    void collect(const std::string& prefix, nn::NamedParams& out) const;
};

}  // namespace detail

class Encoder {
  public:
    Encoder(const CodecConfig& cfg, std::mt19937_64& rng);

    // [L] waveform tensor -> [T, D] latent, T = ceil(L / M)
    nn::Tensor forward(const nn::Tensor& wave) const;
    // Inference path with the spec's validation contract.
    LatentSequence encode(const Waveform& w) const;
    void collect(const std::string& prefix, nn::NamedParams& out) const;

  private:
    CodecConfig cfg_;
    nn::Conv1dLayer head_;
    struct Stage {
        detail::ResidualUnit r1, r2;
        nn::Conv1dLayer down;
    };
    std::vector<Stage> stages_;
    nn::Conv1dLayer tail_;
};

class Decoder {
  public:
    Decoder(const CodecConfig& cfg, std::mt19937_64& rng);

    // [T, D] latent -> [T * M] waveform tensor (exact length)
    nn::Tensor forward(const nn::Tensor& latent) const;
    Waveform decode(const LatentSequence& z) const;
    void collect(const std::string& prefix, nn::NamedParams& out) const;

    // Zeroes the final projection (used by tests for the silent-output contract).
    void zero_output_layer();

  private:
    CodecConfig cfg_;
    nn::Conv1dLayer head_;
    struct Stage {
        nn::ConvT1dLayer up;
        detail::ResidualUnit r1, r2;
    };
    std::vector<Stage> stages_;
    nn::Conv1dLayer tail_;
};

}  // namespace promptcodec
