// Adversarial critics: multi-period discriminator over period-reshaped
// waveforms and multi-scale STFT discriminator over complex spectrograms.
// Both return logit maps plus per-layer feature maps for feature matching.
#pragma once

#include <random>
#include <vector>

#include "promptcodec/layers.hpp"
#include "promptcodec/types.hpp"

namespace promptcodec {

struct MPDConfig {
    std::vector<int> periods{2, 3, 5, 7, 11};
    std::vector<int> channels{16, 64, 256};  // conv channel schedule per period

    void validate() const;
};

struct MSSTFTDConfig {
    std::vector<int> fft_sizes{2048, 1024, 512, 256, 128};  // hop = fft/4, win = fft
    int channels = 32;

    void validate() const;
};

struct DiscOutput {
    std::vector<nn::Tensor> logits;                 // one per critic
    std::vector<std::vector<nn::Tensor>> features;  // per critic, per layer
};

class MultiPeriodDiscriminator {
  public:
    MultiPeriodDiscriminator() = default;
    MultiPeriodDiscriminator(const MPDConfig& cfg, std::mt19937_64& rng);

    DiscOutput forward(const nn::Tensor& wave) const;  // [L]
    void collect(const std::string& prefix, nn::NamedParams& out) const;
    const MPDConfig& config() const { return cfg_; }

  private:
    MPDConfig cfg_;
    struct PeriodCritic {
        int period = 0;
        std::vector<nn::WNConv2dLayer> convs;
        nn::WNConv2dLayer out_conv;
    };
    std::vector<PeriodCritic> critics_;
};

class MultiScaleSTFTDiscriminator {
  public:
    MultiScaleSTFTDiscriminator() = default;
    MultiScaleSTFTDiscriminator(const MSSTFTDConfig& cfg, std::mt19937_64& rng);

    DiscOutput forward(const nn::Tensor& wave) const;
    void collect(const std::string& prefix, nn::NamedParams& out) const;
    const MSSTFTDConfig& config() const { return cfg_; }

  private:
    MSSTFTDConfig cfg_;
    struct ScaleCritic {
        int n_fft = 0;
        std::vector<nn::WNConv2dLayer> convs;
        nn::WNConv2dLayer out_conv;
    };
    std::vector<ScaleCritic> critics_;
};

// Both critics together, as used by the training loop.
struct DiscriminatorBank {
    MultiPeriodDiscriminator mpd;
    MultiScaleSTFTDiscriminator msstftd;

    DiscriminatorBank() = default;
    DiscriminatorBank(const MPDConfig& mpd_cfg, const MSSTFTDConfig& stft_cfg,
                      std::mt19937_64& rng);
    DiscOutput forward(const nn::Tensor& wave) const;
    void collect(const std::string& prefix, nn::NamedParams& out) const;
};

}  // namespace promptcodec
