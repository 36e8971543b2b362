// Training loss terms: SSIM-based disentanglement penalty, waveform +
// multi-resolution mel reconstruction, L1 feature matching, least-squares
// adversarial losses, and their weighted total.
#pragma once

#include <optional>
#include <vector>

#include "promptcodec/tensor.hpp"
#include "promptcodec/types.hpp"

namespace promptcodec {

struct LossWeights {
    // total = b1*rec + b2*feat + b3*vq + b4*adv + b5*drl
    double beta1 = 45.0;
    double beta2 = 2.0;
    double beta3 = 1.0;
    double beta4 = 1.0;
    double beta5 = 1.0;
    double lambda1 = 1.0;  // ssim(z_q, z_pc)
    double lambda2 = 1.0;  // ssim(z_q, z_pv)
    double lambda3 = 1.0;  // ssim(z_pv, z_pc)
    double ssim_c1 = 1e-4;
    double ssim_c2 = 9e-4;

    void validate() const;
};

struct LossReport {
    double l_rec = 0.0;
    double l_f = 0.0;
    double l_vq = 0.0;
    double l_adv = 0.0;
    double l_drl = 0.0;
    double l_total = 0.0;
    // per-pair SSIM values of the disentanglement penalty
    double ssim_q_pc = 0.0;
    double ssim_q_pv = 0.0;
    double ssim_pv_pc = 0.0;
    double l_disc = 0.0;  // discriminator-side loss, logged alongside
};

// Per-frame SSIM across the channel dimension with global (non-windowed)
// statistics, averaged over frames. [D]-shaped inputs broadcast over time.
nn::Tensor ssim_frames(const nn::Tensor& a, const nn::Tensor& b, double c1, double c2);

// Plain-value convenience over latent matrices / prompt vectors.
double ssim(const LatentSequence& a, const LatentSequence& b, double c1 = 1e-4,
            double c2 = 9e-4);
double ssim(const LatentSequence& a, const PromptEmbedding& b, double c1 = 1e-4,
            double c2 = 9e-4);

struct DrlResult {
    nn::Tensor total;  // lambda-weighted sum (scalar); undefined when no pair exists
    std::optional<double> pair_q_pc, pair_q_pv, pair_pv_pc;
};

// Pass undefined prompt tensors to drop the corresponding pairs.
DrlResult drl_loss(const nn::Tensor& z_q, const nn::Tensor& z_pc, const nn::Tensor& z_pv,
                   const LossWeights& w);

struct MelLossConfig {
    std::vector<int> windows{64, 128, 256, 512, 1024, 2048};  // hop = window / 4
    double fmin = 0.0;
    double fmax = 0.0;  // 0 -> Nyquist
    double log_floor = 1e-5;
    int max_mels = 80;  // per-scale band count is min(max_mels, window / 8)
};

// Differentiable log-mel spectrogram of a waveform tensor.
nn::Tensor log_mel_graph(const nn::Tensor& wave, int sample_rate, int n_fft, int hop, int n_mels,
                         double fmin, double fmax, double log_floor);

// L1(x, x_hat) + sum over scales of L1(logmel_s(x), logmel_s(x_hat)).
nn::Tensor reconstruction_loss(const nn::Tensor& x, const nn::Tensor& x_hat, int sample_rate,
                               const MelLossConfig& cfg);

// Mean over discriminators and layers of L1(real, fake) / mean(|real|).
nn::Tensor feature_matching_loss(const std::vector<std::vector<nn::Tensor>>& real_feats,
                                 const std::vector<std::vector<nn::Tensor>>& fake_feats);

struct AdversarialLosses {
    nn::Tensor generator;      // sum of mean((fake - 1)^2)
    nn::Tensor discriminator;  // sum of mean((real - 1)^2) + mean(fake^2)
};

AdversarialLosses adversarial_losses(const std::vector<nn::Tensor>& real_logits,
                                     const std::vector<nn::Tensor>& fake_logits);

struct TotalLossInputs {
    nn::Tensor l_rec, l_f, l_vq, l_adv, l_drl;  // undefined terms count as zero
};

struct TotalLoss {
    nn::Tensor total;  // graph scalar for backward
    LossReport report;
};

// Weighted Eq.-style total; throws NumericalError on non-finite components.
TotalLoss total_loss(const TotalLossInputs& parts, const LossWeights& w);

}  // namespace promptcodec
