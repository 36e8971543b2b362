// Group-residual vector quantization: the latent channels are split into G
// groups, each quantized by R cascaded residual codebooks. Codebooks learn
// by EMA with dead-code restarts; gradients pass straight through.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "promptcodec/tensor.hpp"
#include "promptcodec/types.hpp"

namespace promptcodec {

struct GRVQConfig {
    int groups = 1;
    int residual_layers = 1;
    int codebook_size = 1024;
    double ema_decay = 0.99;
    double commitment_weight = 0.25;
    double dead_code_threshold = 0.01;
    uint64_t seed = 99;

    int n_q() const { return groups * residual_layers; }
    void validate(int latent_dim) const;
};

// Maps a total codebook count onto (groups, residual_layers):
// 1 -> (1,1), 2 -> (2,1), 4 -> (2,2); even n -> (2, n/2), odd n -> (1, n).
void grvq_split_for_nq(int n_q, int& groups, int& residual_layers);

struct Codebook {
    std::vector<double> entries;     // [K x code_dim]
    std::vector<double> ema_counts;  // [K]
    std::vector<double> ema_sums;    // [K x code_dim]
};

struct QuantizeResult {
    LatentSequence z_q;
    CodeIndices indices;
    double commitment_loss = 0.0;
};

// Per-book data consumed by the EMA update: which entry each frame chose and
// the residual vector that the stage quantized.
struct QuantizeAssignments {
    std::vector<std::vector<int>> entry;               // [n_books][T]
    std::vector<std::vector<double>> residual_inputs;  // [n_books][T x code_dim]
    int frames = 0;
};

struct QuantizeGraphResult {
    nn::Tensor z_q;      // [T,D], straight-through gradient
    nn::Tensor loss_vq;  // scalar commitment term
    CodeIndices indices;
    QuantizeAssignments assignments;
};

class GroupResidualQuantizer {
  public:
    GroupResidualQuantizer(GRVQConfig cfg, int latent_dim);

    QuantizeResult quantize(const LatentSequence& z) const;
    LatentSequence dequantize(const CodeIndices& idx) const;

    // Training-side path over graph tensors.
    QuantizeGraphResult quantize_graph(const nn::Tensor& z) const;

    // EMA codebook update; entries whose decayed count falls below the
    // dead-code threshold are re-seeded from random batch vectors.
    void update_ema(const QuantizeAssignments& assignments);

    const GRVQConfig& config() const { return cfg_; }
    int latent_dim() const { return latent_dim_; }
    int code_dim() const { return code_dim_; }
    int n_books() const { return cfg_.n_q(); }
    std::vector<Codebook>& books() { return books_; }
    const std::vector<Codebook>& books() const { return books_; }

  private:
    struct CoreResult {
        std::vector<double> z_q;  // [T x D]
        CodeIndices indices;
        QuantizeAssignments assignments;
    };
    CoreResult quantize_core(const std::vector<double>& z, int frames) const;

    GRVQConfig cfg_;
    int latent_dim_ = 0;
    int code_dim_ = 0;
    std::vector<Codebook> books_;  // index g * R + r
    mutable std::mt19937_64 reseed_rng_;
};

}  // namespace promptcodec
