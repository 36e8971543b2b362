// Adaptive feature-weighted fusion: z~ = a1*z_q + a2*z_PC + a3*z_PV with
// learnable scalar weights and prompt vectors broadcast over time.
#pragma once

#include <string>

#include "promptcodec/layers.hpp"
#include "promptcodec/types.hpp"

namespace promptcodec {

struct FusionWeights {
    nn::Tensor alpha1, alpha2, alpha3;  // [1] each

    static FusionWeights make(double a1 = 1.0, double a2 = 0.1, double a3 = 0.1,
                              bool trainable = true);
    void set_trainable(bool trainable);
    void collect(const std::string& prefix, nn::NamedParams& out) const;
    double a1() const { return alpha1.value(); }
    double a2() const { return alpha2.value(); }
    double a3() const { return alpha3.value(); }
};

// Graph-side fusion; pass undefined tensors to drop a prompt branch.
nn::Tensor fuse(const nn::Tensor& z_q, const nn::Tensor& z_pc, const nn::Tensor& z_pv,
                const FusionWeights& w);

// Inference-side fusion over plain values; null prompts drop the branch.
LatentSequence fuse(const LatentSequence& z_q, const PromptEmbedding* z_pc,
                    const PromptEmbedding* z_pv, const FusionWeights& w);

}  // namespace promptcodec
