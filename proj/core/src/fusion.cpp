#include "promptcodec/fusion.hpp"

#include "promptcodec/errors.hpp"
#include "promptcodec/ops.hpp"

namespace promptcodec {

FusionWeights FusionWeights::make(double a1, double a2, double a3, bool trainable) {
    FusionWeights w;
    w.alpha1 = nn::Tensor::scalar(a1, trainable);
    w.alpha2 = nn::Tensor::scalar(a2, trainable);
    w.alpha3 = nn::Tensor::scalar(a3, trainable);
    return w;
}

void FusionWeights::set_trainable(bool trainable) {
    alpha1.set_requires_grad(trainable);
    alpha2.set_requires_grad(trainable);
    alpha3.set_requires_grad(trainable);
}

void FusionWeights::collect(const std::string& prefix, nn::NamedParams& out) const {
    out.emplace_back(prefix + ".alpha1", alpha1);
    out.emplace_back(prefix + ".alpha2", alpha2);
    out.emplace_back(prefix + ".alpha3", alpha3);
}

nn::Tensor fuse(const nn::Tensor& z_q, const nn::Tensor& z_pc, const nn::Tensor& z_pv,
                const FusionWeights& w) {
    if (z_q.ndim() != 2) throw InvalidInput("fuse: z_q must be [T, D]");
    const int frames = z_q.dim(0), d = z_q.dim(1);
    nn::Tensor out = nn::scale(z_q, w.alpha1);
    if (z_pc.defined()) {
        if (z_pc.ndim() != 1 || z_pc.dim(0) != d)
            throw InvalidInput("fuse: conditional prompt dimension mismatch");
        out = nn::add(out, nn::expand_rows(nn::scale(z_pc, w.alpha2), frames));
    }
    if (z_pv.defined()) {
        if (z_pv.ndim() != 1 || z_pv.dim(0) != d)
            throw InvalidInput("fuse: voiceprint prompt dimension mismatch");
        out = nn::add(out, nn::expand_rows(nn::scale(z_pv, w.alpha3), frames));
    }
    return out;
}

LatentSequence fuse(const LatentSequence& z_q, const PromptEmbedding* z_pc,
                    const PromptEmbedding* z_pv, const FusionWeights& w) {
    nn::NoGradGuard ng;
    nn::Tensor zq = nn::Tensor::from(z_q.values, {z_q.frames, z_q.dim});
    nn::Tensor pc, pv;
    if (z_pc) pc = nn::Tensor::from(z_pc->vector, {static_cast<int>(z_pc->vector.size())});
    if (z_pv) pv = nn::Tensor::from(z_pv->vector, {static_cast<int>(z_pv->vector.size())});
    nn::Tensor out = fuse(zq, pc, pv, w);
    LatentSequence z;
    z.frames = z_q.frames;
    z.dim = z_q.dim;
    z.frame_rate = z_q.frame_rate;
    z.values = out.data();
    return z;
}

}  // namespace promptcodec
