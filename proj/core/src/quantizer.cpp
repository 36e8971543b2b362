#include "promptcodec/quantizer.hpp"

#include <cmath>
#include <string>

#include "promptcodec/errors.hpp"
#include "promptcodec/ops.hpp"

namespace promptcodec {

void GRVQConfig::validate(int latent_dim) const {
    if (groups < 1 || residual_layers < 1) throw InvalidConfig("grvq: groups/residuals must be >= 1");
    if (codebook_size < 2) throw InvalidConfig("grvq: codebook size must be >= 2");
    if (latent_dim % groups != 0) throw InvalidConfig("grvq: latent dim not divisible by groups");
    if (!(ema_decay > 0.0 && ema_decay <= 1.0)) throw InvalidConfig("grvq: decay must be in (0,1]");
    if (commitment_weight < 0.0) throw InvalidConfig("grvq: commitment weight must be >= 0");
    if (dead_code_threshold < 0.0) throw InvalidConfig("grvq: dead-code threshold must be >= 0");
}

void grvq_split_for_nq(int n_q, int& groups, int& residual_layers) {
    if (n_q < 1) throw InvalidConfig("grvq: n_q must be >= 1");
    if (n_q == 1) {
        groups = 1;
        residual_layers = 1;
    } else if (n_q % 2 == 0) {
        groups = 2;
        residual_layers = n_q / 2;
    } else {
        groups = 1;
        residual_layers = n_q;
    }
}

GroupResidualQuantizer::GroupResidualQuantizer(GRVQConfig cfg, int latent_dim)
    : cfg_(cfg), latent_dim_(latent_dim), reseed_rng_(cfg.seed) {
    cfg_.validate(latent_dim);
    code_dim_ = latent_dim / cfg_.groups;
    std::mt19937_64 rng(cfg_.seed);
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(code_dim_)));
    books_.resize(cfg_.n_q());
    for (Codebook& b : books_) {
        b.entries.resize(static_cast<size_t>(cfg_.codebook_size) * code_dim_);
        for (double& v : b.entries) v = dist(rng);
        b.ema_counts.assign(cfg_.codebook_size, 1.0);
        b.ema_sums = b.entries;  // consistent with counts == 1
    }
}

GroupResidualQuantizer::CoreResult GroupResidualQuantizer::quantize_core(
    const std::vector<double>& z, int frames) const {
    const int G = cfg_.groups, R = cfg_.residual_layers, K = cfg_.codebook_size;
    const int cd = code_dim_;
    CoreResult res;
    res.z_q.assign(z.size(), 0.0);
    res.indices.frames = frames;
    res.indices.n_q = cfg_.n_q();
    res.indices.values.assign(static_cast<size_t>(frames) * cfg_.n_q(), 0);
    res.assignments.frames = frames;
    res.assignments.entry.assign(n_books(), std::vector<int>(frames, 0));
    res.assignments.residual_inputs.assign(
        n_books(), std::vector<double>(static_cast<size_t>(frames) * cd, 0.0));

    std::vector<double> residual(cd);
    for (int g = 0; g < G; ++g) {
        for (int t = 0; t < frames; ++t) {
            const double* zrow = z.data() + static_cast<size_t>(t) * latent_dim_ + g * cd;
            for (int d = 0; d < cd; ++d) residual[d] = zrow[d];
            double* qrow = res.z_q.data() + static_cast<size_t>(t) * latent_dim_ + g * cd;
            for (int r = 0; r < R; ++r) {
                const int book = g * R + r;
                const Codebook& cb = books_[book];
                // exhaustive nearest neighbor; ties break to the lowest index
                int best = 0;
                double best_d = 0.0;
                for (int k = 0; k < K; ++k) {
                    const double* e = cb.entries.data() + static_cast<size_t>(k) * cd;
                    double dist = 0.0;
                    for (int d = 0; d < cd; ++d) {
                        const double diff = residual[d] - e[d];
                        dist += diff * diff;
                    }
                    if (k == 0 || dist < best_d) {
                        best = k;
                        best_d = dist;
                    }
                }
                res.assignments.entry[book][t] = best;
                std::copy(residual.begin(), residual.end(),
                          res.assignments.residual_inputs[book].begin() +
                              static_cast<size_t>(t) * cd);
                res.indices.at(t, book) = best;
                const double* e = cb.entries.data() + static_cast<size_t>(best) * cd;
                for (int d = 0; d < cd; ++d) {
                    qrow[d] += e[d];
                    residual[d] -= e[d];
                }
            }
        }
    }
    return res;
}

QuantizeResult GroupResidualQuantizer::quantize(const LatentSequence& z) const {
    if (z.dim != latent_dim_) throw InvalidInput("grvq: latent dim mismatch");
    CoreResult core = quantize_core(z.values, z.frames);
    QuantizeResult out;
    out.z_q.frames = z.frames;
    out.z_q.dim = z.dim;
    out.z_q.frame_rate = z.frame_rate;
    out.z_q.values = std::move(core.z_q);
    out.indices = std::move(core.indices);
    double acc = 0.0;
    for (size_t i = 0; i < z.values.size(); ++i) {
        const double d = z.values[i] - out.z_q.values[i];
        acc += d * d;
    }
    out.commitment_loss = cfg_.commitment_weight * acc / static_cast<double>(z.values.size());
    return out;
}

LatentSequence GroupResidualQuantizer::dequantize(const CodeIndices& idx) const {
    if (idx.n_q != cfg_.n_q()) throw CorruptStream("grvq: codebook count mismatch");
    const int G = cfg_.groups, R = cfg_.residual_layers, cd = code_dim_;
    LatentSequence z;
    z.frames = idx.frames;
    z.dim = latent_dim_;
    z.values.assign(static_cast<size_t>(idx.frames) * latent_dim_, 0.0);
    for (int t = 0; t < idx.frames; ++t)
        for (int g = 0; g < G; ++g) {
            double* row = z.values.data() + static_cast<size_t>(t) * latent_dim_ + g * cd;
            for (int r = 0; r < R; ++r) {
                const int k = idx.at(t, g * R + r);
                if (k < 0 || k >= cfg_.codebook_size)
                    throw CorruptStream("grvq: code index out of range (" + std::to_string(k) +
                                        " >= " + std::to_string(cfg_.codebook_size) + ")");
                const double* e =
                    books_[g * R + r].entries.data() + static_cast<size_t>(k) * cd;
                for (int d = 0; d < cd; ++d) row[d] += e[d];
            }
        }
    return z;
}

QuantizeGraphResult GroupResidualQuantizer::quantize_graph(const nn::Tensor& z) const {
    if (z.ndim() != 2 || z.dim(1) != latent_dim_) throw InvalidInput("grvq: latent dim mismatch");
    const int frames = z.dim(0);
    CoreResult core = quantize_core(z.data(), frames);

    // Straight-through: data takes the quantized values, gradient passes as
    // identity because the correction term is a constant.
    std::vector<double> delta(z.data().size());
    for (size_t i = 0; i < delta.size(); ++i) delta[i] = core.z_q[i] - z.data()[i];
    nn::Tensor correction = nn::Tensor::from(std::move(delta), z.shape());
    QuantizeGraphResult out;
    out.z_q = nn::add(z, correction);

    nn::Tensor zq_const = nn::Tensor::from(core.z_q, z.shape());
    nn::Tensor diff = nn::sub(z, zq_const);
    out.loss_vq = nn::mul_scalar(nn::mean_all(nn::mul(diff, diff)), cfg_.commitment_weight);
    out.indices = std::move(core.indices);
    out.assignments = std::move(core.assignments);
    return out;
}

void GroupResidualQuantizer::update_ema(const QuantizeAssignments& assignments) {
    if (static_cast<int>(assignments.entry.size()) != n_books())
        throw InvalidInput("grvq: assignment book count mismatch");
    const double d = cfg_.ema_decay;
    if (d == 1.0) return;  // frozen books
    const int K = cfg_.codebook_size, cd = code_dim_;
    const int frames = assignments.frames;
    std::vector<double> batch_counts(K);
    std::vector<double> batch_sums(static_cast<size_t>(K) * cd);
    for (int book = 0; book < n_books(); ++book) {
        Codebook& cb = books_[book];
        std::fill(batch_counts.begin(), batch_counts.end(), 0.0);
        std::fill(batch_sums.begin(), batch_sums.end(), 0.0);
        const auto& entries = assignments.entry[book];
        const auto& inputs = assignments.residual_inputs[book];
        for (int t = 0; t < frames; ++t) {
            const int k = entries[t];
            batch_counts[k] += 1.0;
            double* srow = batch_sums.data() + static_cast<size_t>(k) * cd;
            const double* in = inputs.data() + static_cast<size_t>(t) * cd;
            for (int c = 0; c < cd; ++c) srow[c] += in[c];
        }
        for (int k = 0; k < K; ++k) {
            cb.ema_counts[k] = d * cb.ema_counts[k] + (1.0 - d) * batch_counts[k];
            double* sums = cb.ema_sums.data() + static_cast<size_t>(k) * cd;
            const double* bs = batch_sums.data() + static_cast<size_t>(k) * cd;
            for (int c = 0; c < cd; ++c) sums[c] = d * sums[c] + (1.0 - d) * bs[c];
            double* e = cb.entries.data() + static_cast<size_t>(k) * cd;
            const double denom = std::max(cb.ema_counts[k], 1e-12);
            for (int c = 0; c < cd; ++c) e[c] = sums[c] / denom;
        }
        // dead-code restart from random batch vectors
        if (frames > 0) {
            std::uniform_int_distribution<int> pick(0, frames - 1);
            for (int k = 0; k < K; ++k) {
                if (cb.ema_counts[k] < cfg_.dead_code_threshold) {
                    const int t = pick(reseed_rng_);
                    const double* in = inputs.data() + static_cast<size_t>(t) * cd;
                    double* e = cb.entries.data() + static_cast<size_t>(k) * cd;
                    double* sums = cb.ema_sums.data() + static_cast<size_t>(k) * cd;
                    for (int c = 0; c < cd; ++c) {
                        e[c] = in[c];
                        sums[c] = in[c];
                    }
                    cb.ema_counts[k] = 1.0;
                }
            }
        }
    }
}

}  // namespace promptcodec
