#include "promptcodec/losses.hpp"

#include <cmath>

#include "promptcodec/dsp.hpp"
#include "promptcodec/errors.hpp"
#include "promptcodec/ops.hpp"

namespace promptcodec {

void LossWeights::validate() const {
    for (double v : {beta1, beta2, beta3, beta4, beta5, lambda1, lambda2, lambda3})
        if (!(v >= 0.0) || !std::isfinite(v))
            throw InvalidConfig("loss weights must be finite and >= 0");
    if (ssim_c1 <= 0.0 || ssim_c2 <= 0.0) throw InvalidConfig("ssim constants must be positive");
}

nn::Tensor ssim_frames(const nn::Tensor& a_in, const nn::Tensor& b_in, double c1, double c2) {
    nn::Tensor a = a_in, b = b_in;
    if (a.ndim() == 1 && b.ndim() == 2) a = nn::expand_rows(a, b.dim(0));
    if (b.ndim() == 1 && a.ndim() == 2) b = nn::expand_rows(b, a.dim(0));
    if (a.ndim() == 1) a = nn::reshape(a, {1, a.dim(0)});
    if (b.ndim() == 1) b = nn::reshape(b, {1, b.dim(0)});
    if (a.shape() != b.shape()) throw InvalidInput("ssim: shape mismatch after broadcast");
    if (c1 <= 0.0 || c2 <= 0.0) throw InvalidInput("ssim: constants must be positive");
    const int cols = a.dim(1);

    nn::Tensor mu_a = nn::row_mean(a);
    nn::Tensor mu_b = nn::row_mean(b);
    nn::Tensor ad = nn::sub(a, nn::expand_cols(mu_a, cols));
    nn::Tensor bd = nn::sub(b, nn::expand_cols(mu_b, cols));
    nn::Tensor var_a = nn::row_mean(nn::mul(ad, ad));
    nn::Tensor var_b = nn::row_mean(nn::mul(bd, bd));
    nn::Tensor cov = nn::row_mean(nn::mul(ad, bd));

    nn::Tensor num = nn::mul(nn::add_scalar(nn::mul_scalar(nn::mul(mu_a, mu_b), 2.0), c1),
                             nn::add_scalar(nn::mul_scalar(cov, 2.0), c2));
    nn::Tensor den = nn::mul(nn::add_scalar(nn::add(nn::mul(mu_a, mu_a), nn::mul(mu_b, mu_b)), c1),
                             nn::add_scalar(nn::add(var_a, var_b), c2));
    return nn::mean_all(nn::div(num, den));
}

double ssim(const LatentSequence& a, const LatentSequence& b, double c1, double c2) {
    nn::NoGradGuard ng;
    return ssim_frames(nn::Tensor::from(a.values, {a.frames, a.dim}),
                       nn::Tensor::from(b.values, {b.frames, b.dim}), c1, c2)
        .value();
}

double ssim(const LatentSequence& a, const PromptEmbedding& b, double c1, double c2) {
    nn::NoGradGuard ng;
    return ssim_frames(nn::Tensor::from(a.values, {a.frames, a.dim}),
                       nn::Tensor::from(b.vector, {static_cast<int>(b.vector.size())}), c1, c2)
        .value();
}

DrlResult drl_loss(const nn::Tensor& z_q, const nn::Tensor& z_pc, const nn::Tensor& z_pv,
                   const LossWeights& w) {
    DrlResult out;
    std::vector<nn::Tensor> terms;
    if (z_pc.defined()) {
        nn::Tensor s = ssim_frames(z_q, z_pc, w.ssim_c1, w.ssim_c2);
        out.pair_q_pc = s.value();
        terms.push_back(nn::mul_scalar(s, w.lambda1));
    }
    if (z_pv.defined()) {
        nn::Tensor s = ssim_frames(z_q, z_pv, w.ssim_c1, w.ssim_c2);
        out.pair_q_pv = s.value();
        terms.push_back(nn::mul_scalar(s, w.lambda2));
    }
    if (z_pc.defined() && z_pv.defined()) {
        nn::Tensor s = ssim_frames(z_pv, z_pc, w.ssim_c1, w.ssim_c2);
        out.pair_pv_pc = s.value();
        terms.push_back(nn::mul_scalar(s, w.lambda3));
    }
    if (!terms.empty()) {
        nn::Tensor acc = terms[0];
        for (size_t i = 1; i < terms.size(); ++i) acc = nn::add(acc, terms[i]);
        out.total = acc;
    }
    return out;
}

nn::Tensor log_mel_graph(const nn::Tensor& wave, int sample_rate, int n_fft, int hop, int n_mels,
                         double fmin, double fmax, double log_floor_v) {
    if (wave.ndim() != 1) throw InvalidInput("log_mel_graph: expects a 1-D signal");
    const double fx = fmax > 0.0 ? fmax : sample_rate / 2.0;
    nn::Tensor frames = nn::frame_signal(wave, n_fft, hop, /*center=*/true);
    nn::Tensor window =
        nn::Tensor::from(dsp::hann_periodic(n_fft), {n_fft});
    nn::Tensor windowed = nn::mul(frames, nn::expand_rows(window, frames.dim(0)));
    nn::Tensor spec = nn::rdft_rows(windowed);
    const int bins = n_fft / 2 + 1;
    nn::Tensor re = nn::slice_cols(spec, 0, bins);
    nn::Tensor im = nn::slice_cols(spec, bins, 2 * bins);
    nn::Tensor power = nn::add(nn::mul(re, re), nn::mul(im, im));
    // constant filterbank, transposed for the matmul: [bins, n_mels]
    std::vector<double> fb = dsp::mel_filterbank(n_mels, n_fft, sample_rate, fmin, fx);
    std::vector<double> fb_t(static_cast<size_t>(bins) * n_mels);
    for (int m = 0; m < n_mels; ++m)
        for (int k = 0; k < bins; ++k)
            fb_t[static_cast<size_t>(k) * n_mels + m] = fb[static_cast<size_t>(m) * bins + k];
    nn::Tensor mel = nn::matmul(power, nn::Tensor::from(std::move(fb_t), {bins, n_mels}));
    return nn::log_floor(mel, log_floor_v);
}

nn::Tensor reconstruction_loss(const nn::Tensor& x, const nn::Tensor& x_hat, int sample_rate,
                               const MelLossConfig& cfg) {
    if (x.ndim() != 1 || x_hat.ndim() != 1) throw InvalidInput("reconstruction: expects signals");
    if (x.dim(0) != x_hat.dim(0)) throw InvalidInput("reconstruction: length mismatch");
    nn::Tensor total = nn::mean_all(nn::abs_t(nn::sub(x, x_hat)));
    for (int win : cfg.windows) {
        const int hop = std::max(1, win / 4);
        const int mels = std::max(4, std::min(cfg.max_mels, win / 8));
        nn::Tensor ma =
            log_mel_graph(x, sample_rate, win, hop, mels, cfg.fmin, cfg.fmax, cfg.log_floor);
        nn::Tensor mb =
            log_mel_graph(x_hat, sample_rate, win, hop, mels, cfg.fmin, cfg.fmax, cfg.log_floor);
        total = nn::add(total, nn::mean_all(nn::abs_t(nn::sub(ma, mb))));
    }
    return total;
}

nn::Tensor feature_matching_loss(const std::vector<std::vector<nn::Tensor>>& real_feats,
                                 const std::vector<std::vector<nn::Tensor>>& fake_feats) {
    if (real_feats.size() != fake_feats.size() || real_feats.empty())
        throw InvalidInput("feature matching: list size mismatch");
    std::vector<nn::Tensor> terms;
    for (size_t d = 0; d < real_feats.size(); ++d) {
        if (real_feats[d].size() != fake_feats[d].size())
            throw InvalidInput("feature matching: layer count mismatch");
        for (size_t l = 0; l < real_feats[d].size(); ++l) {
            const nn::Tensor& r = real_feats[d][l];
            const nn::Tensor& f = fake_feats[d][l];
            if (r.shape() != f.shape()) throw InvalidInput("feature matching: shape mismatch");
            double mean_abs = 0.0;
            for (double v : r.data()) mean_abs += std::fabs(v);
            mean_abs /= static_cast<double>(r.numel());
            const double norm = std::max(mean_abs, 1e-12);
            terms.push_back(nn::mul_scalar(nn::mean_all(nn::abs_t(nn::sub(r, f))), 1.0 / norm));
        }
    }
    nn::Tensor acc = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) acc = nn::add(acc, terms[i]);
    return nn::mul_scalar(acc, 1.0 / static_cast<double>(terms.size()));
}

AdversarialLosses adversarial_losses(const std::vector<nn::Tensor>& real_logits,
                                     const std::vector<nn::Tensor>& fake_logits) {
    if (real_logits.empty() || fake_logits.empty() || real_logits.size() != fake_logits.size())
        throw InvalidInput("adversarial: empty or mismatched logit lists");
    nn::Tensor gen, disc;
    for (size_t i = 0; i < real_logits.size(); ++i) {
        nn::Tensor rm1 = nn::add_scalar(real_logits[i], -1.0);
        nn::Tensor fm1 = nn::add_scalar(fake_logits[i], -1.0);
        nn::Tensor d = nn::add(nn::mean_all(nn::mul(rm1, rm1)),
                               nn::mean_all(nn::mul(fake_logits[i], fake_logits[i])));
        nn::Tensor g = nn::mean_all(nn::mul(fm1, fm1));
        disc = disc.defined() ? nn::add(disc, d) : d;
        gen = gen.defined() ? nn::add(gen, g) : g;
    }
    return {gen, disc};
}

TotalLoss total_loss(const TotalLossInputs& parts, const LossWeights& w) {
    w.validate();
    auto term_value = [](const nn::Tensor& t) { return t.defined() ? t.value() : 0.0; };
    TotalLoss out;
    out.report.l_rec = term_value(parts.l_rec);
    out.report.l_f = term_value(parts.l_f);
    out.report.l_vq = term_value(parts.l_vq);
    out.report.l_adv = term_value(parts.l_adv);
    out.report.l_drl = term_value(parts.l_drl);
    for (double v : {out.report.l_rec, out.report.l_f, out.report.l_vq, out.report.l_adv,
                     out.report.l_drl})
        if (!std::isfinite(v)) throw NumericalError("non-finite loss component");

    nn::Tensor total = nn::Tensor::scalar(0.0);
    auto add_term = [&](const nn::Tensor& t, double beta) {
        if (t.defined() && beta != 0.0) total = nn::add(total, nn::mul_scalar(t, beta));
    };
    add_term(parts.l_rec, w.beta1);
    add_term(parts.l_f, w.beta2);
    add_term(parts.l_vq, w.beta3);
    add_term(parts.l_adv, w.beta4);
    add_term(parts.l_drl, w.beta5);
    out.total = total;
    out.report.l_total = total.value();
    if (!std::isfinite(out.report.l_total)) throw NumericalError("non-finite total loss");
    return out;
}

}  // namespace promptcodec
