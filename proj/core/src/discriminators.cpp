#include "promptcodec/discriminators.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "promptcodec/dsp.hpp"
#include "promptcodec/errors.hpp"
#include "promptcodec/ops.hpp"

namespace promptcodec {

void MPDConfig::validate() const {
    if (periods.empty()) throw InvalidConfig("mpd: period list empty");
    std::set<int> seen;
    for (int p : periods) {
        if (p < 2) throw InvalidConfig("mpd: periods must be >= 2");
        if (!seen.insert(p).second) throw InvalidConfig("mpd: periods must be distinct");
    }
    if (channels.empty()) throw InvalidConfig("mpd: channel schedule empty");
    for (int c : channels)
        if (c < 1) throw InvalidConfig("mpd: channels must be positive");
}

void MSSTFTDConfig::validate() const {
    if (fft_sizes.empty()) throw InvalidConfig("msstftd: fft list empty");
    std::set<int> seen;
    for (int n : fft_sizes) {
        if (n < 8 || (n & (n - 1)) != 0)
            throw InvalidConfig("msstftd: fft sizes must be powers of two >= 8");
        if (!seen.insert(n).second) throw InvalidConfig("msstftd: fft sizes must be distinct");
    }
    if (channels < 1) throw InvalidConfig("msstftd: channels must be positive");
}

MultiPeriodDiscriminator::MultiPeriodDiscriminator(const MPDConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg) {
    cfg.validate();
    for (int p : cfg.periods) {
        PeriodCritic c;
        c.period = p;
        int ch = 1;
        for (int next : cfg.channels) {
            c.convs.emplace_back(ch, next, 5, 1, rng, 3, 1, 2, 0);
            ch = next;
        }
        c.out_conv = nn::WNConv2dLayer(ch, 1, 3, 1, rng, 1, 1, 1, 0);
        critics_.push_back(std::move(c));
    }
}

DiscOutput MultiPeriodDiscriminator::forward(const nn::Tensor& wave) const {
    if (wave.ndim() != 1) throw InvalidInput("mpd: expects a 1-D signal");
    const int len = wave.dim(0);
    const int max_p = *std::max_element(cfg_.periods.begin(), cfg_.periods.end());
    if (len < max_p) throw InvalidInput("mpd: input shorter than the largest period");
    DiscOutput out;
    for (const PeriodCritic& c : critics_) {
        const int rows = (len + c.period - 1) / c.period;
        nn::Tensor x = nn::reshape(wave, {1, len});
        if (rows * c.period != len) x = nn::pad1d(x, 0, rows * c.period - len, nn::PadMode::zero);
        nn::Tensor h = nn::reshape(x, {1, rows, c.period});
        std::vector<nn::Tensor> fmaps;
        for (const auto& conv : c.convs) {
            h = nn::leaky_relu(conv.forward(h), 0.1);
            fmaps.push_back(h);
        }
        nn::Tensor logit = c.out_conv.forward(h);
        fmaps.push_back(logit);
        out.logits.push_back(logit);
        out.features.push_back(std::move(fmaps));
    }
    return out;
}

void MultiPeriodDiscriminator::collect(const std::string& prefix, nn::NamedParams& out) const {
    for (size_t i = 0; i < critics_.size(); ++i) {
        const std::string p = prefix + ".p" + std::to_string(critics_[i].period);
        for (size_t j = 0; j < critics_[i].convs.size(); ++j)
            critics_[i].convs[j].collect(p + ".conv" + std::to_string(j), out);
        critics_[i].out_conv.collect(p + ".out", out);
    }
}

MultiScaleSTFTDiscriminator::MultiScaleSTFTDiscriminator(const MSSTFTDConfig& cfg,
                                                         std::mt19937_64& rng)
    : cfg_(cfg) {
    cfg.validate();
    for (int n : cfg.fft_sizes) {
        ScaleCritic c;
        c.n_fft = n;
        const int ch = cfg.channels;
        c.convs.emplace_back(2, ch, 3, 3, rng, 1, 1, 1, 1);
        c.convs.emplace_back(ch, ch, 3, 3, rng, 2, 2, 1, 1);
        c.convs.emplace_back(ch, ch, 3, 3, rng, 2, 2, 1, 1);
        c.out_conv = nn::WNConv2dLayer(ch, 1, 3, 3, rng, 1, 1, 1, 1);
        critics_.push_back(std::move(c));
    }
}

DiscOutput MultiScaleSTFTDiscriminator::forward(const nn::Tensor& wave) const {
    if (wave.ndim() != 1) throw InvalidInput("msstftd: expects a 1-D signal");
    const int len = wave.dim(0);
    const int min_fft = *std::min_element(cfg_.fft_sizes.begin(), cfg_.fft_sizes.end());
    if (len < min_fft) throw InvalidInput("msstftd: input shorter than the smallest fft size");
    DiscOutput out;
    for (const ScaleCritic& c : critics_) {
        const int hop = c.n_fft / 4;
        nn::Tensor frames = nn::frame_signal(wave, c.n_fft, hop, /*center=*/true);
        nn::Tensor window = nn::Tensor::from(dsp::hann_periodic(c.n_fft), {c.n_fft});
        nn::Tensor spec = nn::rdft_rows(nn::mul(frames, nn::expand_rows(window, frames.dim(0))));
        const int f = frames.dim(0);
        const int bins = c.n_fft / 2 + 1;
        nn::Tensor re = nn::reshape(nn::slice_cols(spec, 0, bins), {1, f, bins});
        nn::Tensor im = nn::reshape(nn::slice_cols(spec, bins, 2 * bins), {1, f, bins});
        nn::Tensor h = nn::concat0({re, im});  // [2, F, B]
        std::vector<nn::Tensor> fmaps;
        for (const auto& conv : c.convs) {
            h = nn::leaky_relu(conv.forward(h), 0.1);
            fmaps.push_back(h);
        }
        nn::Tensor logit = c.out_conv.forward(h);
        fmaps.push_back(logit);
        out.logits.push_back(logit);
        out.features.push_back(std::move(fmaps));
    }
    return out;
}

void MultiScaleSTFTDiscriminator::collect(const std::string& prefix, nn::NamedParams& out) const {
    for (size_t i = 0; i < critics_.size(); ++i) {
        const std::string p = prefix + ".fft" + std::to_string(critics_[i].n_fft);
        for (size_t j = 0; j < critics_[i].convs.size(); ++j)
            critics_[i].convs[j].collect(p + ".conv" + std::to_string(j), out);
        critics_[i].out_conv.collect(p + ".out", out);
    }
}

DiscriminatorBank::DiscriminatorBank(const MPDConfig& mpd_cfg, const MSSTFTDConfig& stft_cfg,
                                     std::mt19937_64& rng)
    : mpd(mpd_cfg, rng), msstftd(stft_cfg, rng) {}

DiscOutput DiscriminatorBank::forward(const nn::Tensor& wave) const {
    DiscOutput a = mpd.forward(wave);
    DiscOutput b = msstftd.forward(wave);
    DiscOutput out;
    out.logits = a.logits;
    out.logits.insert(out.logits.end(), b.logits.begin(), b.logits.end());
    out.features = a.features;
    out.features.insert(out.features.end(), b.features.begin(), b.features.end());
    return out;
}

void DiscriminatorBank::collect(const std::string& prefix, nn::NamedParams& out) const {
    mpd.collect(prefix + ".mpd", out);
    msstftd.collect(prefix + ".msstftd", out);
}

}  // namespace promptcodec
