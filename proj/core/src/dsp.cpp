#include "promptcodec/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "promptcodec/errors.hpp"
#include "promptcodec/ops.hpp"
#include "promptcodec/tensor.hpp"

namespace promptcodec::dsp {

namespace {

double resolved_fmax(const SpectrogramConfig& cfg, int sample_rate) {
    return cfg.fmax > 0.0 ? cfg.fmax : sample_rate / 2.0;
}

// Slaney mel scale: linear below 1 kHz, logarithmic above.
double hz_to_mel(double f) {
    if (f < 1000.0) return 3.0 * f / 200.0;
    return 15.0 + 27.0 * std::log(f / 1000.0) / std::log(6.4);
}

double mel_to_hz(double m) {
    if (m < 15.0) return 200.0 * m / 3.0;
    return 1000.0 * std::exp(std::log(6.4) * (m - 15.0) / 27.0);
}

}  // namespace

void validate_config(const SpectrogramConfig& cfg, int sample_rate) {
    if (sample_rate <= 0) throw InvalidConfig("sample rate must be positive");
    if (cfg.n_fft < 1 || cfg.hop < 1 || cfg.win < 1 || cfg.n_mels < 1)
        throw InvalidConfig("spectrogram sizes must be positive");
    if (!(cfg.hop <= cfg.win && cfg.win <= cfg.n_fft))
        throw InvalidConfig("requires hop <= win <= n_fft");
    const double fmax = resolved_fmax(cfg, sample_rate);
    if (cfg.fmin < 0.0 || cfg.fmin >= fmax) throw InvalidConfig("requires 0 <= fmin < fmax");
    if (fmax > sample_rate / 2.0 + 1e-9) throw InvalidConfig("fmax above Nyquist");
    if (cfg.log_floor <= 0.0) throw InvalidConfig("log floor must be positive");
}

std::vector<double> hann_periodic(int n) {
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / n));
    return w;
}

std::vector<double> mel_filterbank(int n_mels, int n_fft, int sample_rate, double fmin,
                                   double fmax) {
    const int bins = n_fft / 2 + 1;
    std::vector<double> fb(static_cast<size_t>(n_mels) * bins, 0.0);
    std::vector<double> pts(n_mels + 2);
    const double m0 = hz_to_mel(fmin), m1 = hz_to_mel(fmax);
    for (int i = 0; i < n_mels + 2; ++i)
        pts[i] = mel_to_hz(m0 + (m1 - m0) * i / (n_mels + 1));
    for (int m = 0; m < n_mels; ++m) {
        const double lo = pts[m], mid = pts[m + 1], hi = pts[m + 2];
        const double dn_lo = std::max(mid - lo, 1e-12);
        const double dn_hi = std::max(hi - mid, 1e-12);
        const double enorm = 2.0 / std::max(hi - lo, 1e-12);
        for (int k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / n_fft;
            const double w = std::min((f - lo) / dn_lo, (hi - f) / dn_hi);
            if (w > 0.0) fb[static_cast<size_t>(m) * bins + k] = w * enorm;
        }
    }
    return fb;
}

ComplexSpectrogram stft(const Waveform& w, const SpectrogramConfig& cfg) {
    validate_config(cfg, w.sample_rate);
    if (w.samples.empty()) throw InvalidInput("stft: empty waveform");

    // Shares framing and DFT with the differentiable ops so the training-time
    // spectral losses and this frontend agree exactly.
    nn::NoGradGuard ng;
    nn::Tensor x = nn::Tensor::from(w.samples, {static_cast<int>(w.samples.size())});
    nn::Tensor frames = nn::frame_signal(x, cfg.n_fft, cfg.hop, /*center=*/true);

    std::vector<double> win = hann_periodic(cfg.win);
    std::vector<double> padded(cfg.n_fft, 0.0);
    const int off = (cfg.n_fft - cfg.win) / 2;
    for (int i = 0; i < cfg.win; ++i) padded[off + i] = win[i];
    nn::Tensor wt = nn::Tensor::from(padded, {cfg.n_fft});
    nn::Tensor windowed = nn::mul(frames, nn::expand_rows(wt, frames.dim(0)));
    nn::Tensor spec = nn::rdft_rows(windowed);

    ComplexSpectrogram out;
    out.frames = frames.dim(0);
    out.bins = cfg.n_fft / 2 + 1;
    out.re.resize(static_cast<size_t>(out.frames) * out.bins);
    out.im.resize(out.re.size());
    const auto& sd = spec.data();
    for (int f = 0; f < out.frames; ++f)
        for (int k = 0; k < out.bins; ++k) {
            out.re[static_cast<size_t>(f) * out.bins + k] =
                sd[static_cast<size_t>(f) * 2 * out.bins + k];
            out.im[static_cast<size_t>(f) * out.bins + k] =
                sd[static_cast<size_t>(f) * 2 * out.bins + out.bins + k];
        }
    return out;
}

FeatureMatrix mel_spectrogram(const Waveform& w, const SpectrogramConfig& cfg) {
    ComplexSpectrogram spec = stft(w, cfg);
    const int bins = spec.bins;
    const std::vector<double> fb = mel_filterbank(cfg.n_mels, cfg.n_fft, w.sample_rate, cfg.fmin,
                                                  resolved_fmax(cfg, w.sample_rate));
    FeatureMatrix out;
    out.frames = spec.frames;
    out.bins = cfg.n_mels;
    out.frame_rate = static_cast<double>(w.sample_rate) / cfg.hop;
    out.values.assign(static_cast<size_t>(out.frames) * cfg.n_mels, 0.0);
    std::vector<double> power(bins);
    for (int f = 0; f < spec.frames; ++f) {
        const size_t base = static_cast<size_t>(f) * bins;
        for (int k = 0; k < bins; ++k)
            power[k] = spec.re[base + k] * spec.re[base + k] + spec.im[base + k] * spec.im[base + k];
        for (int m = 0; m < cfg.n_mels; ++m) {
            const double* frow = fb.data() + static_cast<size_t>(m) * bins;
            double acc = 0.0;
            for (int k = 0; k < bins; ++k) acc += frow[k] * power[k];
            out.at(f, m) = std::log(std::max(acc, cfg.log_floor));
        }
    }
    return out;
}

Waveform pre_emphasis(const Waveform& w, double coeff) {
    Waveform out;
    out.sample_rate = w.sample_rate;
    out.samples.resize(w.samples.size());
    for (size_t i = 0; i < w.samples.size(); ++i) {
        const double prev = i == 0 ? w.samples[0] : w.samples[i - 1];
        out.samples[i] = w.samples[i] - coeff * prev;
    }
    return out;
}

FeatureMatrix fbank(const Waveform& w, const SpectrogramConfig& cfg) {
    FeatureMatrix out = mel_spectrogram(pre_emphasis(w), cfg);
    // per-band mean normalization over time
    for (int m = 0; m < out.bins; ++m) {
        double mu = 0.0;
        for (int f = 0; f < out.frames; ++f) mu += out.at(f, m);
        mu /= out.frames;
        for (int f = 0; f < out.frames; ++f) out.at(f, m) -= mu;
    }
    return out;
}

Waveform resample(const Waveform& w, int target_rate) {
    if (target_rate <= 0) throw InvalidInput("resample: bad target rate");
    if (w.sample_rate == target_rate) return w;
    if (w.samples.empty()) throw InvalidInput("resample: empty waveform");
    const int g = std::gcd(w.sample_rate, target_rate);
    const int up = target_rate / g;
    const int down = w.sample_rate / g;
    const int scale = std::max(up, down);
    const int zero_crossings = 24;
    const int64_t half_width = static_cast<int64_t>(zero_crossings) * scale;
    const double cutoff = 0.5 / scale;  // cycles per upsampled sample

    auto kernel = [&](int64_t t) -> double {
        if (t == 0) return 2.0 * cutoff;
        if (std::llabs(t) > half_width) return 0.0;
        const double u = 2.0 * cutoff * static_cast<double>(t);
        const double s = std::sin(M_PI * u) / (M_PI * static_cast<double>(t));
        const double win = 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(t) / half_width));
        return s * win;
    };

    const int64_t in_len = static_cast<int64_t>(w.samples.size());
    const int64_t out_len = (in_len * up + down - 1) / down;
    Waveform out;
    out.sample_rate = target_rate;
    out.samples.assign(static_cast<size_t>(out_len), 0.0);
    for (int64_t j = 0; j < out_len; ++j) {
        const int64_t u = j * down;  // position in the upsampled domain
        const int64_t n_lo = std::max<int64_t>(0, (u - half_width + up - 1) / up);
        const int64_t n_hi = std::min<int64_t>(in_len - 1, (u + half_width) / up);
        double acc = 0.0;
        for (int64_t n = n_lo; n <= n_hi; ++n) acc += w.samples[n] * kernel(u - n * up);
        out.samples[j] = acc * up;
    }
    return out;
}

}  // namespace promptcodec::dsp
