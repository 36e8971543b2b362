#include "promptcodec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "promptcodec/dsp.hpp"
#include "promptcodec/errors.hpp"
#include "promptcodec/fft.hpp"

namespace promptcodec::metrics {

namespace {

constexpr int kMcdMels = 80;
constexpr int kMcdCoeffs = 13;  // c1..c13

// orthonormal DCT-II row k over n points
void dct_row(const double* x, int n, int k, double& out) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
        acc += x[i] * std::cos(M_PI * k * (2.0 * i + 1.0) / (2.0 * n));
    const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    out = acc * scale;
}

}  // namespace

double mcd(const Waveform& ref, const Waveform& deg) {
    if (ref.sample_rate != deg.sample_rate) throw InvalidInput("mcd: sample-rate mismatch");
    if (ref.samples.empty()) throw InvalidInput("mcd: empty reference");
    Waveform d = deg;
    d.samples.resize(ref.samples.size(), 0.0);  // truncate or zero-pad

    dsp::SpectrogramConfig cfg;
    cfg.n_mels = kMcdMels;
    const FeatureMatrix mr = dsp::mel_spectrogram(ref, cfg);
    const FeatureMatrix md = dsp::mel_spectrogram(d, cfg);

    double total = 0.0;
    for (int t = 0; t < mr.frames; ++t) {
        double dist2 = 0.0;
        for (int k = 1; k <= kMcdCoeffs; ++k) {
            double cr, cd;
            dct_row(&mr.values[static_cast<size_t>(t) * kMcdMels], kMcdMels, k, cr);
            dct_row(&md.values[static_cast<size_t>(t) * kMcdMels], kMcdMels, k, cd);
            const double diff = cr - cd;
            dist2 += diff * diff;
        }
        total += std::sqrt(dist2);
    }
    const double scale = 10.0 * std::sqrt(2.0) / std::log(10.0);
    return scale * total / mr.frames;
}

namespace {

constexpr int kStoiRate = 10000;
constexpr int kStoiFrame = 256;
constexpr int kStoiHop = 128;
constexpr int kStoiFft = 512;
constexpr int kStoiBands = 15;
constexpr double kStoiBandStart = 150.0;
constexpr int kStoiSegment = 30;      // frames per 384 ms envelope segment
constexpr double kStoiDynRange = 40.0;  // silence threshold below peak, dB
constexpr double kStoiBeta = -15.0;     // clipping bound, dB

std::vector<std::vector<double>> frame_signal_plain(const std::vector<double>& x, int frame,
                                                    int hop, const std::vector<double>& window) {
    std::vector<std::vector<double>> frames;
    for (size_t start = 0; start + frame <= x.size(); start += hop) {
        std::vector<double> f(frame);
        for (int i = 0; i < frame; ++i) f[i] = x[start + i] * window[i];
        frames.push_back(std::move(f));
    }
    return frames;
}

}  // namespace

double stoi(const Waveform& ref, const Waveform& deg) {
    if (ref.sample_rate != deg.sample_rate) throw InvalidInput("stoi: sample-rate mismatch");
    Waveform d = deg;
    d.samples.resize(ref.samples.size(), 0.0);

    const Waveform x10 = dsp::resample(ref, kStoiRate);
    const Waveform y10 = dsp::resample(d, kStoiRate);

    const std::vector<double> win = dsp::hann_periodic(kStoiFrame);
    auto xf = frame_signal_plain(x10.samples, kStoiFrame, kStoiHop, win);
    auto yf = frame_signal_plain(y10.samples, kStoiFrame, kStoiHop, win);
    if (xf.size() < 2) throw InvalidInput("stoi: input too short for analysis");

    // silent-frame removal keyed on the reference energy
    double max_e = 0.0;
    std::vector<double> energy(xf.size());
    for (size_t t = 0; t < xf.size(); ++t) {
        double e = 0.0;
        for (double v : xf[t]) e += v * v;
        energy[t] = 10.0 * std::log10(std::max(e, 1e-30));
        max_e = t == 0 ? energy[t] : std::max(max_e, energy[t]);
    }
    std::vector<std::vector<double>> xs, ys;
    for (size_t t = 0; t < xf.size(); ++t) {
        if (energy[t] > max_e - kStoiDynRange) {
            xs.push_back(std::move(xf[t]));
            ys.push_back(std::move(yf[t]));
        }
    }
    const int frames = static_cast<int>(xs.size());
    if (frames < kStoiSegment) throw InvalidInput("stoi: too few active frames");

    // 1/3-octave band matrix over the 512-point spectrum
    const int bins = kStoiFft / 2 + 1;
    std::vector<std::vector<int>> band_bins(kStoiBands);
    for (int j = 0; j < kStoiBands; ++j) {
        const double cf = kStoiBandStart * std::pow(2.0, j / 3.0);
        const double lo = cf / std::pow(2.0, 1.0 / 6.0);
        const double hi = cf * std::pow(2.0, 1.0 / 6.0);
        for (int k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * kStoiRate / kStoiFft;
            if (f >= lo && f < hi) band_bins[j].push_back(k);
        }
    }

    auto band_envelopes = [&](const std::vector<std::vector<double>>& framed) {
        std::vector<std::vector<double>> env(kStoiBands, std::vector<double>(frames, 0.0));
        std::vector<double> padded(kStoiFft, 0.0);
        for (int t = 0; t < frames; ++t) {
            std::fill(padded.begin(), padded.end(), 0.0);
            std::copy(framed[t].begin(), framed[t].end(), padded.begin());
            const auto spec = dsp::rfft(padded);
            for (int j = 0; j < kStoiBands; ++j) {
                double acc = 0.0;
                for (int k : band_bins[j]) acc += std::norm(spec[k]);
                env[j][t] = std::sqrt(acc);
            }
        }
        return env;
    };
    const auto xe = band_envelopes(xs);
    const auto ye = band_envelopes(ys);

    const double clip_gain = 1.0 + std::pow(10.0, -kStoiBeta / 20.0);
    double total = 0.0;
    int count = 0;
    std::vector<double> xseg(kStoiSegment), yseg(kStoiSegment);
    for (int m = kStoiSegment - 1; m < frames; ++m) {
        for (int j = 0; j < kStoiBands; ++j) {
            double nx = 0.0, ny = 0.0;
            for (int i = 0; i < kStoiSegment; ++i) {
                xseg[i] = xe[j][m - kStoiSegment + 1 + i];
                yseg[i] = ye[j][m - kStoiSegment + 1 + i];
                nx += xseg[i] * xseg[i];
                ny += yseg[i] * yseg[i];
            }
            const double scale = ny > 0.0 ? std::sqrt(nx / ny) : 0.0;
            double mx = 0.0, my = 0.0;
            for (int i = 0; i < kStoiSegment; ++i) {
                yseg[i] = std::min(yseg[i] * scale, xseg[i] * clip_gain);
                mx += xseg[i];
                my += yseg[i];
            }
            mx /= kStoiSegment;
            my /= kStoiSegment;
            double num = 0.0, dx = 0.0, dy = 0.0;
            for (int i = 0; i < kStoiSegment; ++i) {
                num += (xseg[i] - mx) * (yseg[i] - my);
                dx += (xseg[i] - mx) * (xseg[i] - mx);
                dy += (yseg[i] - my) * (yseg[i] - my);
            }
            double corr;
            if (dx < 1e-20 && dy < 1e-20)
                corr = 1.0;  // both envelopes flat: identical segments
            else if (dx < 1e-20 || dy < 1e-20)
                corr = 0.0;
            else
                corr = num / std::sqrt(dx * dy);
            total += corr;
            ++count;
        }
    }
    const double value = total / count;
    return std::clamp(value, 0.0, 1.0);
}

double bitrate_bps(double frame_rate, int n_q, int codebook_size, int64_t n_frames,
                   int64_t prompt_side_info_bits) {
    if (frame_rate <= 0.0 || n_q < 1 || codebook_size < 1)
        throw InvalidInput("bitrate: bad parameters");
    int bits = 0;
    unsigned v = static_cast<unsigned>(codebook_size - 1);
    while (v > 0) {
        ++bits;
        v >>= 1;
    }
    double bps = frame_rate * n_q * bits;
    if (prompt_side_info_bits > 0 && n_frames > 0)
        bps += static_cast<double>(prompt_side_info_bits) * frame_rate / n_frames;
    return bps;
}

}  // namespace promptcodec::metrics
