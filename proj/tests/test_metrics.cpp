#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "promptcodec/errors.hpp"
#include "promptcodec/manifest.hpp"
#include "promptcodec/metrics.hpp"

using namespace promptcodec;

namespace {

Waveform noise_like(const Waveform& ref, double snr_db, uint64_t seed) {
    double power = 0.0;
    for (double v : ref.samples) power += v * v;
    power /= ref.samples.size();
    const double noise_power = power / std::pow(10.0, snr_db / 10.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, std::sqrt(noise_power));
    Waveform out = ref;
    for (double& v : out.samples) v += dist(rng);
    return out;
}

Waveform white_noise(int len, int rate, uint64_t seed, double amp = 0.2) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, amp);
    Waveform w;
    w.sample_rate = rate;
    w.samples.resize(len);
    for (double& v : w.samples) v = dist(rng);
    return w;
}

train::SyntheticSpec corpus_spec() {
    train::SyntheticSpec spec;
    spec.count = 10;
    spec.seed = 3;
    spec.sample_rate = 16000;
    spec.duration_seconds = 1.0;
    return spec;
}

}  // namespace

TEST_CASE("identity metrics on the synthetic corpus") {
    auto manifest = train::build_manifest(corpus_spec());
    for (size_t i = 0; i < manifest.size(); ++i) {
        const Waveform w = manifest.load(i);
        CHECK(metrics::mcd(w, w) == 0.0);
        CHECK(metrics::stoi(w, w) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("mcd ignores uniform amplitude scaling") {
    // broadband reference keeps every mel band above the log floor, so the
    // scale shift lands entirely in the excluded 0th cepstrum
    const Waveform w = white_noise(16000, 16000, 5);
    Waveform scaled = w;
    for (double& v : scaled.samples) v *= 2.0;
    CHECK(metrics::mcd(w, scaled) < 1e-6);
}

TEST_CASE("mcd is symmetric and monotone in noise") {
    auto manifest = train::build_manifest(corpus_spec());
    const Waveform w = manifest.load(0);
    const Waveform noisy = noise_like(w, 10.0, 7);
    CHECK(metrics::mcd(w, noisy) == doctest::Approx(metrics::mcd(noisy, w)).epsilon(1e-12));
    CHECK(metrics::mcd(w, noise_like(w, 0.0, 11)) > metrics::mcd(w, noise_like(w, 20.0, 11)));
    CHECK_THROWS_AS(metrics::mcd(w, white_noise(100, 8000, 1)), InvalidInput);
}

TEST_CASE("stoi tolerates polarity inversion") {
    auto manifest = train::build_manifest(corpus_spec());
    const Waveform w = manifest.load(1);
    Waveform flipped = w;
    for (double& v : flipped.samples) v = -v;
    CHECK(metrics::stoi(w, flipped) > 0.9);
}

TEST_CASE("stoi separates noise from signal and is monotone in snr") {
    auto manifest = train::build_manifest(corpus_spec());
    const Waveform w = manifest.load(2);
    const Waveform junk = white_noise(static_cast<int>(w.samples.size()), w.sample_rate, 13);
    CHECK(metrics::stoi(w, junk) < 0.5);
    for (uint64_t seed = 20; seed < 25; ++seed) {
        const double low = metrics::stoi(w, noise_like(w, 0.0, seed));
        const double high = metrics::stoi(w, noise_like(w, 20.0, seed));
        CHECK(low < high);
    }
}

TEST_CASE("stoi output is clipped to [0,1] and validates input") {
    auto manifest = train::build_manifest(corpus_spec());
    const Waveform w = manifest.load(3);
    const double v = metrics::stoi(w, noise_like(w, -10.0, 31));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    Waveform tiny;
    tiny.sample_rate = 16000;
    tiny.samples.assign(256, 0.1);
    CHECK_THROWS_AS(metrics::stoi(tiny, tiny), InvalidInput);  // too short
}

TEST_CASE("bitrate arithmetic") {
    // 24 kHz, M = 320 -> 75 frames/s
    CHECK(metrics::bitrate_bps(75.0, 4, 1024) == doctest::Approx(3000.0));
    CHECK(metrics::bitrate_bps(75.0, 1, 1024) == doctest::Approx(750.0));
    CHECK(metrics::bitrate_bps(75.0, 2, 1024) == doctest::Approx(1500.0));
    // K = 1 is a degenerate zero-payload stream
    CHECK(metrics::bitrate_bps(75.0, 1, 1) == 0.0);
    // embedded prompt side info amortized over the utterance
    const double with_side = metrics::bitrate_bps(75.0, 1, 1024, 150, 16 * 2 * 256);
    CHECK(with_side == doctest::Approx(750.0 + 8192.0 * 75.0 / 150.0));
    CHECK_THROWS_AS(metrics::bitrate_bps(0.0, 1, 2), InvalidInput);
}
