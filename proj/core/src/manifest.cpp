#include "promptcodec/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "promptcodec/errors.hpp"
#include "promptcodec/wav_io.hpp"

namespace promptcodec::train {

namespace fs = std::filesystem;

Waveform DatasetManifest::load(size_t index) const {
    if (index >= entries.size()) throw InvalidInput("manifest: index out of range");
    const ManifestEntry& e = entries[index];
    if (e.path.rfind("synth://", 0) == 0) {
        auto it = in_memory.find(e.id);
        if (it == in_memory.end()) throw InvalidInput("manifest: missing synthetic audio " + e.id);
        return it->second;
    }
    return io::read_wav(e.path, sample_rate);
}

Waveform synthesize_utterance(const SyntheticSpec& spec, int index) {
    if (spec.count < 1 || spec.sample_rate <= 0 || spec.duration_seconds <= 0.0)
        throw InvalidInput("synthetic spec: bad parameters");
    std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ull + static_cast<uint64_t>(index) + 1);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    const int sr = spec.sample_rate;
    const int n = std::max(1, static_cast<int>(std::lround(spec.duration_seconds * sr)));
    const int n_harm = 3 + static_cast<int>(uni(rng) * 3.0) % 3;  // 3..5
    const double f0 = 110.0 + 110.0 * uni(rng);
    const double vib_rate = 1.0 + 3.0 * uni(rng);
    const double vib_depth = 0.04 + 0.04 * uni(rng);
    const double vib_phase = 2.0 * M_PI * uni(rng);

    struct Harmonic {
        double amp, am_rate, am_phase;
    };
    std::vector<Harmonic> harm(n_harm);
    for (int h = 0; h < n_harm; ++h) {
        harm[h].amp = (0.7 + 0.6 * uni(rng)) / (h + 1);
        harm[h].am_rate = 0.5 + 2.5 * uni(rng);
        harm[h].am_phase = 2.0 * M_PI * uni(rng);
    }

    Waveform w;
    w.sample_rate = sr;
    w.samples.assign(n, 0.0);
    double phase = 2.0 * M_PI * uni(rng);
    double peak = 0.0;
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        const double inst_f0 = f0 * (1.0 + vib_depth * std::sin(2.0 * M_PI * vib_rate * t + vib_phase));
        phase += 2.0 * M_PI * inst_f0 / sr;
        double s = 0.0;
        for (int h = 0; h < n_harm; ++h) {
            const double am =
                0.55 + 0.45 * std::sin(2.0 * M_PI * harm[h].am_rate * t + harm[h].am_phase);
            s += harm[h].amp * am * std::sin((h + 1) * phase);
        }
        // soft attack / release envelope
        const double pos = static_cast<double>(i) / n;
        double env = 1.0;
        if (pos < 0.1) env = pos / 0.1;
        if (pos > 0.85) env = std::max(0.0, (1.0 - pos) / 0.15);
        w.samples[i] = s * env;
        peak = std::max(peak, std::fabs(w.samples[i]));
    }
    if (peak > 0.0)
        for (double& s : w.samples) s *= 0.5 / peak;
    return w;
}

DatasetManifest build_manifest(const SyntheticSpec& spec) {
    if (spec.count < 1) throw InvalidInput("synthetic spec: empty corpus");
    DatasetManifest m;
    m.sample_rate = spec.sample_rate;
    for (int i = 0; i < spec.count; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "synth_%04d", i);
        ManifestEntry e;
        e.id = id;
        e.path = std::string("synth://") + id;
        m.entries.push_back(e);
        m.in_memory[e.id] = synthesize_utterance(spec, i);
    }
    return m;
}

DatasetManifest build_manifest(const std::string& root_dir, int sample_rate) {
    if (!fs::is_directory(root_dir)) throw InvalidInput("manifest: not a directory: " + root_dir);
    DatasetManifest m;
    m.sample_rate = sample_rate;
    for (const auto& entry : fs::recursive_directory_iterator(root_dir)) {
        if (!entry.is_regular_file()) continue;
        if (entry.path().extension() != ".wav") continue;
        ManifestEntry e;
        e.id = entry.path().stem().string();
        e.path = entry.path().string();
        m.entries.push_back(std::move(e));
    }
    if (m.entries.empty()) throw InvalidInput("manifest: no WAV files under " + root_dir);
    std::sort(m.entries.begin(), m.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
    for (size_t i = 1; i < m.entries.size(); ++i)
        if (m.entries[i].id == m.entries[i - 1].id)
            throw InvalidInput("manifest: duplicate utterance id " + m.entries[i].id);
    for (const ManifestEntry& e : m.entries) {
        const int rate = io::read_wav_sample_rate(e.path);
        if (rate != sample_rate)
            throw InvalidInput("manifest: sample-rate mismatch for " + e.path + " (" +
                               std::to_string(rate) + " Hz, expected " +
                               std::to_string(sample_rate) + " Hz)");
    }
    return m;
}

DatasetManifest read_manifest_file(const std::string& path, int default_rate) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open manifest file: " + path);
    DatasetManifest m;
    m.sample_rate = default_rate;
    const fs::path base = fs::path(path).parent_path();
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (first && line.rfind("sample_rate=", 0) == 0) {
            m.sample_rate = std::stoi(line.substr(12));
            first = false;
            continue;
        }
        first = false;
        std::stringstream ss(line);
        ManifestEntry e;
        std::getline(ss, e.id, '\t');
        std::getline(ss, e.path, '\t');
        std::getline(ss, e.embedding_key, '\t');
        if (e.id.empty() || e.path.empty())
            throw InvalidInput("manifest: malformed line: " + line);
        if (fs::path(e.path).is_relative()) e.path = (base / e.path).string();
        m.entries.push_back(std::move(e));
    }
    if (m.entries.empty()) throw InvalidInput("manifest: empty manifest file " + path);
    if (m.sample_rate <= 0) throw InvalidInput("manifest: missing sample rate");
    for (size_t i = 0; i < m.entries.size(); ++i)
        for (size_t j = i + 1; j < m.entries.size(); ++j)
            if (m.entries[i].id == m.entries[j].id)
                throw InvalidInput("manifest: duplicate utterance id " + m.entries[i].id);
    return m;
}

}  // namespace promptcodec::train
