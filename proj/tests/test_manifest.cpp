#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "promptcodec/errors.hpp"
#include "promptcodec/manifest.hpp"
#include "promptcodec/wav_io.hpp"

using namespace promptcodec;
using train::DatasetManifest;
using train::SyntheticSpec;

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Waveform tone(int len, int rate) {
    Waveform w;
    w.sample_rate = rate;
    w.samples.resize(len);
    for (int i = 0; i < len; ++i) w.samples[i] = 0.4 * std::sin(2.0 * M_PI * 300.0 * i / rate);
    return w;
}

}  // namespace

TEST_CASE("synthetic corpus is reproducible") {
    SyntheticSpec spec;
    spec.count = 8;
    spec.seed = 7;
    spec.sample_rate = 8000;
    spec.duration_seconds = 0.25;
    DatasetManifest a = train::build_manifest(spec);
    DatasetManifest b = train::build_manifest(spec);
    REQUIRE(a.size() == 8);
    CHECK(a.entries.front().id == "synth_0000");
    for (size_t i = 0; i < a.size(); ++i) {
        const Waveform wa = a.load(i);
        const Waveform wb = b.load(i);
        CHECK(wa.samples == wb.samples);
        CHECK(wa.sample_rate == 8000);
        CHECK(wa.samples.size() == 2000);
        double peak = 0.0;
        for (double v : wa.samples) peak = std::max(peak, std::fabs(v));
        CHECK(peak == doctest::Approx(0.5).epsilon(1e-9));
    }
    // different seeds give different audio
    SyntheticSpec other = spec;
    other.seed = 8;
    CHECK(train::build_manifest(other).load(0).samples != a.load(0).samples);
}

TEST_CASE("directory manifests sort by id and validate rates") {
    TempDir dir("pc_manifest_test");
    io::write_wav((dir.path / "c.wav").string(), tone(800, 24000));
    io::write_wav((dir.path / "a.wav").string(), tone(900, 24000));
    io::write_wav((dir.path / "b.wav").string(), tone(1000, 24000));
    DatasetManifest m = train::build_manifest(dir.path.string(), 24000);
    REQUIRE(m.size() == 3);
    CHECK(m.entries[0].id == "a");
    CHECK(m.entries[1].id == "b");
    CHECK(m.entries[2].id == "c");
    CHECK(m.load(1).samples.size() == 1000);

    // a rate-mismatched file poisons the build
    io::write_wav((dir.path / "d.wav").string(), tone(500, 44100));
    CHECK_THROWS_AS(train::build_manifest(dir.path.string(), 24000), InvalidInput);
}

TEST_CASE("empty corpus is rejected") {
    TempDir dir("pc_manifest_empty");
    CHECK_THROWS_AS(train::build_manifest(dir.path.string(), 24000), InvalidInput);
    SyntheticSpec spec;
    spec.count = 0;
    CHECK_THROWS_AS(train::build_manifest(spec), InvalidInput);
}

TEST_CASE("manifest files parse ids, paths, and embedding keys") {
    TempDir dir("pc_manifest_file");
    io::write_wav((dir.path / "x.wav").string(), tone(700, 16000));
    io::write_wav((dir.path / "y.wav").string(), tone(750, 16000));
    const fs::path mpath = dir.path / "list.tsv";
    {
        std::ofstream f(mpath);
        f << "sample_rate=16000\n";
        f << "# comment line\n";
        f << "utt_x\tx.wav\tspeaker_1\n";
        f << "utt_y\t" << (dir.path / "y.wav").string() << "\n";
    }
    DatasetManifest m = train::read_manifest_file(mpath.string(), 0);
    REQUIRE(m.size() == 2);
    CHECK(m.sample_rate == 16000);
    CHECK(m.entries[0].embedding_key == "speaker_1");
    CHECK(m.entries[1].embedding_key.empty());
    CHECK(m.load(0).samples.size() == 700);  // relative path resolved
    CHECK(m.load(1).samples.size() == 750);

    // duplicate ids rejected
    {
        std::ofstream f(mpath);
        f << "sample_rate=16000\nu\tx.wav\nu\ty.wav\n";
    }
    CHECK_THROWS_AS(train::read_manifest_file(mpath.string(), 0), InvalidInput);
}
