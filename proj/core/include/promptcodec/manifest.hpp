// Dataset ingestion: WAV folders, TSV manifest files, and a seeded synthetic
// pseudo-speech generator for desk-scale experiments.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "promptcodec/types.hpp"

namespace promptcodec::train {

struct ManifestEntry {
    std::string id;
    std::string path;           // "synth://<id>" for generated utterances
    std::string embedding_key;  // optional external voice-print key
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    int sample_rate = 0;
    std::map<std::string, Waveform> in_memory;  // synthetic audio store

    size_t size() const { return entries.size(); }
    Waveform load(size_t index) const;  // validates the sample rate
};

struct SyntheticSpec {
    int count = 8;
    uint64_t seed = 7;
    int sample_rate = 24000;
    double duration_seconds = 1.0;
};

// Sum of 3-5 harmonics with pitch and amplitude modulation; a pure function
// of (spec, index).
Waveform synthesize_utterance(const SyntheticSpec& spec, int index);

DatasetManifest build_manifest(const SyntheticSpec& spec);
// Scans root for *.wav, sorted lexicographically by id (file stem). Every
// file must match sample_rate.
DatasetManifest build_manifest(const std::string& root_dir, int sample_rate);
// TSV manifest: optional "sample_rate=N" first line, then
// id <TAB> path [<TAB> embedding_key]; relative paths resolve against the file.
DatasetManifest read_manifest_file(const std::string& path, int default_rate);

}  // namespace promptcodec::train
