// Training loop (alternating discriminator/generator Adam updates with EMA
// codebook learning), evaluation over a manifest, and their configs.
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "promptcodec/discriminators.hpp"
#include "promptcodec/losses.hpp"
#include "promptcodec/manifest.hpp"
#include "promptcodec/model.hpp"

namespace promptcodec::train {

struct TrainConfig {
    ModelConfig model;
    MPDConfig mpd;
    MSSTFTDConfig msstftd;
    LossWeights loss;
    MelLossConfig mel_loss;

    double learning_rate = 1e-3;
    int batch_size = 40;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    int steps = 100;
    uint64_t seed = 1234;
    int segment_samples = 12000;  // must be a multiple of the total stride
    bool use_drl = true;
    int checkpoint_every = 100;
    std::string out_dir = "pc_out";

    // data source: directory > manifest file > synthetic corpus
    std::string data_root;
    std::string manifest_path;
    SyntheticSpec synthetic;
    std::string vp_embeddings_path;  // external voice-print table, optional

    void validate() const;
    io::KeyValues to_key_values() const;
    static TrainConfig from_key_values(const io::KeyValues& kv);
    static TrainConfig from_file(const std::string& path);
};

DatasetManifest open_dataset(const TrainConfig& cfg);

struct StepLog {
    int step = 0;
    LossReport report;
    double alpha1 = 0.0, alpha2 = 0.0, alpha3 = 0.0;

    std::string to_json_line() const;
};

struct TrainResult {
    std::string checkpoint_path;
    std::string log_path;
    std::vector<StepLog> log;
};

// Runs the loop; writes ndjson step logs and periodic checkpoints under
// cfg.out_dir. Throws NumericalError on non-finite losses (the last
// checkpoint on disk is retained).
TrainResult train(const TrainConfig& cfg, const DatasetManifest& manifest);

struct EvalRow {
    std::string utt_id;
    std::optional<double> pesq;
    double stoi = 0.0;
    double mcd = 0.0;
    double bitrate_bps = 0.0;
};

struct EvalResult {
    std::vector<EvalRow> rows;
    EvalRow aggregate;  // arithmetic mean, utt_id "aggregate"

    std::string to_csv() const;   // header: utt_id,pesq,stoi,mcd,bitrate_bps
    std::string to_json() const;  // mirror of the CSV
};

using Reconstructor = std::function<Waveform(const Waveform&, const ManifestEntry&)>;

// Generic evaluation: reconstruct each utterance, compute STOI/MCD/bitrate.
// pesq_tool, when non-empty, is run as `tool ref.wav deg.wav` with the last
// number on stdout taken as the score; scratch_dir holds the temp files.
EvalResult evaluate_with(const Reconstructor& reconstruct, const DatasetManifest& manifest,
                         double bitrate_bps, const std::string& pesq_tool = "",
                         const std::string& scratch_dir = "");

// Full-model evaluation with receiver-side prompts taken from each utterance.
EvalResult evaluate(const PromptCodecModel& model, const DatasetManifest& manifest,
                    const EmbeddingTable* vp_table = nullptr, const std::string& pesq_tool = "",
                    const std::string& scratch_dir = "");

}  // namespace promptcodec::train
