#include "promptcodec/training.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "promptcodec/errors.hpp"
#include "promptcodec/metrics.hpp"
#include "promptcodec/ops.hpp"
#include "promptcodec/wav_io.hpp"

namespace promptcodec::train {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

void TrainConfig::validate() const {
    model.validate();
    mpd.validate();
    msstftd.validate();
    loss.validate();
    if (learning_rate <= 0.0) throw InvalidConfig("train: learning rate must be positive");
    if (batch_size < 1) throw InvalidConfig("train: batch size must be >= 1");
    if (steps < 1) throw InvalidConfig("train: steps must be >= 1");
    if (segment_samples < model.codec.total_stride())
        throw InvalidConfig("train: segment shorter than one codec frame");
    if (segment_samples % model.codec.total_stride() != 0)
        throw InvalidConfig("train: segment must be a multiple of the total stride");
    if (checkpoint_every < 1) throw InvalidConfig("train: checkpoint interval must be >= 1");
}

io::KeyValues TrainConfig::to_key_values() const {
    io::KeyValues kv = model.to_key_values();
    kv["train.learning_rate"] = io::format_double(learning_rate);
    kv["train.batch_size"] = std::to_string(batch_size);
    kv["train.adam_beta1"] = io::format_double(adam_beta1);
    kv["train.adam_beta2"] = io::format_double(adam_beta2);
    kv["train.steps"] = std::to_string(steps);
    kv["train.seed"] = std::to_string(seed);
    kv["train.segment_samples"] = std::to_string(segment_samples);
    kv["train.use_drl"] = use_drl ? "true" : "false";
    kv["train.checkpoint_every"] = std::to_string(checkpoint_every);
    kv["train.out_dir"] = out_dir;
    kv["data.root"] = data_root;
    kv["data.manifest"] = manifest_path;
    kv["data.synthetic_count"] = std::to_string(synthetic.count);
    kv["data.synthetic_seed"] = std::to_string(synthetic.seed);
    kv["data.synthetic_duration"] = io::format_double(synthetic.duration_seconds);
    kv["data.vp_embeddings"] = vp_embeddings_path;
    kv["loss.beta1"] = io::format_double(loss.beta1);
    kv["loss.beta2"] = io::format_double(loss.beta2);
    kv["loss.beta3"] = io::format_double(loss.beta3);
    kv["loss.beta4"] = io::format_double(loss.beta4);
    kv["loss.beta5"] = io::format_double(loss.beta5);
    kv["loss.lambda1"] = io::format_double(loss.lambda1);
    kv["loss.lambda2"] = io::format_double(loss.lambda2);
    kv["loss.lambda3"] = io::format_double(loss.lambda3);
    kv["loss.ssim_c1"] = io::format_double(loss.ssim_c1);
    kv["loss.ssim_c2"] = io::format_double(loss.ssim_c2);
    kv["mel_loss.windows"] = io::format_int_list(mel_loss.windows);
    kv["mel_loss.log_floor"] = io::format_double(mel_loss.log_floor);
    kv["mel_loss.max_mels"] = std::to_string(mel_loss.max_mels);
    kv["mpd.periods"] = io::format_int_list(mpd.periods);
    kv["mpd.channels"] = io::format_int_list(mpd.channels);
    kv["msstftd.fft_sizes"] = io::format_int_list(msstftd.fft_sizes);
    kv["msstftd.channels"] = std::to_string(msstftd.channels);
    return kv;
}

TrainConfig TrainConfig::from_key_values(const io::KeyValues& kv) {
    TrainConfig c;
    c.model = ModelConfig::from_key_values(kv);
    c.learning_rate = io::kv_double(kv, "train.learning_rate", c.learning_rate);
    c.batch_size = io::kv_int(kv, "train.batch_size", c.batch_size);
    c.adam_beta1 = io::kv_double(kv, "train.adam_beta1", c.adam_beta1);
    c.adam_beta2 = io::kv_double(kv, "train.adam_beta2", c.adam_beta2);
    c.steps = io::kv_int(kv, "train.steps", c.steps);
    c.seed = static_cast<uint64_t>(io::kv_int(kv, "train.seed", static_cast<int>(c.seed)));
    c.segment_samples = io::kv_int(kv, "train.segment_samples", c.segment_samples);
    c.use_drl = io::kv_bool(kv, "train.use_drl", c.use_drl);
    c.checkpoint_every = io::kv_int(kv, "train.checkpoint_every", c.checkpoint_every);
    c.out_dir = io::kv_string(kv, "train.out_dir", c.out_dir);
    c.data_root = io::kv_string(kv, "data.root", c.data_root);
    c.manifest_path = io::kv_string(kv, "data.manifest", c.manifest_path);
    c.synthetic.count = io::kv_int(kv, "data.synthetic_count", c.synthetic.count);
    c.synthetic.seed =
        static_cast<uint64_t>(io::kv_int(kv, "data.synthetic_seed", static_cast<int>(c.synthetic.seed)));
    c.synthetic.duration_seconds =
        io::kv_double(kv, "data.synthetic_duration", c.synthetic.duration_seconds);
    c.synthetic.sample_rate = c.model.codec.sample_rate;
    c.vp_embeddings_path = io::kv_string(kv, "data.vp_embeddings", c.vp_embeddings_path);
    c.loss.beta1 = io::kv_double(kv, "loss.beta1", c.loss.beta1);
    c.loss.beta2 = io::kv_double(kv, "loss.beta2", c.loss.beta2);
    c.loss.beta3 = io::kv_double(kv, "loss.beta3", c.loss.beta3);
    c.loss.beta4 = io::kv_double(kv, "loss.beta4", c.loss.beta4);
    c.loss.beta5 = io::kv_double(kv, "loss.beta5", c.loss.beta5);
    c.loss.lambda1 = io::kv_double(kv, "loss.lambda1", c.loss.lambda1);
    c.loss.lambda2 = io::kv_double(kv, "loss.lambda2", c.loss.lambda2);
    c.loss.lambda3 = io::kv_double(kv, "loss.lambda3", c.loss.lambda3);
    c.loss.ssim_c1 = io::kv_double(kv, "loss.ssim_c1", c.loss.ssim_c1);
    c.loss.ssim_c2 = io::kv_double(kv, "loss.ssim_c2", c.loss.ssim_c2);
    c.mel_loss.windows = io::kv_int_list(kv, "mel_loss.windows", c.mel_loss.windows);
    c.mel_loss.log_floor = io::kv_double(kv, "mel_loss.log_floor", c.mel_loss.log_floor);
    c.mel_loss.max_mels = io::kv_int(kv, "mel_loss.max_mels", c.mel_loss.max_mels);
    c.mpd.periods = io::kv_int_list(kv, "mpd.periods", c.mpd.periods);
    c.mpd.channels = io::kv_int_list(kv, "mpd.channels", c.mpd.channels);
    c.msstftd.fft_sizes = io::kv_int_list(kv, "msstftd.fft_sizes", c.msstftd.fft_sizes);
    c.msstftd.channels = io::kv_int(kv, "msstftd.channels", c.msstftd.channels);
    return c;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
    return from_key_values(io::read_key_values_file(path));
}

DatasetManifest open_dataset(const TrainConfig& cfg) {
    if (!cfg.data_root.empty()) return build_manifest(cfg.data_root, cfg.model.codec.sample_rate);
    if (!cfg.manifest_path.empty())
        return read_manifest_file(cfg.manifest_path, cfg.model.codec.sample_rate);
    SyntheticSpec spec = cfg.synthetic;
    spec.sample_rate = cfg.model.codec.sample_rate;
    return build_manifest(spec);
}

std::string StepLog::to_json_line() const {
    ordered_json j;
    j["step"] = step;
    j["l_rec"] = report.l_rec;
    j["l_f"] = report.l_f;
    j["l_vq"] = report.l_vq;
    j["l_adv"] = report.l_adv;
    j["l_drl"] = report.l_drl;
    j["l_total"] = report.l_total;
    j["l_disc"] = report.l_disc;
    j["ssim_q_pc"] = report.ssim_q_pc;
    j["ssim_q_pv"] = report.ssim_q_pv;
    j["ssim_pv_pc"] = report.ssim_pv_pc;
    j["alpha1"] = alpha1;
    j["alpha2"] = alpha2;
    j["alpha3"] = alpha3;
    return j.dump();
}

namespace {

struct ItemForward {
    nn::Tensor segment;  // const [L]
    nn::Tensor x_hat;    // graph [L]
    nn::Tensor z_pc, z_pv;
    QuantizeGraphResult q;
};

}  // namespace

TrainResult train(const TrainConfig& cfg, const DatasetManifest& manifest) {
    cfg.validate();
    if (manifest.size() == 0) throw InvalidInput("train: empty manifest");
    fs::create_directories(cfg.out_dir);

    PromptCodecModel model(cfg.model);
    std::mt19937_64 disc_rng(cfg.seed ^ 0xd15c0000u);
    DiscriminatorBank discs(cfg.mpd, cfg.msstftd, disc_rng);

    EmbeddingTable vp_table;
    const bool external_vp = model.has_voiceprint() &&
                             cfg.model.vp.kind == VoiceprintBackendKind::external_file;
    if (external_vp) {
        if (cfg.vp_embeddings_path.empty())
            throw InvalidConfig("train: external voiceprint backend needs data.vp_embeddings");
        vp_table = read_embedding_file(cfg.vp_embeddings_path);
    }

    nn::Adam gen_opt(model.trainable_parameters(), cfg.learning_rate, cfg.adam_beta1,
                     cfg.adam_beta2);
    nn::NamedParams disc_params;
    discs.collect("disc", disc_params);
    nn::Adam disc_opt(disc_params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2);

    // per-utterance prompt features and raw audio, cached once
    const size_t n_utts = manifest.size();
    std::vector<Waveform> audio(n_utts);
    std::vector<FeatureMatrix> mels(n_utts), fbanks(n_utts);
    std::vector<const std::vector<double>*> external_embeddings(n_utts, nullptr);
    for (size_t i = 0; i < n_utts; ++i) {
        audio[i] = manifest.load(i);
        if (model.has_conditional()) mels[i] = model.prompt_mel(audio[i]);
        if (model.has_voiceprint() && !external_vp) fbanks[i] = model.prompt_fbank(audio[i]);
        if (external_vp) {
            const auto& e = manifest.entries[i];
            const std::string key = e.embedding_key.empty() ? e.id : e.embedding_key;
            auto it = vp_table.find(key);
            if (it == vp_table.end())
                throw MissingPrompt("no external voiceprint embedding for utterance " + e.id);
            external_embeddings[i] = &it->second;
        }
    }

    TrainResult result;
    result.checkpoint_path = (fs::path(cfg.out_dir) / "checkpoint.pckp").string();
    result.log_path = (fs::path(cfg.out_dir) / "train_log.ndjson").string();
    std::ofstream log_file(result.log_path);
    if (!log_file) throw IoError("cannot create log file: " + result.log_path);

    std::mt19937_64 rng(cfg.seed);
    const int seg = cfg.segment_samples;
    const double inv_batch = 1.0 / cfg.batch_size;

    for (int step = 1; step <= cfg.steps; ++step) {
        // ---- generator forward for the whole batch
        std::vector<ItemForward> items(cfg.batch_size);
        for (int b = 0; b < cfg.batch_size; ++b) {
            const size_t utt = static_cast<size_t>(rng() % n_utts);
            const Waveform& w = audio[utt];
            const int64_t range = w.length() - seg;
            const int64_t off = range > 0 ? static_cast<int64_t>(rng() % (range + 1)) : 0;
            std::vector<double> seg_data(seg, 0.0);
            const int64_t copy_n = std::min<int64_t>(seg, w.length() - off);
            for (int64_t i = 0; i < copy_n; ++i) seg_data[i] = w.samples[off + i];

            ItemForward& it = items[b];
            it.segment = nn::Tensor::from(std::move(seg_data), {seg});
            if (model.has_conditional())
                it.z_pc = model.conditional().forward(
                    nn::Tensor::from(mels[utt].values, {mels[utt].frames, mels[utt].bins}));
            if (model.has_voiceprint()) {
                if (external_vp)
                    it.z_pv = model.voiceprint().forward_external(*external_embeddings[utt]);
                else
                    it.z_pv = model.voiceprint().forward(
                        nn::Tensor::from(fbanks[utt].values, {fbanks[utt].frames, fbanks[utt].bins}));
            }
            nn::Tensor z = model.encoder().forward(it.segment);
            it.q = model.quantizer().quantize_graph(z);
            nn::Tensor fused = fuse(it.q.z_q, it.z_pc, it.z_pv, model.fusion());
            it.x_hat = model.decoder().forward(fused);
        }

        // ---- discriminator update on detached fakes
        double l_disc_acc = 0.0;
        for (ItemForward& it : items) {
            DiscOutput real = discs.forward(it.segment);
            DiscOutput fake = discs.forward(nn::stopgrad(it.x_hat));
            AdversarialLosses adv = adversarial_losses(real.logits, fake.logits);
            if (!std::isfinite(adv.discriminator.value()))
                throw NumericalError("non-finite discriminator loss at step " +
                                     std::to_string(step));
            l_disc_acc += adv.discriminator.value() * inv_batch;
            nn::mul_scalar(adv.discriminator, inv_batch).backward();
        }
        disc_opt.step();
        disc_opt.zero_grad();

        // ---- generator update through the updated critics
        LossReport avg{};
        for (ItemForward& it : items) {
            std::vector<std::vector<nn::Tensor>> real_features;
            std::vector<nn::Tensor> real_logits;
            {
                nn::NoGradGuard ng;
                DiscOutput real = discs.forward(it.segment);
                real_features = std::move(real.features);
                real_logits = std::move(real.logits);
            }
            DiscOutput fake = discs.forward(it.x_hat);

            TotalLossInputs parts;
            parts.l_rec = reconstruction_loss(it.segment, it.x_hat, cfg.model.codec.sample_rate,
                                              cfg.mel_loss);
            parts.l_f = feature_matching_loss(real_features, fake.features);
            parts.l_vq = it.q.loss_vq;
            parts.l_adv = adversarial_losses(real_logits, fake.logits).generator;
            DrlResult drl;
            if (cfg.use_drl) {
                drl = drl_loss(it.q.z_q, it.z_pc, it.z_pv, cfg.loss);
                parts.l_drl = drl.total;
            }
            TotalLoss total = total_loss(parts, cfg.loss);
            nn::mul_scalar(total.total, inv_batch).backward();

            avg.l_rec += total.report.l_rec * inv_batch;
            avg.l_f += total.report.l_f * inv_batch;
            avg.l_vq += total.report.l_vq * inv_batch;
            avg.l_adv += total.report.l_adv * inv_batch;
            avg.l_drl += total.report.l_drl * inv_batch;
            avg.l_total += total.report.l_total * inv_batch;
            if (drl.pair_q_pc) avg.ssim_q_pc += *drl.pair_q_pc * inv_batch;
            if (drl.pair_q_pv) avg.ssim_q_pv += *drl.pair_q_pv * inv_batch;
            if (drl.pair_pv_pc) avg.ssim_pv_pc += *drl.pair_pv_pc * inv_batch;
        }
        gen_opt.step();
        gen_opt.zero_grad();
        disc_opt.zero_grad();  // generator pass deposited grads into the critics

        // ---- EMA codebook learning from this batch's assignments
        for (ItemForward& it : items) model.quantizer().update_ema(it.q.assignments);

        avg.l_disc = l_disc_acc;
        StepLog entry;
        entry.step = step;
        entry.report = avg;
        entry.alpha1 = model.fusion().a1();
        entry.alpha2 = model.fusion().a2();
        entry.alpha3 = model.fusion().a3();
        for (double v : {entry.alpha1, entry.alpha2, entry.alpha3})
            if (!std::isfinite(v)) throw NumericalError("non-finite fusion weight");
        log_file << entry.to_json_line() << '\n';
        result.log.push_back(entry);

        if (step % cfg.checkpoint_every == 0) model.save(result.checkpoint_path);
    }
    model.save(result.checkpoint_path);
    log_file.flush();
    return result;
}

namespace {

std::optional<double> run_pesq_tool(const std::string& tool, const std::string& ref_path,
                                    const std::string& deg_path) {
    const std::string cmd = tool + " '" + ref_path + "' '" + deg_path + "' 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return std::nullopt;
    std::string output;
    char buf[256];
    while (fgets(buf, sizeof(buf), pipe)) output += buf;
    const int rc = pclose(pipe);
    if (rc != 0) return std::nullopt;
    // last parseable number on stdout is the score
    std::optional<double> score;
    size_t pos = 0;
    while (pos < output.size()) {
        char* end = nullptr;
        const double v = std::strtod(output.c_str() + pos, &end);
        if (end == output.c_str() + pos) {
            ++pos;
        } else {
            score = v;
            pos = static_cast<size_t>(end - output.c_str());
        }
    }
    return score;
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

std::string EvalResult::to_csv() const {
    std::string out = "utt_id,pesq,stoi,mcd,bitrate_bps\n";
    auto row_line = [](const EvalRow& r) {
        std::string line = r.utt_id + ",";
        if (r.pesq) line += fmt6(*r.pesq);
        line += "," + fmt6(r.stoi) + "," + fmt6(r.mcd) + "," + fmt6(r.bitrate_bps) + "\n";
        return line;
    };
    for (const EvalRow& r : rows) out += row_line(r);
    out += row_line(aggregate);
    return out;
}

std::string EvalResult::to_json() const {
    ordered_json j;
    auto row_json = [](const EvalRow& r) {
        ordered_json o;
        o["utt_id"] = r.utt_id;
        if (r.pesq)
            o["pesq"] = *r.pesq;
        else
            o["pesq"] = nullptr;
        o["stoi"] = r.stoi;
        o["mcd"] = r.mcd;
        o["bitrate_bps"] = r.bitrate_bps;
        return o;
    };
    j["rows"] = ordered_json::array();
    for (const EvalRow& r : rows) j["rows"].push_back(row_json(r));
    j["aggregate"] = row_json(aggregate);
    j["prompt_mode"] = "receiver_side";
    return j.dump(2);
}

EvalResult evaluate_with(const Reconstructor& reconstruct, const DatasetManifest& manifest,
                         double bitrate, const std::string& pesq_tool,
                         const std::string& scratch_dir) {
    if (manifest.size() == 0) throw InvalidInput("evaluate: empty manifest");
    EvalResult out;
    std::string scratch = scratch_dir;
    if (!pesq_tool.empty()) {
        scratch = scratch.empty() ? "pc_eval_tmp" : scratch;
        fs::create_directories(scratch);
    }
    for (size_t i = 0; i < manifest.size(); ++i) {
        const Waveform ref = manifest.load(i);
        const Waveform deg = reconstruct(ref, manifest.entries[i]);
        EvalRow row;
        row.utt_id = manifest.entries[i].id;
        row.stoi = metrics::stoi(ref, deg);
        row.mcd = metrics::mcd(ref, deg);
        row.bitrate_bps = bitrate;
        if (!pesq_tool.empty()) {
            const std::string ref_path =
                (fs::path(scratch) / (row.utt_id + "_ref.wav")).string();
            const std::string deg_path =
                (fs::path(scratch) / (row.utt_id + "_deg.wav")).string();
            io::write_wav(ref_path, ref);
            Waveform deg_t = deg;
            deg_t.samples.resize(ref.samples.size(), 0.0);
            io::write_wav(deg_path, deg_t);
            row.pesq = run_pesq_tool(pesq_tool, ref_path, deg_path);
        }
        out.rows.push_back(std::move(row));
    }
    EvalRow agg;
    agg.utt_id = "aggregate";
    double pesq_sum = 0.0;
    int pesq_n = 0;
    for (const EvalRow& r : out.rows) {
        agg.stoi += r.stoi;
        agg.mcd += r.mcd;
        agg.bitrate_bps += r.bitrate_bps;
        if (r.pesq) {
            pesq_sum += *r.pesq;
            ++pesq_n;
        }
    }
    const double n = static_cast<double>(out.rows.size());
    agg.stoi /= n;
    agg.mcd /= n;
    agg.bitrate_bps /= n;
    if (pesq_n > 0) agg.pesq = pesq_sum / pesq_n;
    out.aggregate = std::move(agg);
    return out;
}

EvalResult evaluate(const PromptCodecModel& model, const DatasetManifest& manifest,
                    const EmbeddingTable* vp_table, const std::string& pesq_tool,
                    const std::string& scratch_dir) {
    const ModelConfig& mc = model.config();
    const double frame_rate =
        static_cast<double>(mc.codec.sample_rate) / mc.codec.total_stride();
    const double bitrate =
        metrics::bitrate_bps(frame_rate, mc.grvq.n_q(), mc.grvq.codebook_size);
    const bool external = model.has_voiceprint() &&
                          mc.vp.kind == VoiceprintBackendKind::external_file;
    Reconstructor fn = [&](const Waveform& w, const ManifestEntry& e) {
        const std::vector<double>* emb = nullptr;
        if (external) {
            if (!vp_table) throw MissingPrompt("evaluate: external embeddings table missing");
            const std::string key = e.embedding_key.empty() ? e.id : e.embedding_key;
            auto it = vp_table->find(key);
            if (it == vp_table->end())
                throw MissingPrompt("evaluate: no embedding for utterance " + e.id);
            emb = &it->second;
        }
        return model.reconstruct(w, model.compute_prompts(w, emb));
    };
    return evaluate_with(fn, manifest, bitrate, pesq_tool, scratch_dir);
}

}  // namespace promptcodec::train
