#include "promptcodec/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "promptcodec/ablation.hpp"
#include "promptcodec/errors.hpp"
#include "promptcodec/metrics.hpp"
#include "promptcodec/model.hpp"
#include "promptcodec/training.hpp"
#include "promptcodec/wav_io.hpp"

namespace promptcodec::cli {

namespace fs = std::filesystem;

namespace {

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path);
    return std::vector<uint8_t>((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot create file: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing file: " + path);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot create file: " + path);
    f << text;
}

train::DatasetManifest open_manifest_arg(const std::string& arg, int sample_rate) {
    if (fs::is_directory(arg)) return train::build_manifest(arg, sample_rate);
    return train::read_manifest_file(arg, sample_rate);
}

struct EncodeArgs {
    std::string model_path, in_path, out_path, prompt_wav, vp_embeddings, vp_key;
    bool embed_prompts = false;
};

struct DecodeArgs {
    std::string model_path, in_path, out_path, prompt_wav, vp_embeddings, vp_key;
};

PromptPair prompts_for(const PromptCodecModel& model, const Waveform& prompt_audio,
                       const std::string& vp_embeddings, const std::string& vp_key,
                       const std::string& fallback_key) {
    const std::vector<double>* emb = nullptr;
    EmbeddingTable table;
    if (model.has_voiceprint() &&
        model.config().vp.kind == VoiceprintBackendKind::external_file) {
        if (vp_embeddings.empty())
            throw MissingPrompt("model uses external voice-print embeddings; pass --vp-embeddings");
        table = read_embedding_file(vp_embeddings);
        const std::string key = vp_key.empty() ? fallback_key : vp_key;
        auto it = table.find(key);
        if (it == table.end())
            throw MissingPrompt("no voice-print embedding for key '" + key + "'");
        emb = &it->second;
    }
    return model.compute_prompts(prompt_audio, emb);
}

int run_train(const std::string& config_path, const std::string& out_dir) {
    train::TrainConfig cfg = train::TrainConfig::from_file(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    train::DatasetManifest manifest = train::open_dataset(cfg);
    train::TrainResult res = train::train(cfg, manifest);
    std::cout << "checkpoint: " << res.checkpoint_path << "\n";
    std::cout << "log: " << res.log_path << "\n";
    if (!res.log.empty())
        std::cout << "final l_total: " << res.log.back().report.l_total << "\n";
    return 0;
}

int run_encode(const EncodeArgs& a) {
    auto model = PromptCodecModel::load(a.model_path);
    const Waveform w = io::read_wav(a.in_path, model->config().codec.sample_rate);
    Waveform prompt_audio = w;
    if (!a.prompt_wav.empty())
        prompt_audio = io::read_wav(a.prompt_wav, model->config().codec.sample_rate);
    const std::string fallback_key = fs::path(a.in_path).stem().string();
    PromptPair prompts = prompts_for(*model, prompt_audio, a.vp_embeddings, a.vp_key, fallback_key);
    io::Stream s = model->encode_stream(w, a.embed_prompts, prompts);
    const std::vector<uint8_t> bytes =
        io::write_stream(s.header, s.indices, s.prompts ? &*s.prompts : nullptr);
    write_file_bytes(a.out_path, bytes);

    const ModelConfig& mc = model->config();
    const double frame_rate = static_cast<double>(mc.codec.sample_rate) / mc.codec.total_stride();
    const int64_t side_bits =
        a.embed_prompts ? static_cast<int64_t>(16) * 2 * mc.codec.latent_dim : 0;
    const double bps = metrics::bitrate_bps(frame_rate, mc.grvq.n_q(), mc.grvq.codebook_size,
                                            s.indices.frames, side_bits);
    std::cout << "frames: " << s.indices.frames << "\n";
    std::cout << "bytes: " << bytes.size() << "\n";
    std::cout << "prompt_overhead_bits: " << side_bits << "\n";
    std::cout << "bitrate_bps: " << bps << "\n";
    return 0;
}

int run_decode(const DecodeArgs& a) {
    auto model = PromptCodecModel::load(a.model_path);
    const io::Stream s = io::read_stream(read_file_bytes(a.in_path));
    Waveform out;
    if (s.header.prompt_flag == 1) {
        out = model->decode_stream(s, nullptr);
    } else {
        if (a.prompt_wav.empty() && (model->has_conditional() || model->has_voiceprint()))
            throw MissingPrompt("stream has no embedded prompts; pass --prompt-wav");
        PromptPair prompts;
        if (!a.prompt_wav.empty()) {
            const Waveform prompt_audio =
                io::read_wav(a.prompt_wav, model->config().codec.sample_rate);
            const std::string fallback_key = fs::path(a.prompt_wav).stem().string();
            prompts =
                prompts_for(*model, prompt_audio, a.vp_embeddings, a.vp_key, fallback_key);
        }
        out = model->decode_stream(s, &prompts);
    }
    io::write_wav(a.out_path, out);
    std::cout << "samples: " << out.samples.size() << "\n";
    return 0;
}

int run_eval(const std::string& model_path, const std::string& manifest_arg,
             const std::string& out_dir, const std::string& pesq_tool,
             const std::string& vp_embeddings) {
    auto model = PromptCodecModel::load(model_path);
    train::DatasetManifest manifest =
        open_manifest_arg(manifest_arg, model->config().codec.sample_rate);
    EmbeddingTable table;
    const EmbeddingTable* table_ptr = nullptr;
    if (!vp_embeddings.empty()) {
        table = read_embedding_file(vp_embeddings);
        table_ptr = &table;
    }
    fs::create_directories(out_dir);
    train::EvalResult res = train::evaluate(*model, manifest, table_ptr, pesq_tool,
                                            (fs::path(out_dir) / "pesq_tmp").string());
    write_text((fs::path(out_dir) / "metrics.csv").string(), res.to_csv());
    write_text((fs::path(out_dir) / "metrics.json").string(), res.to_json());
    std::cout << "utterances: " << res.rows.size() << "\n";
    std::cout << "stoi: " << res.aggregate.stoi << "\n";
    std::cout << "mcd: " << res.aggregate.mcd << "\n";
    std::cout << "bitrate_bps: " << res.aggregate.bitrate_bps << "\n";
    return 0;
}

int run_ablate(const std::string& config_path, const std::string& out_dir,
               const std::vector<int>& n_q_values) {
    train::TrainConfig base = train::TrainConfig::from_file(config_path);
    train::AblationPlan plan = train::AblationPlan::default_plan();
    if (!out_dir.empty()) plan.out_dir = out_dir;
    if (!n_q_values.empty()) plan.n_q_values = n_q_values;
    train::DatasetManifest manifest = train::open_dataset(base);
    train::AblationReport report = train::run_ablation(plan, base, manifest);
    train::write_ablation_report(report, plan.out_dir);
    std::cout << report.to_markdown();
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"PromptCodec neural speech codec"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    auto* train_cmd = app.add_subcommand("train", "train a model from a key=value config file");
    train_cmd->add_option("--config", config_path, "config file")->required();
    train_cmd->add_option("--out-dir", out_dir, "output directory override");

    EncodeArgs enc;
    auto* enc_cmd = app.add_subcommand("encode", "encode a WAV file to a compressed stream");
    enc_cmd->add_option("--model", enc.model_path, "model checkpoint")->required();
    enc_cmd->add_option("--in", enc.in_path, "input WAV")->required();
    enc_cmd->add_option("--out", enc.out_path, "output stream (.pcc)")->required();
    enc_cmd->add_flag("--embed-prompts", enc.embed_prompts,
                      "embed half-precision prompt vectors in the stream");
    enc_cmd->add_option("--prompt-wav", enc.prompt_wav, "prompt audio (default: the input)");
    enc_cmd->add_option("--vp-embeddings", enc.vp_embeddings, "external voice-print table");
    enc_cmd->add_option("--vp-key", enc.vp_key, "voice-print table key");

    DecodeArgs dec;
    auto* dec_cmd = app.add_subcommand("decode", "decode a compressed stream to WAV");
    dec_cmd->add_option("--model", dec.model_path, "model checkpoint")->required();
    dec_cmd->add_option("--in", dec.in_path, "input stream (.pcc)")->required();
    dec_cmd->add_option("--out", dec.out_path, "output WAV")->required();
    dec_cmd->add_option("--prompt-wav", dec.prompt_wav, "receiver-side prompt audio");
    dec_cmd->add_option("--vp-embeddings", dec.vp_embeddings, "external voice-print table");
    dec_cmd->add_option("--vp-key", dec.vp_key, "voice-print table key");

    std::string eval_model, eval_manifest, eval_out = "pc_eval", pesq_tool, eval_vp;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint over a manifest");
    eval_cmd->add_option("--model", eval_model, "model checkpoint")->required();
    eval_cmd->add_option("--manifest", eval_manifest, "manifest file or WAV directory")
        ->required();
    eval_cmd->add_option("--out-dir", eval_out, "metrics output directory");
    eval_cmd->add_option("--pesq-tool", pesq_tool, "external PESQ executable");
    eval_cmd->add_option("--vp-embeddings", eval_vp, "external voice-print table");

    std::string abl_config, abl_out;
    std::vector<int> abl_nq;
    auto* abl_cmd = app.add_subcommand("ablate", "run the ablation grid and emit tables");
    abl_cmd->add_option("--config", abl_config, "base config file")->required();
    abl_cmd->add_option("--out-dir", abl_out, "report directory");
    abl_cmd->add_option("--n-q", abl_nq, "codebook counts (default 1 2 4)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            app.exit(e);
            return 0;
        }
        std::cerr << "error: usage: " << e.what() << "\n";
        std::cerr << app.help() << "\n";
        return 1;
    }

    try {
        if (train_cmd->parsed()) return run_train(config_path, out_dir);
        if (enc_cmd->parsed()) return run_encode(enc);
        if (dec_cmd->parsed()) return run_decode(dec);
        if (eval_cmd->parsed()) return run_eval(eval_model, eval_manifest, eval_out, pesq_tool,
                                                eval_vp);
        if (abl_cmd->parsed()) return run_ablate(abl_config, abl_out, abl_nq);
    } catch (const InvalidConfig& e) {
        std::cerr << "error: invalid-config: " << e.what() << "\n";
        return 2;
    } catch (const InvalidInput& e) {
        std::cerr << "error: invalid-input: " << e.what() << "\n";
        return 2;
    } catch (const CorruptStream& e) {
        std::cerr << "error: corrupt-stream: " << e.what() << "\n";
        return 2;
    } catch (const MissingPrompt& e) {
        std::cerr << "error: missing-prompt: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "error: numerical: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: io: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace promptcodec::cli
