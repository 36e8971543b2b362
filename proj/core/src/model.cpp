#include "promptcodec/model.hpp"

#include <cmath>
#include <cstring>

#include "promptcodec/errors.hpp"
#include "promptcodec/ops.hpp"

namespace promptcodec {

namespace {

Waveform clip_prompt(const Waveform& w, double seconds) {
    if (seconds <= 0.0) return w;
    const int64_t n = std::min<int64_t>(
        w.length(), std::max<int64_t>(1, static_cast<int64_t>(seconds * w.sample_rate)));
    Waveform out;
    out.sample_rate = w.sample_rate;
    out.samples.assign(w.samples.begin(), w.samples.begin() + n);
    return out;
}

}  // namespace

void ModelConfig::validate() const {
    codec.validate();
    grvq.validate(codec.latent_dim);
    cond.validate();
    vp.validate();
    dsp::validate_config(analysis, codec.sample_rate);
    if (prompt_seconds < 0.0) throw InvalidConfig("model: prompt_seconds must be >= 0");
}

io::KeyValues ModelConfig::to_key_values() const {
    io::KeyValues kv;
    kv["codec.sample_rate"] = std::to_string(codec.sample_rate);
    kv["codec.latent_dim"] = std::to_string(codec.latent_dim);
    kv["codec.encoder_strides"] = io::format_int_list(codec.encoder_strides);
    kv["codec.decoder_strides"] = io::format_int_list(codec.decoder_strides);
    kv["codec.base_channels"] = std::to_string(codec.base_channels);
    kv["codec.kernel_scale"] = std::to_string(codec.kernel_scale);
    kv["codec.seed"] = std::to_string(codec.seed);
    kv["grvq.groups"] = std::to_string(grvq.groups);
    kv["grvq.residual_layers"] = std::to_string(grvq.residual_layers);
    kv["grvq.codebook_size"] = std::to_string(grvq.codebook_size);
    kv["grvq.ema_decay"] = io::format_double(grvq.ema_decay);
    kv["grvq.commitment_weight"] = io::format_double(grvq.commitment_weight);
    kv["grvq.dead_code_threshold"] = io::format_double(grvq.dead_code_threshold);
    kv["grvq.seed"] = std::to_string(grvq.seed);
    kv["cond.model_dim"] = std::to_string(cond.model_dim);
    kv["cond.n_blocks"] = std::to_string(cond.n_blocks);
    kv["cond.n_heads"] = std::to_string(cond.n_heads);
    kv["cond.conv_kernel"] = std::to_string(cond.conv_kernel);
    kv["vp.kind"] =
        vp.kind == VoiceprintBackendKind::builtin_stats_pooling ? "builtin" : "external";
    kv["vp.embed_dim"] = std::to_string(vp.embed_dim);
    kv["vp.hidden_channels"] = std::to_string(vp.hidden_channels);
    kv["vp.frozen"] = vp.frozen ? "true" : "false";
    kv["analysis.n_fft"] = std::to_string(analysis.n_fft);
    kv["analysis.hop"] = std::to_string(analysis.hop);
    kv["analysis.win"] = std::to_string(analysis.win);
    kv["analysis.n_mels"] = std::to_string(analysis.n_mels);
    kv["analysis.fmin"] = io::format_double(analysis.fmin);
    kv["analysis.fmax"] = io::format_double(analysis.fmax);
    kv["analysis.log_floor"] = io::format_double(analysis.log_floor);
    kv["model.use_conditional"] = use_conditional ? "true" : "false";
    kv["model.use_voiceprint"] = use_voiceprint ? "true" : "false";
    kv["model.use_afwf"] = use_afwf ? "true" : "false";
    kv["model.alpha_init1"] = io::format_double(alpha_init1);
    kv["model.alpha_init2"] = io::format_double(alpha_init2);
    kv["model.alpha_init3"] = io::format_double(alpha_init3);
    kv["model.prompt_seconds"] = io::format_double(prompt_seconds);
    return kv;
}

ModelConfig ModelConfig::from_key_values(const io::KeyValues& kv) {
    ModelConfig c;
    c.codec.sample_rate = io::kv_int(kv, "codec.sample_rate", c.codec.sample_rate);
    c.codec.latent_dim = io::kv_int(kv, "codec.latent_dim", c.codec.latent_dim);
    c.codec.encoder_strides = io::kv_int_list(kv, "codec.encoder_strides", c.codec.encoder_strides);
    c.codec.decoder_strides = io::kv_int_list(kv, "codec.decoder_strides", c.codec.decoder_strides);
    c.codec.base_channels = io::kv_int(kv, "codec.base_channels", c.codec.base_channels);
    c.codec.kernel_scale = io::kv_int(kv, "codec.kernel_scale", c.codec.kernel_scale);
    c.codec.seed = static_cast<uint64_t>(io::kv_int(kv, "codec.seed", static_cast<int>(c.codec.seed)));
    c.grvq.groups = io::kv_int(kv, "grvq.groups", c.grvq.groups);
    c.grvq.residual_layers = io::kv_int(kv, "grvq.residual_layers", c.grvq.residual_layers);
    c.grvq.codebook_size = io::kv_int(kv, "grvq.codebook_size", c.grvq.codebook_size);
    c.grvq.ema_decay = io::kv_double(kv, "grvq.ema_decay", c.grvq.ema_decay);
    c.grvq.commitment_weight = io::kv_double(kv, "grvq.commitment_weight", c.grvq.commitment_weight);
    c.grvq.dead_code_threshold =
        io::kv_double(kv, "grvq.dead_code_threshold", c.grvq.dead_code_threshold);
    c.grvq.seed = static_cast<uint64_t>(io::kv_int(kv, "grvq.seed", static_cast<int>(c.grvq.seed)));
    c.cond.model_dim = io::kv_int(kv, "cond.model_dim", c.cond.model_dim);
    c.cond.n_blocks = io::kv_int(kv, "cond.n_blocks", c.cond.n_blocks);
    c.cond.n_heads = io::kv_int(kv, "cond.n_heads", c.cond.n_heads);
    c.cond.conv_kernel = io::kv_int(kv, "cond.conv_kernel", c.cond.conv_kernel);
    const std::string kind = io::kv_string(kv, "vp.kind", "builtin");
    if (kind == "builtin")
        c.vp.kind = VoiceprintBackendKind::builtin_stats_pooling;
    else if (kind == "external")
        c.vp.kind = VoiceprintBackendKind::external_file;
    else
        throw InvalidConfig("model: unknown vp.kind " + kind);
    c.vp.embed_dim = io::kv_int(kv, "vp.embed_dim", c.vp.embed_dim);
    c.vp.hidden_channels = io::kv_int(kv, "vp.hidden_channels", c.vp.hidden_channels);
    c.vp.frozen = io::kv_bool(kv, "vp.frozen", c.vp.frozen);
    c.analysis.n_fft = io::kv_int(kv, "analysis.n_fft", c.analysis.n_fft);
    c.analysis.hop = io::kv_int(kv, "analysis.hop", c.analysis.hop);
    c.analysis.win = io::kv_int(kv, "analysis.win", c.analysis.win);
    c.analysis.n_mels = io::kv_int(kv, "analysis.n_mels", c.analysis.n_mels);
    c.analysis.fmin = io::kv_double(kv, "analysis.fmin", c.analysis.fmin);
    c.analysis.fmax = io::kv_double(kv, "analysis.fmax", c.analysis.fmax);
    c.analysis.log_floor = io::kv_double(kv, "analysis.log_floor", c.analysis.log_floor);
    c.use_conditional = io::kv_bool(kv, "model.use_conditional", c.use_conditional);
    c.use_voiceprint = io::kv_bool(kv, "model.use_voiceprint", c.use_voiceprint);
    c.use_afwf = io::kv_bool(kv, "model.use_afwf", c.use_afwf);
    c.alpha_init1 = io::kv_double(kv, "model.alpha_init1", c.alpha_init1);
    c.alpha_init2 = io::kv_double(kv, "model.alpha_init2", c.alpha_init2);
    c.alpha_init3 = io::kv_double(kv, "model.alpha_init3", c.alpha_init3);
    c.prompt_seconds = io::kv_double(kv, "model.prompt_seconds", c.prompt_seconds);
    return c;
}

PromptCodecModel::PromptCodecModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(cfg.codec.seed);
    encoder_ = std::make_unique<Encoder>(cfg.codec, rng);
    decoder_ = std::make_unique<Decoder>(cfg.codec, rng);
    quantizer_ = std::make_unique<GroupResidualQuantizer>(cfg.grvq, cfg.codec.latent_dim);
    if (cfg.use_conditional)
        cond_ = std::make_unique<ConditionalPromptEncoder>(cfg.cond, cfg.analysis.n_mels,
                                                           cfg.codec.latent_dim, rng);
    if (cfg.use_voiceprint)
        vp_ = std::make_unique<VoiceprintPromptEncoder>(cfg.vp, cfg.analysis.n_mels,
                                                        cfg.codec.latent_dim, rng);
    if (cfg.use_afwf) {
        fusion_ = FusionWeights::make(cfg.alpha_init1, cfg.alpha_init2, cfg.alpha_init3, true);
    } else {
        // "w/o AFWF": plain unweighted addition, not trainable
        fusion_ = FusionWeights::make(1.0, 1.0, 1.0, false);
    }
}

std::map<std::string, nn::NamedParams> PromptCodecModel::parameter_groups() const {
    std::map<std::string, nn::NamedParams> g;
    encoder_->collect("encoder", g["encoder"]);
    decoder_->collect("decoder", g["decoder"]);
    fusion_.collect("fusion", g["fusion"]);
    if (cond_) {
        cond_->collect_backbone("cond_encoder", g["cond_encoder"]);
        cond_->collect_mlp("cond_mlp", g["cond_mlp"]);
    }
    if (vp_) {
        vp_->collect_backbone("vp_backend", g["vp_backend"]);
        vp_->collect_mlp("vp_mlp", g["vp_mlp"]);
    }
    return g;
}

nn::NamedParams PromptCodecModel::trainable_parameters() const {
    nn::NamedParams out;
    auto groups = parameter_groups();
    auto append = [&](const std::string& name) {
        auto it = groups.find(name);
        if (it == groups.end()) return;
        for (auto& [n, t] : it->second)
            if (t.requires_grad()) out.emplace_back(n, t);
    };
    append("encoder");
    append("decoder");
    if (cfg_.use_afwf) append("fusion");
    append("cond_encoder");
    append("cond_mlp");
    append("vp_backend");  // empty when frozen (requires_grad == false)
    append("vp_mlp");
    return out;
}

nn::NamedParams PromptCodecModel::checkpoint_parameters() const {
    nn::NamedParams out;
    for (auto& [group, params] : parameter_groups())
        for (auto& [n, t] : params) out.emplace_back(n, t);
    return out;
}

FeatureMatrix PromptCodecModel::prompt_mel(const Waveform& w) const {
    return dsp::mel_spectrogram(clip_prompt(w, cfg_.prompt_seconds), cfg_.analysis);
}

FeatureMatrix PromptCodecModel::prompt_fbank(const Waveform& w) const {
    return dsp::fbank(clip_prompt(w, cfg_.prompt_seconds), cfg_.analysis);
}

PromptPair PromptCodecModel::compute_prompts(const Waveform& prompt_audio,
                                             const std::vector<double>* external_vp) const {
    PromptPair p;
    if (cond_) p.pc = cond_->encode(prompt_mel(prompt_audio));
    if (vp_) {
        if (cfg_.vp.kind == VoiceprintBackendKind::external_file) {
            if (!external_vp)
                throw MissingPrompt("voiceprint backend is external but no embedding was given");
            p.pv = vp_->encode_external(*external_vp);
        } else {
            p.pv = vp_->encode(prompt_fbank(prompt_audio));
        }
    }
    return p;
}

Waveform PromptCodecModel::reconstruct(const Waveform& w, const PromptPair& prompts) const {
    LatentSequence z = encoder_->encode(w);
    QuantizeResult q = quantizer_->quantize(z);
    LatentSequence fused = fuse(q.z_q, prompts.pc ? &*prompts.pc : nullptr,
                                prompts.pv ? &*prompts.pv : nullptr, fusion_);
    return decoder_->decode(fused);
}

io::Stream PromptCodecModel::encode_stream(const Waveform& w, bool embed_prompts,
                                           const PromptPair& prompts) const {
    LatentSequence z = encoder_->encode(w);
    QuantizeResult q = quantizer_->quantize(z);
    io::Stream s;
    s.header.version = 1;
    s.header.sample_rate = static_cast<uint32_t>(cfg_.codec.sample_rate);
    s.header.hop = static_cast<uint16_t>(cfg_.codec.total_stride());
    s.header.groups = static_cast<uint8_t>(cfg_.grvq.groups);
    s.header.residuals = static_cast<uint8_t>(cfg_.grvq.residual_layers);
    s.header.codebook_size = static_cast<uint16_t>(cfg_.grvq.codebook_size);
    s.header.n_frames = static_cast<uint32_t>(q.indices.frames);
    s.header.prompt_flag = embed_prompts ? 1 : 0;
    s.indices = std::move(q.indices);
    if (embed_prompts) {
        const int d = cfg_.codec.latent_dim;
        io::PromptBlock pb;
        pb.z_pc.assign(d, 0.0);
        pb.z_pv.assign(d, 0.0);
        if (prompts.pc) pb.z_pc = prompts.pc->vector;
        if (prompts.pv) pb.z_pv = prompts.pv->vector;
        s.prompts = std::move(pb);
    }
    return s;
}

Waveform PromptCodecModel::decode_stream(const io::Stream& s,
                                         const PromptPair* receiver_prompts) const {
    if (s.header.sample_rate != static_cast<uint32_t>(cfg_.codec.sample_rate) ||
        s.header.hop != static_cast<uint16_t>(cfg_.codec.total_stride()) ||
        s.header.groups != static_cast<uint8_t>(cfg_.grvq.groups) ||
        s.header.residuals != static_cast<uint8_t>(cfg_.grvq.residual_layers) ||
        s.header.codebook_size != static_cast<uint16_t>(cfg_.grvq.codebook_size))
        throw InvalidInput("stream/model configuration mismatch");
    LatentSequence z_q = quantizer_->dequantize(s.indices);
    z_q.frame_rate = static_cast<double>(cfg_.codec.sample_rate) / cfg_.codec.total_stride();

    PromptEmbedding pc, pv;
    const PromptEmbedding* pcp = nullptr;
    const PromptEmbedding* pvp = nullptr;
    if (s.header.prompt_flag == 1) {
        if (!s.prompts) throw CorruptStream("stream: prompt flag set but block missing");
        if (cond_) {
            // half-precision round trip applied symmetrically at encode time
            pc.vector = s.prompts->z_pc;
            pc.source = PromptSource::conditional;
            pcp = &pc;
        }
        if (vp_) {
            pv.vector = s.prompts->z_pv;
            pv.source = PromptSource::voiceprint;
            pvp = &pv;
        }
    } else {
        if ((cond_ || vp_) && !receiver_prompts)
            throw MissingPrompt("stream carries no prompts; provide receiver-side prompt audio");
        if (receiver_prompts) {
            if (cond_) {
                if (!receiver_prompts->pc) throw MissingPrompt("missing conditional prompt");
                pcp = &*receiver_prompts->pc;
            }
            if (vp_) {
                if (!receiver_prompts->pv) throw MissingPrompt("missing voiceprint prompt");
                pvp = &*receiver_prompts->pv;
            }
        }
    }
    LatentSequence fused = fuse(z_q, pcp, pvp, fusion_);
    return decoder_->decode(fused);
}

void PromptCodecModel::save(const std::string& path) const {
    io::CheckpointData ckpt;
    ckpt.config = cfg_.to_key_values();
    // current fusion weights surfaced in the metadata echo, at the same
    // float32 precision the tensor section persists
    auto persisted = [](double v) {
        return io::format_double(static_cast<double>(static_cast<float>(v)));
    };
    ckpt.config["state.alpha1"] = persisted(fusion_.a1());
    ckpt.config["state.alpha2"] = persisted(fusion_.a2());
    ckpt.config["state.alpha3"] = persisted(fusion_.a3());

    for (const auto& [name, t] : checkpoint_parameters()) {
        io::NamedTensorF32 nt;
        nt.name = name;
        nt.shape = t.shape();
        nt.data.resize(t.data().size());
        for (size_t i = 0; i < nt.data.size(); ++i) nt.data[i] = static_cast<float>(t.data()[i]);
        ckpt.tensors.push_back(std::move(nt));
    }
    const auto& books = quantizer_->books();
    for (size_t i = 0; i < books.size(); ++i) {
        const std::string base = "quantizer.book" + std::to_string(i);
        const int k = cfg_.grvq.codebook_size;
        const int cd = quantizer_->code_dim();
        io::NamedTensorF32 e{base + ".entries", {k, cd}, {}};
        e.data.resize(books[i].entries.size());
        for (size_t j = 0; j < e.data.size(); ++j)
            e.data[j] = static_cast<float>(books[i].entries[j]);
        io::NamedTensorF32 c{base + ".ema_counts", {k}, {}};
        c.data.resize(books[i].ema_counts.size());
        for (size_t j = 0; j < c.data.size(); ++j)
            c.data[j] = static_cast<float>(books[i].ema_counts[j]);
        io::NamedTensorF32 s{base + ".ema_sums", {k, cd}, {}};
        s.data.resize(books[i].ema_sums.size());
        for (size_t j = 0; j < s.data.size(); ++j)
            s.data[j] = static_cast<float>(books[i].ema_sums[j]);
        ckpt.tensors.push_back(std::move(e));
        ckpt.tensors.push_back(std::move(c));
        ckpt.tensors.push_back(std::move(s));
    }
    io::write_checkpoint_file(path, ckpt);
}

std::unique_ptr<PromptCodecModel> PromptCodecModel::load(const std::string& path) {
    io::CheckpointData ckpt;
    try {
        ckpt = io::read_checkpoint_file(path);
    } catch (const CorruptStream& e) {
        throw CorruptStream(std::string("checkpoint '") + path + "': " + e.what());
    }
    auto model = std::make_unique<PromptCodecModel>(ModelConfig::from_key_values(ckpt.config));

    std::map<std::string, io::NamedTensorF32*> by_name;
    for (auto& t : ckpt.tensors) by_name[t.name] = &t;

    auto fill = [&](const std::string& name, std::vector<double>& dst) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw CorruptStream("checkpoint: missing tensor " + name);
        if (it->second->data.size() != dst.size())
            throw CorruptStream("checkpoint: size mismatch for tensor " + name);
        for (size_t i = 0; i < dst.size(); ++i)
            dst[i] = static_cast<double>(it->second->data[i]);
    };
    for (auto& [name, t] : model->checkpoint_parameters()) fill(name, t.data());
    auto& books = model->quantizer().books();
    for (size_t i = 0; i < books.size(); ++i) {
        const std::string base = "quantizer.book" + std::to_string(i);
        fill(base + ".entries", books[i].entries);
        fill(base + ".ema_counts", books[i].ema_counts);
        fill(base + ".ema_sums", books[i].ema_sums);
    }
    return model;
}

}  // namespace promptcodec
