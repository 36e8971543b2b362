#include "promptcodec/prompt_encoders.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "promptcodec/errors.hpp"
#include "promptcodec/ops.hpp"

namespace promptcodec {

void ConditionalEncoderConfig::validate() const {
    if (model_dim <= 0 || n_blocks < 1 || n_heads < 1)
        throw InvalidConfig("conditional encoder: sizes must be positive");
    if (model_dim % n_heads != 0)
        throw InvalidConfig("conditional encoder: model_dim not divisible by n_heads");
    if (conv_kernel < 1 || conv_kernel % 2 == 0)
        throw InvalidConfig("conditional encoder: conv kernel must be odd");
}

void VoiceprintConfig::validate() const {
    if (embed_dim <= 0 || hidden_channels <= 0)
        throw InvalidConfig("voiceprint encoder: sizes must be positive");
}

AlignMlp::AlignMlp(int in_dim, int out_dim, std::mt19937_64& rng)
    : l1_(in_dim, out_dim, rng), l2_(out_dim, out_dim, rng), in_dim_(in_dim) {}

nn::Tensor AlignMlp::forward(const nn::Tensor& v) const {
    if (v.ndim() != 1 || v.dim(0) != in_dim_) throw InvalidInput("align mlp: dimension mismatch");
    nn::Tensor h = nn::reshape(v, {1, v.dim(0)});
    h = l2_.forward(nn::elu(l1_.forward(h)));
    return nn::reshape(h, {h.dim(1)});
}

void AlignMlp::collect(const std::string& prefix, nn::NamedParams& out) const {
    l1_.collect(prefix + ".l1", out);
    l2_.collect(prefix + ".l2", out);
}

ConditionalPromptEncoder::ConditionalPromptEncoder(const ConditionalEncoderConfig& cfg, int n_mels,
                                                   int latent_dim, std::mt19937_64& rng)
    : cfg_(cfg) {
    cfg.validate();
    in_conv_ = nn::Conv1dLayer(n_mels, cfg.model_dim, cfg.conv_kernel, rng, 1, 1,
                               nn::Conv1dLayer::Padding::same, nn::PadMode::reflect);
    blocks_.resize(cfg.n_blocks);
    for (Block& b : blocks_) {
        b.ln1 = nn::LayerNorm(cfg.model_dim);
        b.ln2 = nn::LayerNorm(cfg.model_dim);
        b.wq = nn::Linear(cfg.model_dim, cfg.model_dim, rng);
        b.wk = nn::Linear(cfg.model_dim, cfg.model_dim, rng);
        b.wv = nn::Linear(cfg.model_dim, cfg.model_dim, rng);
        b.wo = nn::Linear(cfg.model_dim, cfg.model_dim, rng);
        b.proj = nn::Linear(cfg.model_dim, cfg.model_dim, rng);
    }
    mlp_ = AlignMlp(cfg.model_dim, latent_dim, rng);
}

nn::Tensor ConditionalPromptEncoder::attention(const Block& b, const nn::Tensor& x) const {
    const int T = x.dim(0);
    const int dh = cfg_.model_dim / cfg_.n_heads;
    nn::Tensor a = b.ln1.forward(x);
    nn::Tensor q = b.wq.forward(a);
    nn::Tensor k = b.wk.forward(a);
    nn::Tensor v = b.wv.forward(a);
    std::vector<nn::Tensor> heads;
    heads.reserve(cfg_.n_heads);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < cfg_.n_heads; ++h) {
        nn::Tensor qh = nn::slice_cols(q, h * dh, (h + 1) * dh);
        nn::Tensor kh = nn::slice_cols(k, h * dh, (h + 1) * dh);
        nn::Tensor vh = nn::slice_cols(v, h * dh, (h + 1) * dh);
        nn::Tensor scores = nn::mul_scalar(nn::matmul(qh, nn::transpose(kh)), inv_sqrt);
        heads.push_back(nn::matmul(nn::softmax_rows(scores), vh));
    }
    nn::Tensor o = b.wo.forward(nn::concat_cols(heads));
    nn::Tensor h1 = nn::add(x, o);
    nn::Tensor h2 = nn::add(h1, b.proj.forward(b.ln2.forward(h1)));
    (void)T;
    return h2;
}

nn::Tensor ConditionalPromptEncoder::backbone(const nn::Tensor& x_m) const {
    if (x_m.ndim() != 2) throw InvalidInput("conditional encoder: expects [T, n_mels]");
    if (x_m.dim(0) < 1) throw InvalidInput("conditional encoder: zero frames");
    nn::Tensor h = nn::transpose(in_conv_.forward(nn::transpose(x_m)));  // [T, C]
    for (const Block& b : blocks_) h = attention(b, h);
    return nn::col_mean(h);  // temporal averaging -> [C]
}

nn::Tensor ConditionalPromptEncoder::forward(const nn::Tensor& x_m) const {
    return mlp_.forward(backbone(x_m));
}

PromptEmbedding ConditionalPromptEncoder::encode(const FeatureMatrix& x_m) const {
    if (x_m.frames < 1) throw InvalidInput("conditional encoder: zero frames");
    nn::NoGradGuard ng;
    nn::Tensor out = forward(nn::Tensor::from(x_m.values, {x_m.frames, x_m.bins}));
    PromptEmbedding e;
    e.source = PromptSource::conditional;
    e.vector = out.data();
    return e;
}

void ConditionalPromptEncoder::collect_backbone(const std::string& prefix,
                                                nn::NamedParams& out) const {
    in_conv_.collect(prefix + ".in_conv", out);
    for (size_t i = 0; i < blocks_.size(); ++i) {
        const std::string p = prefix + ".block" + std::to_string(i);
        blocks_[i].ln1.collect(p + ".ln1", out);
        blocks_[i].ln2.collect(p + ".ln2", out);
        blocks_[i].wq.collect(p + ".wq", out);
        blocks_[i].wk.collect(p + ".wk", out);
        blocks_[i].wv.collect(p + ".wv", out);
        blocks_[i].wo.collect(p + ".wo", out);
        blocks_[i].proj.collect(p + ".proj", out);
    }
}

void ConditionalPromptEncoder::collect_mlp(const std::string& prefix, nn::NamedParams& out) const {
    mlp_.collect(prefix, out);
}

VoiceprintPromptEncoder::VoiceprintPromptEncoder(const VoiceprintConfig& cfg, int n_mels,
                                                 int latent_dim, std::mt19937_64& rng)
    : cfg_(cfg) {
    cfg.validate();
    const int h = cfg.hidden_channels;
    c1_ = nn::Conv1dLayer(n_mels, h, 5, rng, 1, 1, nn::Conv1dLayer::Padding::same,
                          nn::PadMode::reflect);
    c2_ = nn::Conv1dLayer(h, h, 3, rng, 1, 2, nn::Conv1dLayer::Padding::same, nn::PadMode::reflect);
    c3_ = nn::Conv1dLayer(h, h, 3, rng, 1, 3, nn::Conv1dLayer::Padding::same, nn::PadMode::reflect);
    c4_ = nn::Conv1dLayer(h, h, 1, rng);
    out_proj_ = nn::Linear(2 * h, cfg.embed_dim, rng);
    mlp_ = AlignMlp(cfg.embed_dim, latent_dim, rng);
    if (cfg.frozen) {
        nn::NamedParams backbone;
        collect_backbone("vp", backbone);
        nn::set_trainable(backbone, false);
    }
}

nn::Tensor VoiceprintPromptEncoder::backbone_embedding(const nn::Tensor& x_f) const {
    if (x_f.ndim() != 2) throw InvalidInput("voiceprint encoder: expects [T, bins]");
    if (x_f.dim(0) < 1) throw InvalidInput("voiceprint encoder: zero frames");
    nn::Tensor h = nn::transpose(x_f);  // [bins, T]
    h = nn::elu(c1_.forward(h));
    h = nn::elu(c2_.forward(h));
    h = nn::elu(c3_.forward(h));
    h = c4_.forward(h);  // [C, T]
    nn::Tensor mu = nn::row_mean(h);
    nn::Tensor centered = nn::sub(h, nn::expand_cols(mu, h.dim(1)));
    // tiny epsilon keeps sqrt differentiable while leaving the zero-variance
    // case below 1e-6
    nn::Tensor sigma = nn::sqrt_t(nn::row_mean(nn::mul(centered, centered)), 1e-14);
    nn::Tensor stats = nn::reshape(nn::concat0({mu, sigma}), {1, 2 * cfg_.hidden_channels});
    nn::Tensor e = out_proj_.forward(stats);
    return nn::reshape(e, {cfg_.embed_dim});
}

nn::Tensor VoiceprintPromptEncoder::forward(const nn::Tensor& x_f) const {
    return mlp_.forward(backbone_embedding(x_f));
}

nn::Tensor VoiceprintPromptEncoder::forward_external(const std::vector<double>& embedding) const {
    if (static_cast<int>(embedding.size()) != cfg_.embed_dim)
        throw InvalidInput("voiceprint encoder: external embedding dimension mismatch");
    return mlp_.forward(nn::Tensor::from(embedding, {cfg_.embed_dim}));
}

PromptEmbedding VoiceprintPromptEncoder::encode(const FeatureMatrix& x_f) const {
    if (x_f.frames < 1) throw InvalidInput("voiceprint encoder: zero frames");
    nn::NoGradGuard ng;
    nn::Tensor out = forward(nn::Tensor::from(x_f.values, {x_f.frames, x_f.bins}));
    PromptEmbedding e;
    e.source = PromptSource::voiceprint;
    e.vector = out.data();
    return e;
}

PromptEmbedding VoiceprintPromptEncoder::encode_external(
    const std::vector<double>& embedding) const {
    nn::NoGradGuard ng;
    nn::Tensor out = forward_external(embedding);
    PromptEmbedding e;
    e.source = PromptSource::voiceprint;
    e.vector = out.data();
    return e;
}

void VoiceprintPromptEncoder::collect_backbone(const std::string& prefix,
                                               nn::NamedParams& out) const {
    c1_.collect(prefix + ".c1", out);
    c2_.collect(prefix + ".c2", out);
    c3_.collect(prefix + ".c3", out);
    c4_.collect(prefix + ".c4", out);
    out_proj_.collect(prefix + ".proj", out);
}

void VoiceprintPromptEncoder::collect_mlp(const std::string& prefix, nn::NamedParams& out) const {
    mlp_.collect(prefix, out);
}

EmbeddingTable read_embedding_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open embedding file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    EmbeddingTable table;
    size_t pos = 0;
    auto rd_u16 = [&](const char* what) -> uint16_t {
        if (pos + 2 > bytes.size()) throw CorruptStream(std::string("embedding file: ") + what);
        const uint16_t v = static_cast<uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
        pos += 2;
        return v;
    };
    while (pos < bytes.size()) {
        const uint16_t id_len = rd_u16("truncated id length");
        if (pos + id_len > bytes.size()) throw CorruptStream("embedding file: truncated id");
        std::string id(reinterpret_cast<const char*>(bytes.data() + pos), id_len);
        pos += id_len;
        const uint16_t dim = rd_u16("truncated dimension");
        if (pos + 4u * dim > bytes.size()) throw CorruptStream("embedding file: truncated values");
        std::vector<double> vec(dim);
        for (int i = 0; i < dim; ++i) {
            float v;
            std::memcpy(&v, bytes.data() + pos + 4u * i, 4);
            vec[i] = static_cast<double>(v);
        }
        pos += 4u * dim;
        table[id] = std::move(vec);
    }
    return table;
}

void write_embedding_file(const std::string& path, const EmbeddingTable& table) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot create embedding file: " + path);
    for (const auto& [id, vec] : table) {
        if (id.size() > 0xffff) throw InvalidInput("embedding file: id too long");
        if (vec.size() > 0xffff) throw InvalidInput("embedding file: dimension too large");
        const uint16_t id_len = static_cast<uint16_t>(id.size());
        const uint16_t dim = static_cast<uint16_t>(vec.size());
        const uint8_t hdr[2] = {static_cast<uint8_t>(id_len & 0xff),
                                static_cast<uint8_t>(id_len >> 8)};
        f.write(reinterpret_cast<const char*>(hdr), 2);
        f.write(id.data(), id_len);
        const uint8_t dh[2] = {static_cast<uint8_t>(dim & 0xff), static_cast<uint8_t>(dim >> 8)};
        f.write(reinterpret_cast<const char*>(dh), 2);
        for (double d : vec) {
            const float v = static_cast<float>(d);
            f.write(reinterpret_cast<const char*>(&v), 4);
        }
    }
    if (!f) throw IoError("failed writing embedding file: " + path);
}

}  // namespace promptcodec
