// The two prompt branches: a Mel-spectrogram conditional encoder (1-D conv,
// self-attention blocks, temporal averaging) and an FBank voice-print encoder
// (built-in stats-pooling backend or external per-utterance embeddings), each
// followed by its own MLP aligner to the codec latent dimension.
#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "promptcodec/layers.hpp"
#include "promptcodec/types.hpp"

namespace promptcodec {

struct ConditionalEncoderConfig {
    int model_dim = 256;
    int n_blocks = 6;
    int n_heads = 4;
    int conv_kernel = 5;  // odd

    void validate() const;
};

enum class VoiceprintBackendKind { builtin_stats_pooling, external_file };

struct VoiceprintConfig {
    VoiceprintBackendKind kind = VoiceprintBackendKind::builtin_stats_pooling;
    int embed_dim = 192;
    int hidden_channels = 64;
    bool frozen = true;

    void validate() const;
};

// Two affine layers with an ELU between them.
class AlignMlp {
  public:
    AlignMlp() = default;
    AlignMlp(int in_dim, int out_dim, std::mt19937_64& rng);
    nn::Tensor forward(const nn::Tensor& v) const;  // [in] -> [out]
    void collect(const std::string& prefix, nn::NamedParams& out) const;
    int in_dim() const { return in_dim_; }

  private:
    nn::Linear l1_, l2_;
    int in_dim_ = 0;
};

class ConditionalPromptEncoder {
  public:
    ConditionalPromptEncoder() = default;
    ConditionalPromptEncoder(const ConditionalEncoderConfig& cfg, int n_mels, int latent_dim,
                             std::mt19937_64& rng);

    // [T, n_mels] mel matrix -> [model_dim] pooled feature (pre-aligner).
    nn::Tensor backbone(const nn::Tensor& x_m) const;
    // Full branch: backbone then aligner, -> [latent_dim].
    nn::Tensor forward(const nn::Tensor& x_m) const;
    PromptEmbedding encode(const FeatureMatrix& x_m) const;

    void collect_backbone(const std::string& prefix, nn::NamedParams& out) const;
    void collect_mlp(const std::string& prefix, nn::NamedParams& out) const;

  private:
    struct Block {
        nn::LayerNorm ln1, ln2;
        nn::Linear wq, wk, wv, wo;
        nn::Linear proj;
    };
    nn::Tensor attention(const Block& b, const nn::Tensor& x) const;

    ConditionalEncoderConfig cfg_;
    nn::Conv1dLayer in_conv_;
    std::vector<Block> blocks_;
    AlignMlp mlp_;
};

class VoiceprintPromptEncoder {
  public:
    VoiceprintPromptEncoder() = default;
    VoiceprintPromptEncoder(const VoiceprintConfig& cfg, int n_mels, int latent_dim,
                            std::mt19937_64& rng);

    // Built-in backend: TDNN-style convs, mean/std statistics pooling,
    // projection to embed_dim. Pre-aligner output, [embed_dim].
    nn::Tensor backbone_embedding(const nn::Tensor& x_f) const;
    nn::Tensor forward(const nn::Tensor& x_f) const;  // -> [latent_dim]
    nn::Tensor forward_external(const std::vector<double>& embedding) const;

    PromptEmbedding encode(const FeatureMatrix& x_f) const;
    PromptEmbedding encode_external(const std::vector<double>& embedding) const;

    const VoiceprintConfig& config() const { return cfg_; }
    void collect_backbone(const std::string& prefix, nn::NamedParams& out) const;
    void collect_mlp(const std::string& prefix, nn::NamedParams& out) const;

  private:
    VoiceprintConfig cfg_;
    nn::Conv1dLayer c1_, c2_, c3_, c4_;
    nn::Linear out_proj_;
    AlignMlp mlp_;
};

// External per-utterance voice-print embeddings, keyed by utterance id.
using EmbeddingTable = std::map<std::string, std::vector<double>>;

// Binary file of records: u16 id length + UTF-8 id, u16 embed_dim,
// embed_dim float32 LE values.
EmbeddingTable read_embedding_file(const std::string& path);
void write_embedding_file(const std::string& path, const EmbeddingTable& table);

}  // namespace promptcodec
