// Full PromptCodec model: waveform encoder, GRVQ quantizer, prompt branches,
// fusion weights and decoder, plus checkpoint and stream-level inference.
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>

#include "promptcodec/bitstream.hpp"
#include "promptcodec/checkpoint.hpp"
#include "promptcodec/codec.hpp"
#include "promptcodec/dsp.hpp"
#include "promptcodec/fusion.hpp"
#include "promptcodec/prompt_encoders.hpp"
#include "promptcodec/quantizer.hpp"

namespace promptcodec {

struct ModelConfig {
    CodecConfig codec;
    GRVQConfig grvq;
    ConditionalEncoderConfig cond;
    VoiceprintConfig vp;
    dsp::SpectrogramConfig analysis;  // mel/FBank frontend for the prompt branches

    bool use_conditional = true;
    bool use_voiceprint = true;
    bool use_afwf = true;
    double alpha_init1 = 1.0;
    double alpha_init2 = 0.1;
    double alpha_init3 = 0.1;
    double prompt_seconds = 0.0;  // 0 = full utterance as the prompt

    void validate() const;
    io::KeyValues to_key_values() const;
    static ModelConfig from_key_values(const io::KeyValues& kv);
};

struct PromptPair {
    std::optional<PromptEmbedding> pc;
    std::optional<PromptEmbedding> pv;
};

class PromptCodecModel {
  public:
    explicit PromptCodecModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    Encoder& encoder() { return *encoder_; }
    const Encoder& encoder() const { return *encoder_; }
    Decoder& decoder() { return *decoder_; }
    const Decoder& decoder() const { return *decoder_; }
    GroupResidualQuantizer& quantizer() { return *quantizer_; }
    const GroupResidualQuantizer& quantizer() const { return *quantizer_; }
    FusionWeights& fusion() { return fusion_; }
    const FusionWeights& fusion() const { return fusion_; }
    bool has_conditional() const { return cond_ != nullptr; }
    bool has_voiceprint() const { return vp_ != nullptr; }
    ConditionalPromptEncoder& conditional() { return *cond_; }
    const ConditionalPromptEncoder& conditional() const { return *cond_; }
    VoiceprintPromptEncoder& voiceprint() { return *vp_; }
    const VoiceprintPromptEncoder& voiceprint() const { return *vp_; }

    // Named parameter groups; keys: encoder, decoder, fusion, cond_encoder,
    // cond_mlp, vp_backend, vp_mlp (absent branches omitted).
    std::map<std::string, nn::NamedParams> parameter_groups() const;
    // The generator-side optimizer set under the configured ablation flags.
    nn::NamedParams trainable_parameters() const;
    nn::NamedParams checkpoint_parameters() const;  // includes frozen tensors

    // Prompt features from audio, honoring the prompt_seconds clip.
    FeatureMatrix prompt_mel(const Waveform& w) const;
    FeatureMatrix prompt_fbank(const Waveform& w) const;
    // Prompts from prompt audio; external_vp supplies the backend embedding
    // when the voice-print backend is external_file.
    PromptPair compute_prompts(const Waveform& prompt_audio,
                               const std::vector<double>* external_vp = nullptr) const;

    // Deterministic full-pipeline inference.
    Waveform reconstruct(const Waveform& w, const PromptPair& prompts) const;
    io::Stream encode_stream(const Waveform& w, bool embed_prompts,
                             const PromptPair& prompts) const;
    Waveform decode_stream(const io::Stream& s, const PromptPair* receiver_prompts) const;

    void save(const std::string& path) const;
    static std::unique_ptr<PromptCodecModel> load(const std::string& path);

  private:
    ModelConfig cfg_;
    std::unique_ptr<Encoder> encoder_;
    std::unique_ptr<Decoder> decoder_;
    std::unique_ptr<GroupResidualQuantizer> quantizer_;
    std::unique_ptr<ConditionalPromptEncoder> cond_;
    std::unique_ptr<VoiceprintPromptEncoder> vp_;
    FusionWeights fusion_;
};

}  // namespace promptcodec
