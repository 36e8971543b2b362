#include "promptcodec/codec.hpp"

#include <string>

#include "promptcodec/errors.hpp"
#include "promptcodec/ops.hpp"

namespace promptcodec {

int CodecConfig::total_stride() const {
    int m = 1;
    for (int s : encoder_strides) m *= s;
    return m;
}

void CodecConfig::validate() const {
    if (sample_rate <= 0) throw InvalidConfig("codec: sample rate must be positive");
    if (latent_dim <= 0) throw InvalidConfig("codec: latent dim must be positive");
    if (base_channels <= 0) throw InvalidConfig("codec: base channels must be positive");
    if (kernel_scale <= 0) throw InvalidConfig("codec: kernel scale must be positive");
    if (encoder_strides.empty() || decoder_strides.empty())
        throw InvalidConfig("codec: stride lists must be non-empty");
    int enc = 1, dec = 1;
    for (int s : encoder_strides) {
        if (s < 1) throw InvalidConfig("codec: strides must be >= 1");
        enc *= s;
    }
    for (int s : decoder_strides) {
        if (s < 1) throw InvalidConfig("codec: strides must be >= 1");
        dec *= s;
    }
    if (enc != dec) throw InvalidConfig("codec: encoder/decoder stride products differ");
}

namespace detail {

ResidualUnit::ResidualUnit(int channels, int dilation, std::mt19937_64& rng)
    : c1(channels, channels, 3, rng, 1, dilation, nn::Conv1dLayer::Padding::same),
      c2(channels, channels, 1, rng) {}

nn::Tensor ResidualUnit::forward(const nn::Tensor& x) const {
    nn::Tensor h = c1.forward(nn::elu(x));
    h = c2.forward(nn::elu(h));
    return nn::add(x, h);
}

void ResidualUnit::collect(const std::string& prefix, nn::NamedParams& out) const {
    c1.collect(prefix + ".c1", out);
    c2.collect(prefix + ".c2", out);
}

}  // namespace detail

Encoder::Encoder(const CodecConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg.validate();
    const int n = static_cast<int>(cfg.encoder_strides.size());
    head_ = nn::Conv1dLayer(1, cfg.base_channels, 7, rng);
    int ch = cfg.base_channels;
    for (int i = 0; i < n; ++i) {
        const int s = cfg.encoder_strides[i];
        Stage st;
        st.r1 = detail::ResidualUnit(ch, 1, rng);
        st.r2 = detail::ResidualUnit(ch, 3, rng);
        st.down = nn::Conv1dLayer(ch, ch * 2, cfg.kernel_scale * s, rng, s, 1,
                                  nn::Conv1dLayer::Padding::same_ceil);
        stages_.push_back(std::move(st));
        ch *= 2;
    }
    tail_ = nn::Conv1dLayer(ch, cfg.latent_dim, 3, rng);
}

nn::Tensor Encoder::forward(const nn::Tensor& wave) const {
    if (wave.ndim() != 1) throw InvalidInput("encoder: expects a 1-D signal tensor");
    nn::Tensor h = nn::reshape(wave, {1, wave.dim(0)});
    h = head_.forward(h);
    for (const Stage& st : stages_) {
        h = st.r1.forward(h);
        h = st.r2.forward(h);
        h = st.down.forward(h);
    }
    h = tail_.forward(h);
    return nn::transpose(h);  // [T, D]
}

LatentSequence Encoder::encode(const Waveform& w) const {
    if (w.sample_rate != cfg_.sample_rate)
        throw InvalidInput("encoder: sample-rate mismatch (got " + std::to_string(w.sample_rate) +
                           " Hz, config " + std::to_string(cfg_.sample_rate) + " Hz)");
    const int m = cfg_.total_stride();
    if (w.length() < m)
        throw InvalidInput("encoder: input shorter than one frame (" + std::to_string(w.length()) +
                           " < " + std::to_string(m) + ")");
    nn::NoGradGuard ng;
    nn::Tensor out = forward(nn::Tensor::from(w.samples, {static_cast<int>(w.samples.size())}));
    LatentSequence z;
    z.frames = out.dim(0);
    z.dim = out.dim(1);
    z.frame_rate = static_cast<double>(cfg_.sample_rate) / m;
    z.values = out.data();
    return z;
}

void Encoder::collect(const std::string& prefix, nn::NamedParams& out) const {
    head_.collect(prefix + ".head", out);
    for (size_t i = 0; i < stages_.size(); ++i) {
        const std::string p = prefix + ".stage" + std::to_string(i);
        stages_[i].r1.collect(p + ".r1", out);
        stages_[i].r2.collect(p + ".r2", out);
        stages_[i].down.collect(p + ".down", out);
    }
    tail_.collect(prefix + ".tail", out);
}

Decoder::Decoder(const CodecConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg.validate();
    const int n = static_cast<int>(cfg.decoder_strides.size());
    int ch = cfg.base_channels;
    for (int i = 0; i < n; ++i) ch *= 2;
    head_ = nn::Conv1dLayer(cfg.latent_dim, ch, 3, rng);
    for (int i = 0; i < n; ++i) {
        const int s = cfg.decoder_strides[i];
        Stage st;
        st.up = nn::ConvT1dLayer(ch, ch / 2, cfg.kernel_scale * s, rng, s);
        ch /= 2;
        st.r1 = detail::ResidualUnit(ch, 1, rng);
        st.r2 = detail::ResidualUnit(ch, 3, rng);
        stages_.push_back(std::move(st));
    }
    tail_ = nn::Conv1dLayer(ch, 1, 7, rng);
}

nn::Tensor Decoder::forward(const nn::Tensor& latent) const {
    if (latent.ndim() != 2 || latent.dim(1) != cfg_.latent_dim)
        throw InvalidInput("decoder: latent channel mismatch");
    nn::Tensor h = nn::transpose(latent);  // [D, T]
    h = head_.forward(h);
    for (const Stage& st : stages_) {
        h = st.up.forward(nn::elu(h));
        h = st.r1.forward(h);
        h = st.r2.forward(h);
    }
    h = nn::tanh_t(tail_.forward(nn::elu(h)));
    return nn::reshape(h, {h.dim(1)});
}

Waveform Decoder::decode(const LatentSequence& z) const {
    if (z.dim != cfg_.latent_dim) throw InvalidInput("decoder: latent channel mismatch");
    nn::NoGradGuard ng;
    nn::Tensor out = forward(nn::Tensor::from(z.values, {z.frames, z.dim}));
    Waveform w;
    w.sample_rate = cfg_.sample_rate;
    w.samples = out.data();
    return w;
}

void Decoder::zero_output_layer() {
    std::fill(tail_.w.data().begin(), tail_.w.data().end(), 0.0);
    std::fill(tail_.b.data().begin(), tail_.b.data().end(), 0.0);
}

void Decoder::collect(const std::string& prefix, nn::NamedParams& out) const {
    head_.collect(prefix + ".head", out);
    for (size_t i = 0; i < stages_.size(); ++i) {
        const std::string p = prefix + ".stage" + std::to_string(i);
        stages_[i].up.collect(p + ".up", out);
        stages_[i].r1.collect(p + ".r1", out);
        stages_[i].r2.collect(p + ".r2", out);
    }
    tail_.collect(prefix + ".tail", out);
}

}  // namespace promptcodec
