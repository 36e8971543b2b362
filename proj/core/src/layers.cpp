#include "promptcodec/layers.hpp"

#include <cmath>

#include "promptcodec/errors.hpp"

namespace promptcodec::nn {

namespace {

double fan_in_std(int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

}  // namespace

void set_trainable(NamedParams& params, bool trainable) {
    for (auto& [name, t] : params) t.set_requires_grad(trainable);
}

Linear::Linear(int in, int out, std::mt19937_64& rng)
    : w(Tensor::randn({in, out}, rng, fan_in_std(in), true)),
      b(Tensor::zeros({out}, true)) {}

Tensor Linear::forward(const Tensor& x) const {
    return add(matmul(x, w), expand_rows(b, x.dim(0)));
}

void Linear::collect(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
}

Conv1dLayer::Conv1dLayer(int cin, int cout, int k, std::mt19937_64& rng, int stride, int dilation,
                         Padding padding, PadMode pad_mode)
    : w(Tensor::randn({cout, cin, k}, rng, fan_in_std(cin * k), true)),
      b(Tensor::zeros({cout}, true)),
      stride(stride),
      dilation(dilation),
      padding(padding),
      pad_mode(pad_mode) {}

Tensor Conv1dLayer::forward(const Tensor& x) const {
    const int T = x.dim(1);
    const int k = w.dim(2);
    const int span = dilation * (k - 1) + 1;
    int total = 0;
    if (padding == Padding::same) {
        total = span - 1;
    } else if (padding == Padding::same_ceil) {
        const int out_t = (T + stride - 1) / stride;
        total = std::max(0, (out_t - 1) * stride + span - T);
    }
    Tensor in = x;
    if (total > 0) in = pad1d(x, total / 2, total - total / 2, pad_mode);
    return conv1d(in, w, b, stride, dilation);
}

void Conv1dLayer::collect(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
}

ConvT1dLayer::ConvT1dLayer(int cin, int cout, int k, std::mt19937_64& rng, int stride)
    : w(Tensor::randn({cin, cout, k}, rng, fan_in_std(cin * k), true)),
      b(Tensor::zeros({cout}, true)),
      stride(stride) {
    if (k < stride) throw InvalidConfig("transposed conv kernel must be >= stride");
}

Tensor ConvT1dLayer::forward(const Tensor& x) const {
    const int k = w.dim(2);
    Tensor full = conv_transpose1d(x, w, b, stride);
    const int extra = k - stride;
    if (extra == 0) return full;
    return crop1d(full, extra / 2, extra - extra / 2);
}

void ConvT1dLayer::collect(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
}

WNConv2dLayer::WNConv2dLayer(int cin, int cout, int kh, int kw, std::mt19937_64& rng, int stride_h,
                             int stride_w, int pad_h, int pad_w)
    : v(Tensor::randn({cout, cin, kh, kw}, rng, fan_in_std(cin * kh * kw), true)),
      g(Tensor::zeros({cout}, true)),
      b(Tensor::zeros({cout}, true)),
      stride_h(stride_h),
      stride_w(stride_w),
      pad_h(pad_h),
      pad_w(pad_w) {
    // g starts at the row norms of v so the initial weight equals v
    const int rest = cin * kh * kw;
    for (int co = 0; co < cout; ++co) {
        double acc = 0.0;
        for (int i = 0; i < rest; ++i) {
            const double x = v.data()[static_cast<size_t>(co) * rest + i];
            acc += x * x;
        }
        g.data()[co] = std::sqrt(acc);
    }
}

Tensor WNConv2dLayer::weight() const {
    const int cout = v.dim(0);
    const int rest = v.dim(1) * v.dim(2) * v.dim(3);
    Tensor v2 = reshape(v, {cout, rest});
    Tensor norms = sqrt_t(mul_scalar(row_mean(mul(v2, v2)), static_cast<double>(rest)), 1e-12);
    Tensor scaled = mul(v2, expand_cols(div(g, norms), rest));
    return reshape(scaled, v.shape());
}

Tensor WNConv2dLayer::forward(const Tensor& x) const {
    Tensor in = (pad_h > 0 || pad_w > 0) ? pad2d(x, pad_h, pad_w) : x;
    return conv2d(in, weight(), b, stride_h, stride_w);
}

void WNConv2dLayer::collect(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".v", v);
    out.emplace_back(prefix + ".g", g);
    out.emplace_back(prefix + ".b", b);
}

LayerNorm::LayerNorm(int c) : gamma(Tensor::full({c}, 1.0, true)), beta(Tensor::zeros({c}, true)) {}

Tensor LayerNorm::forward(const Tensor& x) const { return layer_norm_rows(x, gamma, beta); }

void LayerNorm::collect(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
}

Adam::Adam(NamedParams params, double lr, double beta1, double beta2)
    : lr(lr), beta1(beta1), beta2(beta2) {
    for (auto& [name, t] : params) {
        names_.push_back(name);
        params_.push_back(t);
        m_.emplace_back(t.numel(), 0.0);
        v_.emplace_back(t.numel(), 0.0);
    }
}

void Adam::step(double grad_scale) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (size_t p = 0; p < params_.size(); ++p) {
        auto& data = params_[p].data();
        auto& grad = params_[p].grad();
        auto& m = m_[p];
        auto& v = v_[p];
        for (size_t i = 0; i < data.size(); ++i) {
            const double gi = grad[i] * grad_scale;
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            data[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

int64_t count_parameters(const NamedParams& params) {
    int64_t n = 0;
    for (const auto& [name, t] : params)
        if (t.requires_grad()) n += t.numel();
    return n;
}

}  // namespace promptcodec::nn
