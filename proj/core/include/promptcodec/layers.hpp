// Small trainable building blocks on top of the autodiff ops, plus Adam.
#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "promptcodec/ops.hpp"
#include "promptcodec/tensor.hpp"

namespace promptcodec::nn {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

void set_trainable(NamedParams& params, bool trainable);

struct Linear {
    Tensor w;  // [in, out]
    Tensor b;  // [out]

    Linear() = default;
    Linear(int in, int out, std::mt19937_64& rng);
    Tensor forward(const Tensor& x) const;  // [R,in] -> [R,out]
    void collect(const std::string& prefix, NamedParams& out) const;
};

struct Conv1dLayer {
    enum class Padding { same, same_ceil, none };

    Tensor w;  // [Cout, Cin, K]
    Tensor b;  // [Cout]
    int stride = 1;
    int dilation = 1;
    Padding padding = Padding::same;
    PadMode pad_mode = PadMode::zero;

    Conv1dLayer() = default;
    Conv1dLayer(int cin, int cout, int k, std::mt19937_64& rng, int stride = 1, int dilation = 1,
                Padding padding = Padding::same, PadMode pad_mode = PadMode::zero);
    Tensor forward(const Tensor& x) const;  // [Cin,T]
    void collect(const std::string& prefix, NamedParams& out) const;
};

// Transposed 1-D conv; output cropped to exactly T*stride samples.
struct ConvT1dLayer {
    Tensor w;  // [Cin, Cout, K]
    Tensor b;  // [Cout]
    int stride = 1;

    ConvT1dLayer() = default;
    ConvT1dLayer(int cin, int cout, int k, std::mt19937_64& rng, int stride);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, NamedParams& out) const;
};

// Weight-normalized 2-D conv (per-output-channel norm), zero padding.
struct WNConv2dLayer {
    Tensor v;  // direction [Cout, Cin, KH, KW]
    Tensor g;  // magnitude [Cout]
    Tensor b;  // [Cout]
    int stride_h = 1, stride_w = 1;
    int pad_h = 0, pad_w = 0;

    WNConv2dLayer() = default;
    WNConv2dLayer(int cin, int cout, int kh, int kw, std::mt19937_64& rng, int stride_h = 1,
                  int stride_w = 1, int pad_h = 0, int pad_w = 0);
    Tensor weight() const;
    Tensor forward(const Tensor& x) const;  // [Cin,H,W]
    void collect(const std::string& prefix, NamedParams& out) const;
};

struct LayerNorm {
    Tensor gamma;  // [C]
    Tensor beta;   // [C]

    LayerNorm() = default;
    explicit LayerNorm(int c);
    Tensor forward(const Tensor& x) const;  // [R,C]
    void collect(const std::string& prefix, NamedParams& out) const;
};

struct Adam {
    double lr;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    Adam() = default;
    Adam(NamedParams params, double lr, double beta1 = 0.9, double beta2 = 0.999);

    // p -= lr * mhat / (sqrt(vhat) + eps), using grad * grad_scale.
    void step(double grad_scale = 1.0);
    void zero_grad();
    const std::vector<std::string>& param_names() const { return names_; }
    size_t size() const { return params_.size(); }

  private:
    std::vector<Tensor> params_;
    std::vector<std::string> names_;
    std::vector<std::vector<double>> m_, v_;
    int64_t t_ = 0;
};

int64_t count_parameters(const NamedParams& params);

}  // namespace promptcodec::nn
