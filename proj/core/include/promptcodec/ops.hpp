// Differentiable primitives. Shapes use row-major layout; matrices are
// [rows x cols], conv inputs are channel-major ([C x T], [C x H x W]).
#pragma once

#include <vector>

#include "promptcodec/tensor.hpp"

namespace promptcodec::nn {

enum class PadMode { zero, reflect };

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
// Elementwise product with a [1]-shaped tensor (learnable scalar weight).
Tensor scale(const Tensor& a, const Tensor& s);
Tensor abs_t(const Tensor& a);
Tensor tanh_t(const Tensor& a);
Tensor elu(const Tensor& a, double alpha = 1.0);
Tensor leaky_relu(const Tensor& a, double slope);
// sqrt(x + eps)
Tensor sqrt_t(const Tensor& a, double eps = 0.0);
// log(max(x, floor)); gradient is 0 where x < floor
Tensor log_floor(const Tensor& a, double floor);

// ---- reductions / broadcast ----
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor row_mean(const Tensor& a);                 // [R,C] -> [R]
Tensor col_mean(const Tensor& a);                 // [R,C] -> [C]
Tensor expand_cols(const Tensor& v, int cols);    // [R] -> [R,C], row r constant
Tensor expand_rows(const Tensor& v, int rows);    // [C] -> [R,C], every row = v

// ---- linear algebra / shape ----
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]x[k,n]
Tensor transpose(const Tensor& a);                // [m,n] -> [n,m]
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice0(const Tensor& a, int i0, int i1);   // along leading dim
Tensor concat0(const std::vector<Tensor>& parts); // along leading dim
Tensor softmax_rows(const Tensor& a);
Tensor layer_norm_rows(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-5);

// ---- padding / conv ----
Tensor pad1d(const Tensor& x, int left, int right, PadMode mode);  // [C,T]
Tensor crop1d(const Tensor& x, int left, int right);               // [C,T]
Tensor pad2d(const Tensor& x, int pad_h, int pad_w);               // [C,H,W], zeros
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride = 1,
              int dilation = 1);  // x [Cin,T], w [Cout,Cin,K]
Tensor conv_transpose1d(const Tensor& x, const Tensor& w, const Tensor& b,
                        int stride);  // x [Cin,T], w [Cin,Cout,K]
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride_h,
              int stride_w);  // x [Cin,H,W], w [Cout,Cin,KH,KW]

// ---- spectral ----
// Slices a 1-D signal [L] into frames [F, frame_len]. With center=true the
// signal is reflect-padded by frame_len/2 on both sides and F = 1 + L/hop;
// otherwise frames are valid-mode and F = 1 + (L - frame_len)/hop.
Tensor frame_signal(const Tensor& x, int frame_len, int hop, bool center);
// Real DFT of each row: [F,N] -> [F, 2*(N/2+1)], re parts then im parts.
Tensor rdft_rows(const Tensor& frames);

// ---- graph control ----
Tensor stopgrad(const Tensor& a);  // detached copy of the data

// Folds index i into [0, n) by boundary reflection without edge repeat.
int reflect_index(int64_t i, int64_t n);

}  // namespace promptcodec::nn
