// Reverse-mode autodiff over dense double tensors. Ops in ops.hpp build the
// graph dynamically; it is freed when the last Tensor referencing it drops.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

namespace promptcodec::nn {

class Tensor;

struct TensorImpl {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // sized lazily, zero-filled
    bool requires_grad = false;
    std::vector<Tensor> parents;        // keeps ancestors alive for backward
    std::function<void()> backward_fn;  // accumulates into parents' grads
};

class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor from(std::vector<double> values, std::vector<int> shape,
                       bool requires_grad = false);
    // Normal(0, stddev^2) entries drawn from rng in index order.
    static Tensor randn(std::vector<int> shape, std::mt19937_64& rng, double stddev,
                        bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

    std::vector<double>& data() { return impl_->data; }
    const std::vector<double>& data() const { return impl_->data; }
    double value() const;  // requires numel() == 1

    std::vector<double>& grad();
    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }
    void zero_grad();

    // Backpropagate from this scalar node through the recorded graph.
    void backward();

    std::shared_ptr<TensorImpl>& impl() { return impl_; }
    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

  private:
    std::shared_ptr<TensorImpl> impl_;
};

bool grad_enabled();

// Disables graph recording for its scope (inference fast path).
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

// Creates the output node of an op: requires_grad and parent edges are set
// when recording is on and some parent needs gradients.
Tensor make_node(std::vector<int> shape, const std::vector<Tensor>& parents);

// Sizes t->grad to match data (zero-filled) if not already.
void ensure_grad(TensorImpl* t);

int64_t shape_numel(const std::vector<int>& shape);

}  // namespace promptcodec::nn
