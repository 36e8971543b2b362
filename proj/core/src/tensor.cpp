#include "promptcodec/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "promptcodec/errors.hpp"

namespace promptcodec::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw InvalidInput("negative tensor dimension");
        n *= d;
    }
    return n;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data.assign(static_cast<size_t>(shape_numel(t.impl_->shape)), 0.0);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& v : t.data()) v = value;
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return full({1}, value, requires_grad);
}

Tensor Tensor::from(std::vector<double> values, std::vector<int> shape, bool requires_grad) {
    if (static_cast<int64_t>(values.size()) != shape_numel(shape))
        throw InvalidInput("tensor data size does not match shape");
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(values);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::randn(std::vector<int> shape, std::mt19937_64& rng, double stddev,
                     bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

double Tensor::value() const {
    if (!impl_ || impl_->data.size() != 1) throw InvalidInput("value() requires a scalar tensor");
    return impl_->data[0];
}

std::vector<double>& Tensor::grad() {
    ensure_grad(impl_.get());
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void ensure_grad(TensorImpl* t) {
    if (t->grad.size() != t->data.size()) t->grad.assign(t->data.size(), 0.0);
}

Tensor make_node(std::vector<int> shape, const std::vector<Tensor>& parents) {
    Tensor out = Tensor::zeros(std::move(shape));
    if (!g_grad_enabled) return out;
    bool needs = false;
    for (const Tensor& p : parents) {
        if (p.defined() && p.requires_grad()) {
            needs = true;
            break;
        }
    }
    if (needs) {
        out.impl()->requires_grad = true;
        for (const Tensor& p : parents)
            if (p.defined()) out.impl()->parents.push_back(p);
    }
    return out;
}

void Tensor::backward() {
    if (!impl_) throw InvalidInput("backward() on undefined tensor");
    if (impl_->data.size() != 1) throw InvalidInput("backward() requires a scalar root");
    if (!impl_->requires_grad) return;

    // Iterative post-order DFS over nodes that require grad.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    struct Frame {
        TensorImpl* node;
        size_t next_child;
    };
    std::vector<Frame> stack;
    stack.push_back({impl_.get(), 0});
    visited.insert(impl_.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_child < f.node->parents.size()) {
            TensorImpl* child = f.node->parents[f.next_child].impl().get();
            ++f.next_child;
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.push_back({child, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    ensure_grad(impl_.get());
    impl_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn();
    }
}

}  // namespace promptcodec::nn
