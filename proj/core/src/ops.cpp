#include "promptcodec/ops.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>

#include "promptcodec/errors.hpp"
#include "promptcodec/fft.hpp"

namespace promptcodec::nn {

namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw InvalidInput(msg);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) throw InvalidInput(std::string(op) + ": shape mismatch");
}

using Impl = std::shared_ptr<TensorImpl>;

}  // namespace

int reflect_index(int64_t i, int64_t n) {
    if (n <= 1) return 0;
    const int64_t period = 2 * (n - 1);
    int64_t m = i % period;
    if (m < 0) m += period;
    if (m >= n) m = period - m;
    return static_cast<int>(m);
}

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = make_node(a.shape(), {a, b});
    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] + bd[i];
    if (out.requires_grad()) {
        Impl ai = a.impl(), bi = b.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [ai, bi, self]() {
            if (ai->requires_grad) {
                ensure_grad(ai.get());
                for (size_t i = 0; i < self->grad.size(); ++i) ai->grad[i] += self->grad[i];
            }
            if (bi->requires_grad) {
                ensure_grad(bi.get());
                for (size_t i = 0; i < self->grad.size(); ++i) bi->grad[i] += self->grad[i];
            }
        };
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = make_node(a.shape(), {a, b});
    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] - bd[i];
    if (out.requires_grad()) {
        Impl ai = a.impl(), bi = b.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [ai, bi, self]() {
            if (ai->requires_grad) {
                ensure_grad(ai.get());
                for (size_t i = 0; i < self->grad.size(); ++i) ai->grad[i] += self->grad[i];
            }
            if (bi->requires_grad) {
                ensure_grad(bi.get());
                for (size_t i = 0; i < self->grad.size(); ++i) bi->grad[i] -= self->grad[i];
            }
        };
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = make_node(a.shape(), {a, b});
    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * bd[i];
    if (out.requires_grad()) {
        Impl ai = a.impl(), bi = b.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [ai, bi, self]() {
            if (ai->requires_grad) {
                ensure_grad(ai.get());
                for (size_t i = 0; i < self->grad.size(); ++i)
                    ai->grad[i] += self->grad[i] * bi->data[i];
            }
            if (bi->requires_grad) {
                ensure_grad(bi.get());
                for (size_t i = 0; i < self->grad.size(); ++i)
                    bi->grad[i] += self->grad[i] * ai->data[i];
            }
        };
    }
    return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "div");
    Tensor out = make_node(a.shape(), {a, b});
    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] / bd[i];
    if (out.requires_grad()) {
        Impl ai = a.impl(), bi = b.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [ai, bi, self]() {
            if (ai->requires_grad) {
                ensure_grad(ai.get());
                for (size_t i = 0; i < self->grad.size(); ++i)
                    ai->grad[i] += self->grad[i] / bi->data[i];
            }
            if (bi->requires_grad) {
                ensure_grad(bi.get());
                for (size_t i = 0; i < self->grad.size(); ++i) {
                    const double inv = 1.0 / bi->data[i];
                    bi->grad[i] -= self->grad[i] * ai->data[i] * inv * inv;
                }
            }
        };
    }
    return out;
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor add_scalar(const Tensor& a, double c) {
    Tensor out = make_node(a.shape(), {a});
    const auto& ad = a.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] + c;
    if (out.requires_grad()) {
        Impl ai = a.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [ai, self]() {
            ensure_grad(ai.get());
            for (size_t i = 0; i < self->grad.size(); ++i) ai->grad[i] += self->grad[i];
        };
    }
    return out;
}

Tensor mul_scalar(const Tensor& a, double c) {
    Tensor out = make_node(a.shape(), {a});
    const auto& ad = a.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * c;
    if (out.requires_grad()) {
        Impl ai = a.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [ai, self, c]() {
            ensure_grad(ai.get());
            for (size_t i = 0; i < self->grad.size(); ++i) ai->grad[i] += self->grad[i] * c;
        };
    }
    return out;
}

Tensor scale(const Tensor& a, const Tensor& s) {
    require(s.numel() == 1, "scale: weight must have a single element");
    Tensor out = make_node(a.shape(), {a, s});
    const double sv = s.data()[0];
    const auto& ad = a.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * sv;
    if (out.requires_grad()) {
        Impl ai = a.impl(), si = s.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [ai, si, self]() {
            const double w = si->data[0];
            if (ai->requires_grad) {
                ensure_grad(ai.get());
                for (size_t i = 0; i < self->grad.size(); ++i) ai->grad[i] += self->grad[i] * w;
            }
            if (si->requires_grad) {
                ensure_grad(si.get());
                double acc = 0.0;
                for (size_t i = 0; i < self->grad.size(); ++i) acc += self->grad[i] * ai->data[i];
                si->grad[0] += acc;
            }
        };
    }
    return out;
}

namespace {

template <typename F, typename DF>
Tensor unary_op(const Tensor& a, F f, DF df) {
    Tensor out = make_node(a.shape(), {a});
    const auto& ad = a.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = f(ad[i]);
    if (out.requires_grad()) {
        Impl ai = a.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [ai, self, df]() {
            ensure_grad(ai.get());
            for (size_t i = 0; i < self->grad.size(); ++i)
                ai->grad[i] += self->grad[i] * df(ai->data[i], self->data[i]);
        };
    }
    return out;
}

}  // namespace

Tensor abs_t(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor tanh_t(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor elu(const Tensor& a, double alpha) {
    return unary_op(
        a, [alpha](double x) { return x >= 0.0 ? x : alpha * std::expm1(x); },
        [alpha](double x, double y) { return x >= 0.0 ? 1.0 : y + alpha; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
    return unary_op(
        a, [slope](double x) { return x >= 0.0 ? x : slope * x; },
        [slope](double x, double) { return x >= 0.0 ? 1.0 : slope; });
}

Tensor sqrt_t(const Tensor& a, double eps) {
    return unary_op(
        a, [eps](double x) { return std::sqrt(x + eps); },
        [](double, double y) { return 0.5 / y; });
}

Tensor log_floor(const Tensor& a, double floor) {
    require(floor > 0.0, "log_floor: floor must be positive");
    return unary_op(
        a, [floor](double x) { return std::log(std::max(x, floor)); },
        [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

// --------------------------------------------------------------- reductions

Tensor sum_all(const Tensor& a) {
    Tensor out = make_node({1}, {a});
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    out.data()[0] = acc;
    if (out.requires_grad()) {
        Impl ai = a.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [ai, self]() {
            ensure_grad(ai.get());
            const double g = self->grad[0];
            for (double& gv : ai->grad) gv += g;
        };
    }
    return out;
}

Tensor mean_all(const Tensor& a) {
    require(a.numel() > 0, "mean_all: empty tensor");
    const double n = static_cast<double>(a.numel());
    Tensor out = make_node({1}, {a});
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    out.data()[0] = acc / n;  // exact 1.0 when all entries are 1
    if (out.requires_grad()) {
        Impl ai = a.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [ai, self, n]() {
            ensure_grad(ai.get());
            const double g = self->grad[0] / n;
            for (double& gv : ai->grad) gv += g;
        };
    }
    return out;
}

Tensor row_mean(const Tensor& a) {
    require(a.ndim() == 2, "row_mean: expects a matrix");
    const int rows = a.dim(0), cols = a.dim(1);
    require(cols > 0, "row_mean: empty rows");
    Tensor out = make_node({rows}, {a});
    const auto& ad = a.data();
    auto& od = out.data();
    const double inv = 1.0 / cols;
    for (int r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (int c = 0; c < cols; ++c) acc += ad[static_cast<size_t>(r) * cols + c];
        od[r] = acc * inv;
    }
    if (out.requires_grad()) {
        Impl ai = a.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [ai, self, rows, cols, inv]() {
            ensure_grad(ai.get());
            for (int r = 0; r < rows; ++r) {
                const double g = self->grad[r] * inv;
                for (int c = 0; c < cols; ++c) ai->grad[static_cast<size_t>(r) * cols + c] += g;
            }
        };
    }
    return out;
}

Tensor col_mean(const Tensor& a) {
    require(a.ndim() == 2, "col_mean: expects a matrix");
    const int rows = a.dim(0), cols = a.dim(1);
    require(rows > 0, "col_mean: empty columns");
    Tensor out = make_node({cols}, {a});
    const auto& ad = a.data();
    auto& od = out.data();
    const double inv = 1.0 / rows;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) od[c] += ad[static_cast<size_t>(r) * cols + c];
    for (int c = 0; c < cols; ++c) od[c] *= inv;
    if (out.requires_grad()) {
        Impl ai = a.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [ai, self, rows, cols, inv]() {
            ensure_grad(ai.get());
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                    ai->grad[static_cast<size_t>(r) * cols + c] += self->grad[c] * inv;
        };
    }
    return out;
}

Tensor expand_cols(const Tensor& v, int cols) {
    require(v.ndim() == 1, "expand_cols: expects a vector");
    const int rows = v.dim(0);
    Tensor out = make_node({rows, cols}, {v});
    const auto& vd = v.data();
    auto& od = out.data();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) od[static_cast<size_t>(r) * cols + c] = vd[r];
    if (out.requires_grad()) {
        Impl vi = v.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [vi, self, rows, cols]() {
            ensure_grad(vi.get());
            for (int r = 0; r < rows; ++r) {
                double acc = 0.0;
                for (int c = 0; c < cols; ++c) acc += self->grad[static_cast<size_t>(r) * cols + c];
                vi->grad[r] += acc;
            }
        };
    }
    return out;
}

Tensor expand_rows(const Tensor& v, int rows) {
    require(v.ndim() == 1, "expand_rows: expects a vector");
    const int cols = v.dim(0);
    Tensor out = make_node({rows, cols}, {v});
    const auto& vd = v.data();
    auto& od = out.data();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) od[static_cast<size_t>(r) * cols + c] = vd[c];
    if (out.requires_grad()) {
        Impl vi = v.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [vi, self, rows, cols]() {
            ensure_grad(vi.get());
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                    vi->grad[c] += self->grad[static_cast<size_t>(r) * cols + c];
        };
    }
    return out;
}

// ------------------------------------------------------------ linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.ndim() == 2 && b.ndim() == 2, "matmul: expects matrices");
    require(a.dim(1) == b.dim(0), "matmul: inner dimensions differ");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = make_node({m, n}, {a, b});
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    double* od = out.data().data();
    for (int i = 0; i < m; ++i) {
        const double* arow = ad + static_cast<size_t>(i) * k;
        double* orow = od + static_cast<size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = bd + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    if (out.requires_grad()) {
        Impl ai = a.impl(), bi = b.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [ai, bi, self, m, k, n]() {
            const double* g = self->grad.data();
            if (ai->requires_grad) {
                ensure_grad(ai.get());
                // dA = G * B^T
                for (int i = 0; i < m; ++i)
                    for (int kk = 0; kk < k; ++kk) {
                        double acc = 0.0;
                        const double* grow = g + static_cast<size_t>(i) * n;
                        const double* brow = bi->data.data() + static_cast<size_t>(kk) * n;
                        for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        ai->grad[static_cast<size_t>(i) * k + kk] += acc;
                    }
            }
            if (bi->requires_grad) {
                ensure_grad(bi.get());
                // dB = A^T * G
                for (int kk = 0; kk < k; ++kk)
                    for (int i = 0; i < m; ++i) {
                        const double av = ai->data[static_cast<size_t>(i) * k + kk];
                        if (av == 0.0) continue;
                        const double* grow = g + static_cast<size_t>(i) * n;
                        double* brow = bi->grad.data() + static_cast<size_t>(kk) * n;
                        for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
                    }
            }
        };
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    require(a.ndim() == 2, "transpose: expects a matrix");
    const int m = a.dim(0), n = a.dim(1);
    Tensor out = make_node({n, m}, {a});
    const auto& ad = a.data();
    auto& od = out.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            od[static_cast<size_t>(j) * m + i] = ad[static_cast<size_t>(i) * n + j];
    if (out.requires_grad()) {
        Impl ai = a.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [ai, self, m, n]() {
            ensure_grad(ai.get());
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    ai->grad[static_cast<size_t>(i) * n + j] +=
                        self->grad[static_cast<size_t>(j) * m + i];
        };
    }
    return out;
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
    require(shape_numel(shape) == a.numel(), "reshape: element count mismatch");
    Tensor out = make_node(shape, {a});
    out.data() = a.data();
    if (out.requires_grad()) {
        Impl ai = a.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [ai, self]() {
            ensure_grad(ai.get());
            for (size_t i = 0; i < self->grad.size(); ++i) ai->grad[i] += self->grad[i];
        };
    }
    return out;
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
    require(a.ndim() == 2, "slice_cols: expects a matrix");
    require(0 <= c0 && c0 < c1 && c1 <= a.dim(1), "slice_cols: bad range");
    const int rows = a.dim(0), cols = a.dim(1), w = c1 - c0;
    Tensor out = make_node({rows, w}, {a});
    const auto& ad = a.data();
    auto& od = out.data();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < w; ++c)
            od[static_cast<size_t>(r) * w + c] = ad[static_cast<size_t>(r) * cols + c0 + c];
    if (out.requires_grad()) {
        Impl ai = a.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [ai, self, rows, cols, c0, w]() {
            ensure_grad(ai.get());
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < w; ++c)
                    ai->grad[static_cast<size_t>(r) * cols + c0 + c] +=
                        self->grad[static_cast<size_t>(r) * w + c];
        };
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_cols: empty list");
    const int rows = parts[0].dim(0);
    int cols = 0;
    for (const Tensor& p : parts) {
        require(p.ndim() == 2 && p.dim(0) == rows, "concat_cols: row mismatch");
        cols += p.dim(1);
    }
    Tensor out = make_node({rows, cols}, parts);
    auto& od = out.data();
    int off = 0;
    for (const Tensor& p : parts) {
        const int w = p.dim(1);
        const auto& pd = p.data();
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < w; ++c)
                od[static_cast<size_t>(r) * cols + off + c] = pd[static_cast<size_t>(r) * w + c];
        off += w;
    }
    if (out.requires_grad()) {
        std::vector<Impl> impls;
        std::vector<int> widths;
        for (const Tensor& p : parts) {
            impls.push_back(p.impl());
            widths.push_back(p.dim(1));
        }
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [impls, widths, self, rows, cols]() {
            int off = 0;
            for (size_t pi = 0; pi < impls.size(); ++pi) {
                const int w = widths[pi];
                if (impls[pi]->requires_grad) {
                    ensure_grad(impls[pi].get());
                    for (int r = 0; r < rows; ++r)
                        for (int c = 0; c < w; ++c)
                            impls[pi]->grad[static_cast<size_t>(r) * w + c] +=
                                self->grad[static_cast<size_t>(r) * cols + off + c];
                }
                off += w;
            }
        };
    }
    return out;
}

namespace {

int64_t trailing_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (size_t i = 1; i < shape.size(); ++i) n *= shape[i];
    return n;
}

}  // namespace

Tensor slice0(const Tensor& a, int i0, int i1) {
    require(a.ndim() >= 1, "slice0: scalar input");
    require(0 <= i0 && i0 < i1 && i1 <= a.dim(0), "slice0: bad range");
    std::vector<int> shape = a.shape();
    shape[0] = i1 - i0;
    const int64_t block = trailing_numel(a.shape());
    Tensor out = make_node(shape, {a});
    std::copy(a.data().begin() + i0 * block, a.data().begin() + i1 * block, out.data().begin());
    if (out.requires_grad()) {
        Impl ai = a.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [ai, self, i0, block]() {
            ensure_grad(ai.get());
            for (size_t i = 0; i < self->grad.size(); ++i)
                ai->grad[static_cast<size_t>(i0 * block) + i] += self->grad[i];
        };
    }
    return out;
}

Tensor concat0(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat0: empty list");
    std::vector<int> shape = parts[0].shape();
    const int64_t block = trailing_numel(shape);
    int d0 = 0;
    for (const Tensor& p : parts) {
        require(p.ndim() == static_cast<int>(shape.size()), "concat0: rank mismatch");
        require(trailing_numel(p.shape()) == block, "concat0: trailing shape mismatch");
        d0 += p.dim(0);
    }
    shape[0] = d0;
    Tensor out = make_node(shape, parts);
    auto& od = out.data();
    size_t off = 0;
    for (const Tensor& p : parts) {
        std::copy(p.data().begin(), p.data().end(), od.begin() + off);
        off += p.data().size();
    }
    if (out.requires_grad()) {
        std::vector<Impl> impls;
        for (const Tensor& p : parts) impls.push_back(p.impl());
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [impls, self]() {
            size_t off = 0;
            for (const Impl& pi : impls) {
                if (pi->requires_grad) {
                    ensure_grad(pi.get());
                    for (size_t i = 0; i < pi->data.size(); ++i) pi->grad[i] += self->grad[off + i];
                }
                off += pi->data.size();
            }
        };
    }
    return out;
}

Tensor softmax_rows(const Tensor& a) {
    require(a.ndim() == 2, "softmax_rows: expects a matrix");
    const int rows = a.dim(0), cols = a.dim(1);
    Tensor out = make_node({rows, cols}, {a});
    const auto& ad = a.data();
    auto& od = out.data();
    for (int r = 0; r < rows; ++r) {
        const size_t base = static_cast<size_t>(r) * cols;
        double mx = ad[base];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, ad[base + c]);
        double s = 0.0;
        for (int c = 0; c < cols; ++c) {
            od[base + c] = std::exp(ad[base + c] - mx);
            s += od[base + c];
        }
        const double inv = 1.0 / s;
        for (int c = 0; c < cols; ++c) od[base + c] *= inv;
    }
    if (out.requires_grad()) {
        Impl ai = a.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [ai, self, rows, cols]() {
            ensure_grad(ai.get());
            for (int r = 0; r < rows; ++r) {
                const size_t base = static_cast<size_t>(r) * cols;
                double dot = 0.0;
                for (int c = 0; c < cols; ++c) dot += self->grad[base + c] * self->data[base + c];
                for (int c = 0; c < cols; ++c)
                    ai->grad[base + c] += self->data[base + c] * (self->grad[base + c] - dot);
            }
        };
    }
    return out;
}

Tensor layer_norm_rows(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps) {
    require(a.ndim() == 2, "layer_norm_rows: expects a matrix");
    const int rows = a.dim(0), cols = a.dim(1);
    require(gamma.ndim() == 1 && gamma.dim(0) == cols, "layer_norm_rows: gamma size");
    require(beta.ndim() == 1 && beta.dim(0) == cols, "layer_norm_rows: beta size");
    Tensor out = make_node({rows, cols}, {a, gamma, beta});
    const auto& ad = a.data();
    const auto& gd = gamma.data();
    const auto& bd = beta.data();
    auto& od = out.data();
    auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(rows) * cols);
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    for (int r = 0; r < rows; ++r) {
        const size_t base = static_cast<size_t>(r) * cols;
        double mu = 0.0;
        for (int c = 0; c < cols; ++c) mu += ad[base + c];
        mu /= cols;
        double var = 0.0;
        for (int c = 0; c < cols; ++c) {
            const double d = ad[base + c] - mu;
            var += d * d;
        }
        var /= cols;
        const double istd = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = istd;
        for (int c = 0; c < cols; ++c) {
            const double xh = (ad[base + c] - mu) * istd;
            (*xhat)[base + c] = xh;
            od[base + c] = gd[c] * xh + bd[c];
        }
    }
    if (out.requires_grad()) {
        Impl ai = a.impl(), gi = gamma.impl(), bi = beta.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [ai, gi, bi, self, xhat, inv_std, rows, cols]() {
            if (bi->requires_grad) {
                ensure_grad(bi.get());
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c)
                        bi->grad[c] += self->grad[static_cast<size_t>(r) * cols + c];
            }
            if (gi->requires_grad) {
                ensure_grad(gi.get());
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c)
                        gi->grad[c] += self->grad[static_cast<size_t>(r) * cols + c] *
                                       (*xhat)[static_cast<size_t>(r) * cols + c];
            }
            if (ai->requires_grad) {
                ensure_grad(ai.get());
                for (int r = 0; r < rows; ++r) {
                    const size_t base = static_cast<size_t>(r) * cols;
                    double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                    for (int c = 0; c < cols; ++c) {
                        const double dxh = self->grad[base + c] * gi->data[c];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * (*xhat)[base + c];
                    }
                    mean_dxh /= cols;
                    mean_dxh_xh /= cols;
                    for (int c = 0; c < cols; ++c) {
                        const double dxh = self->grad[base + c] * gi->data[c];
                        ai->grad[base + c] +=
                            (*inv_std)[r] * (dxh - mean_dxh - (*xhat)[base + c] * mean_dxh_xh);
                    }
                }
            }
        };
    }
    return out;
}

// ------------------------------------------------------------------- padding

Tensor pad1d(const Tensor& x, int left, int right, PadMode mode) {
    require(x.ndim() == 2, "pad1d: expects [C,T]");
    require(left >= 0 && right >= 0, "pad1d: negative padding");
    const int C = x.dim(0), T = x.dim(1);
    require(T >= 1, "pad1d: empty input");
    const int To = T + left + right;
    Tensor out = make_node({C, To}, {x});
    const auto& xd = x.data();
    auto& od = out.data();
    // source index per output column; -1 marks a zero pad
    std::vector<int> src(To);
    for (int t = 0; t < To; ++t) {
        const int64_t p = static_cast<int64_t>(t) - left;
        if (p >= 0 && p < T)
            src[t] = static_cast<int>(p);
        else
            src[t] = mode == PadMode::reflect ? reflect_index(p, T) : -1;
    }
    for (int c = 0; c < C; ++c) {
        const size_t xb = static_cast<size_t>(c) * T;
        const size_t ob = static_cast<size_t>(c) * To;
        for (int t = 0; t < To; ++t) od[ob + t] = src[t] >= 0 ? xd[xb + src[t]] : 0.0;
    }
    if (out.requires_grad()) {
        Impl xi = x.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [xi, self, src, C, T, To]() {
            ensure_grad(xi.get());
            for (int c = 0; c < C; ++c) {
                const size_t xb = static_cast<size_t>(c) * T;
                const size_t ob = static_cast<size_t>(c) * To;
                for (int t = 0; t < To; ++t)
                    if (src[t] >= 0) xi->grad[xb + src[t]] += self->grad[ob + t];
            }
        };
    }
    return out;
}

Tensor crop1d(const Tensor& x, int left, int right) {
    require(x.ndim() == 2, "crop1d: expects [C,T]");
    const int C = x.dim(0), T = x.dim(1);
    require(left >= 0 && right >= 0 && left + right < T, "crop1d: bad crop");
    const int To = T - left - right;
    Tensor out = make_node({C, To}, {x});
    const auto& xd = x.data();
    auto& od = out.data();
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < To; ++t)
            od[static_cast<size_t>(c) * To + t] = xd[static_cast<size_t>(c) * T + left + t];
    if (out.requires_grad()) {
        Impl xi = x.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [xi, self, C, T, To, left]() {
            ensure_grad(xi.get());
            for (int c = 0; c < C; ++c)
                for (int t = 0; t < To; ++t)
                    xi->grad[static_cast<size_t>(c) * T + left + t] +=
                        self->grad[static_cast<size_t>(c) * To + t];
        };
    }
    return out;
}

Tensor pad2d(const Tensor& x, int pad_h, int pad_w) {
    require(x.ndim() == 3, "pad2d: expects [C,H,W]");
    require(pad_h >= 0 && pad_w >= 0, "pad2d: negative padding");
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int Ho = H + 2 * pad_h, Wo = W + 2 * pad_w;
    Tensor out = make_node({C, Ho, Wo}, {x});
    const auto& xd = x.data();
    auto& od = out.data();
    for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h) {
            const size_t xb = (static_cast<size_t>(c) * H + h) * W;
            const size_t ob = (static_cast<size_t>(c) * Ho + h + pad_h) * Wo + pad_w;
            for (int w = 0; w < W; ++w) od[ob + w] = xd[xb + w];
        }
    if (out.requires_grad()) {
        Impl xi = x.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [xi, self, C, H, W, Ho, Wo, pad_h, pad_w]() {
            ensure_grad(xi.get());
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < H; ++h) {
                    const size_t xb = (static_cast<size_t>(c) * H + h) * W;
                    const size_t ob = (static_cast<size_t>(c) * Ho + h + pad_h) * Wo + pad_w;
                    for (int w = 0; w < W; ++w) xi->grad[xb + w] += self->grad[ob + w];
                }
        };
    }
    return out;
}

// --------------------------------------------------------------------- convs

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int dilation) {
    require(x.ndim() == 2 && w.ndim() == 3, "conv1d: bad ranks");
    const int Cin = x.dim(0), T = x.dim(1);
    const int Cout = w.dim(0), K = w.dim(2);
    require(w.dim(1) == Cin, "conv1d: channel mismatch");
    require(stride >= 1 && dilation >= 1, "conv1d: bad stride/dilation");
    const int span = dilation * (K - 1) + 1;
    require(T >= span, "conv1d: input shorter than kernel span");
    const int To = (T - span) / stride + 1;
    const bool has_bias = b.defined();
    if (has_bias) require(b.ndim() == 1 && b.dim(0) == Cout, "conv1d: bias size");

    Tensor out = make_node({Cout, To}, has_bias ? std::vector<Tensor>{x, w, b}
                                                : std::vector<Tensor>{x, w});
    const double* xd = x.data().data();
    const double* wd = w.data().data();
    double* od = out.data().data();
    if (has_bias) {
        const auto& bd = b.data();
        for (int co = 0; co < Cout; ++co)
            for (int t = 0; t < To; ++t) od[static_cast<size_t>(co) * To + t] = bd[co];
    }
    for (int co = 0; co < Cout; ++co) {
        double* orow = od + static_cast<size_t>(co) * To;
        for (int ci = 0; ci < Cin; ++ci) {
            const double* xrow = xd + static_cast<size_t>(ci) * T;
            const double* wrow = wd + (static_cast<size_t>(co) * Cin + ci) * K;
            for (int k = 0; k < K; ++k) {
                const double wv = wrow[k];
                if (wv == 0.0) continue;
                const int off = k * dilation;
                for (int t = 0; t < To; ++t) orow[t] += wv * xrow[t * stride + off];
            }
        }
    }
    if (out.requires_grad()) {
        Impl xi = x.impl(), wi = w.impl();
        Impl bi = has_bias ? b.impl() : nullptr;
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [xi, wi, bi, self, Cin, T, Cout, K, To, stride, dilation]() {
            const double* g = self->grad.data();
            if (bi && bi->requires_grad) {
                ensure_grad(bi.get());
                for (int co = 0; co < Cout; ++co) {
                    double acc = 0.0;
                    for (int t = 0; t < To; ++t) acc += g[static_cast<size_t>(co) * To + t];
                    bi->grad[co] += acc;
                }
            }
            if (wi->requires_grad) {
                ensure_grad(wi.get());
                for (int co = 0; co < Cout; ++co) {
                    const double* grow = g + static_cast<size_t>(co) * To;
                    for (int ci = 0; ci < Cin; ++ci) {
                        const double* xrow = xi->data.data() + static_cast<size_t>(ci) * T;
                        double* wrow = wi->grad.data() + (static_cast<size_t>(co) * Cin + ci) * K;
                        for (int k = 0; k < K; ++k) {
                            const int off = k * dilation;
                            double acc = 0.0;
                            for (int t = 0; t < To; ++t) acc += grow[t] * xrow[t * stride + off];
                            wrow[k] += acc;
                        }
                    }
                }
            }
            if (xi->requires_grad) {
                ensure_grad(xi.get());
                for (int co = 0; co < Cout; ++co) {
                    const double* grow = g + static_cast<size_t>(co) * To;
                    for (int ci = 0; ci < Cin; ++ci) {
                        double* xrow = xi->grad.data() + static_cast<size_t>(ci) * T;
                        const double* wrow =
                            wi->data.data() + (static_cast<size_t>(co) * Cin + ci) * K;
                        for (int k = 0; k < K; ++k) {
                            const double wv = wrow[k];
                            if (wv == 0.0) continue;
                            const int off = k * dilation;
                            for (int t = 0; t < To; ++t) xrow[t * stride + off] += wv * grow[t];
                        }
                    }
                }
            }
        };
    }
    return out;
}

Tensor conv_transpose1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
    require(x.ndim() == 2 && w.ndim() == 3, "conv_transpose1d: bad ranks");
    const int Cin = x.dim(0), T = x.dim(1);
    require(w.dim(0) == Cin, "conv_transpose1d: channel mismatch");
    const int Cout = w.dim(1), K = w.dim(2);
    require(stride >= 1 && T >= 1, "conv_transpose1d: bad stride/input");
    const int To = (T - 1) * stride + K;
    const bool has_bias = b.defined();
    if (has_bias) require(b.ndim() == 1 && b.dim(0) == Cout, "conv_transpose1d: bias size");

    Tensor out = make_node({Cout, To}, has_bias ? std::vector<Tensor>{x, w, b}
                                                : std::vector<Tensor>{x, w});
    const double* xd = x.data().data();
    const double* wd = w.data().data();
    double* od = out.data().data();
    if (has_bias) {
        const auto& bd = b.data();
        for (int co = 0; co < Cout; ++co)
            for (int t = 0; t < To; ++t) od[static_cast<size_t>(co) * To + t] = bd[co];
    }
    for (int ci = 0; ci < Cin; ++ci) {
        const double* xrow = xd + static_cast<size_t>(ci) * T;
        for (int co = 0; co < Cout; ++co) {
            double* orow = od + static_cast<size_t>(co) * To;
            const double* wrow = wd + (static_cast<size_t>(ci) * Cout + co) * K;
            for (int t = 0; t < T; ++t) {
                const double xv = xrow[t];
                if (xv == 0.0) continue;
                const int base = t * stride;
                for (int k = 0; k < K; ++k) orow[base + k] += xv * wrow[k];
            }
        }
    }
    if (out.requires_grad()) {
        Impl xi = x.impl(), wi = w.impl();
        Impl bi = has_bias ? b.impl() : nullptr;
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [xi, wi, bi, self, Cin, T, Cout, K, To, stride]() {
            const double* g = self->grad.data();
            if (bi && bi->requires_grad) {
                ensure_grad(bi.get());
                for (int co = 0; co < Cout; ++co) {
                    double acc = 0.0;
                    for (int t = 0; t < To; ++t) acc += g[static_cast<size_t>(co) * To + t];
                    bi->grad[co] += acc;
                }
            }
            if (wi->requires_grad) {
                ensure_grad(wi.get());
                for (int ci = 0; ci < Cin; ++ci)
                    for (int co = 0; co < Cout; ++co) {
                        const double* grow = g + static_cast<size_t>(co) * To;
                        double* wrow = wi->grad.data() + (static_cast<size_t>(ci) * Cout + co) * K;
                        for (int t = 0; t < T; ++t) {
                            const double xv = xi->data[static_cast<size_t>(ci) * T + t];
                            if (xv == 0.0) continue;
                            const int base = t * stride;
                            for (int k = 0; k < K; ++k) wrow[k] += xv * grow[base + k];
                        }
                    }
            }
            if (xi->requires_grad) {
                ensure_grad(xi.get());
                for (int ci = 0; ci < Cin; ++ci) {
                    double* xrow = xi->grad.data() + static_cast<size_t>(ci) * T;
                    for (int co = 0; co < Cout; ++co) {
                        const double* grow = g + static_cast<size_t>(co) * To;
                        const double* wrow =
                            wi->data.data() + (static_cast<size_t>(ci) * Cout + co) * K;
                        for (int t = 0; t < T; ++t) {
                            const int base = t * stride;
                            double acc = 0.0;
                            for (int k = 0; k < K; ++k) acc += wrow[k] * grow[base + k];
                            xrow[t] += acc;
                        }
                    }
                }
            }
        };
    }
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride_h, int stride_w) {
    require(x.ndim() == 3 && w.ndim() == 4, "conv2d: bad ranks");
    const int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int Cout = w.dim(0), KH = w.dim(2), KW = w.dim(3);
    require(w.dim(1) == Cin, "conv2d: channel mismatch");
    require(stride_h >= 1 && stride_w >= 1, "conv2d: bad stride");
    require(H >= KH && W >= KW, "conv2d: input smaller than kernel");
    const int Ho = (H - KH) / stride_h + 1;
    const int Wo = (W - KW) / stride_w + 1;
    const bool has_bias = b.defined();
    if (has_bias) require(b.ndim() == 1 && b.dim(0) == Cout, "conv2d: bias size");

    Tensor out = make_node({Cout, Ho, Wo}, has_bias ? std::vector<Tensor>{x, w, b}
                                                    : std::vector<Tensor>{x, w});
    const double* xd = x.data().data();
    const double* wd = w.data().data();
    double* od = out.data().data();
    if (has_bias) {
        const auto& bd = b.data();
        for (int co = 0; co < Cout; ++co) {
            double* oc = od + static_cast<size_t>(co) * Ho * Wo;
            for (int i = 0; i < Ho * Wo; ++i) oc[i] = bd[co];
        }
    }
    for (int co = 0; co < Cout; ++co) {
        double* oc = od + static_cast<size_t>(co) * Ho * Wo;
        for (int ci = 0; ci < Cin; ++ci) {
            const double* xc = xd + static_cast<size_t>(ci) * H * W;
            const double* wc = wd + (static_cast<size_t>(co) * Cin + ci) * KH * KW;
            for (int kh = 0; kh < KH; ++kh)
                for (int kw = 0; kw < KW; ++kw) {
                    const double wv = wc[kh * KW + kw];
                    if (wv == 0.0) continue;
                    for (int oh = 0; oh < Ho; ++oh) {
                        const double* xrow = xc + static_cast<size_t>(oh * stride_h + kh) * W + kw;
                        double* orow = oc + static_cast<size_t>(oh) * Wo;
                        for (int ow = 0; ow < Wo; ++ow) orow[ow] += wv * xrow[ow * stride_w];
                    }
                }
        }
    }
    if (out.requires_grad()) {
        Impl xi = x.impl(), wi = w.impl();
        Impl bi = has_bias ? b.impl() : nullptr;
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [xi, wi, bi, self, Cin, H, W, Cout, KH, KW, Ho, Wo, stride_h,
                                   stride_w]() {
            const double* g = self->grad.data();
            if (bi && bi->requires_grad) {
                ensure_grad(bi.get());
                for (int co = 0; co < Cout; ++co) {
                    double acc = 0.0;
                    const double* gc = g + static_cast<size_t>(co) * Ho * Wo;
                    for (int i = 0; i < Ho * Wo; ++i) acc += gc[i];
                    bi->grad[co] += acc;
                }
            }
            if (wi->requires_grad) {
                ensure_grad(wi.get());
                for (int co = 0; co < Cout; ++co) {
                    const double* gc = g + static_cast<size_t>(co) * Ho * Wo;
                    for (int ci = 0; ci < Cin; ++ci) {
                        const double* xc = xi->data.data() + static_cast<size_t>(ci) * H * W;
                        double* wc =
                            wi->grad.data() + (static_cast<size_t>(co) * Cin + ci) * KH * KW;
                        for (int kh = 0; kh < KH; ++kh)
                            for (int kw = 0; kw < KW; ++kw) {
                                double acc = 0.0;
                                for (int oh = 0; oh < Ho; ++oh) {
                                    const double* xrow =
                                        xc + static_cast<size_t>(oh * stride_h + kh) * W + kw;
                                    const double* grow = gc + static_cast<size_t>(oh) * Wo;
                                    for (int ow = 0; ow < Wo; ++ow)
                                        acc += grow[ow] * xrow[ow * stride_w];
                                }
                                wc[kh * KW + kw] += acc;
                            }
                    }
                }
            }
            if (xi->requires_grad) {
                ensure_grad(xi.get());
                for (int co = 0; co < Cout; ++co) {
                    const double* gc = g + static_cast<size_t>(co) * Ho * Wo;
                    for (int ci = 0; ci < Cin; ++ci) {
                        double* xc = xi->grad.data() + static_cast<size_t>(ci) * H * W;
                        const double* wc =
                            wi->data.data() + (static_cast<size_t>(co) * Cin + ci) * KH * KW;
                        for (int kh = 0; kh < KH; ++kh)
                            for (int kw = 0; kw < KW; ++kw) {
                                const double wv = wc[kh * KW + kw];
                                if (wv == 0.0) continue;
                                for (int oh = 0; oh < Ho; ++oh) {
                                    double* xrow =
                                        xc + static_cast<size_t>(oh * stride_h + kh) * W + kw;
                                    const double* grow = gc + static_cast<size_t>(oh) * Wo;
                                    for (int ow = 0; ow < Wo; ++ow)
                                        xrow[ow * stride_w] += wv * grow[ow];
                                }
                            }
                    }
                }
            }
        };
    }
    return out;
}

// ------------------------------------------------------------------ spectral

Tensor frame_signal(const Tensor& x, int frame_len, int hop, bool center) {
    require(x.ndim() == 1, "frame_signal: expects a 1-D signal");
    require(frame_len >= 1 && hop >= 1, "frame_signal: bad framing");
    const int L = x.dim(0);
    require(L >= 1, "frame_signal: empty signal");
    int F;
    int offset;
    if (center) {
        F = 1 + L / hop;
        offset = -frame_len / 2;
    } else {
        require(L >= frame_len, "frame_signal: signal shorter than frame");
        F = 1 + (L - frame_len) / hop;
        offset = 0;
    }
    Tensor out = make_node({F, frame_len}, {x});
    const auto& xd = x.data();
    auto& od = out.data();
    // center mode folds out-of-range indices by reflection
    auto src_index = [&](int f, int j) -> int {
        const int64_t p = static_cast<int64_t>(f) * hop + j + offset;
        if (p >= 0 && p < L) return static_cast<int>(p);
        return center ? reflect_index(p, L) : -1;
    };
    for (int f = 0; f < F; ++f)
        for (int j = 0; j < frame_len; ++j) {
            const int s = src_index(f, j);
            od[static_cast<size_t>(f) * frame_len + j] = s >= 0 ? xd[s] : 0.0;
        }
    if (out.requires_grad()) {
        Impl xi = x.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [xi, self, F, frame_len, hop, offset, center, L]() {
            ensure_grad(xi.get());
            for (int f = 0; f < F; ++f)
                for (int j = 0; j < frame_len; ++j) {
                    const int64_t p = static_cast<int64_t>(f) * hop + j + offset;
                    int s;
                    if (p >= 0 && p < L)
                        s = static_cast<int>(p);
                    else if (center)
                        s = reflect_index(p, L);
                    else
                        continue;
                    xi->grad[s] += self->grad[static_cast<size_t>(f) * frame_len + j];
                }
        };
    }
    return out;
}

Tensor rdft_rows(const Tensor& frames) {
    require(frames.ndim() == 2, "rdft_rows: expects [F,N]");
    const int F = frames.dim(0), N = frames.dim(1);
    const int B = N / 2 + 1;
    Tensor out = make_node({F, 2 * B}, {frames});
    const auto& fd = frames.data();
    auto& od = out.data();
    std::vector<std::complex<double>> buf(N);
    for (int f = 0; f < F; ++f) {
        const size_t base = static_cast<size_t>(f) * N;
        for (int n = 0; n < N; ++n) buf[n] = std::complex<double>(fd[base + n], 0.0);
        dsp::fft(buf, false);
        const size_t ob = static_cast<size_t>(f) * 2 * B;
        for (int k = 0; k < B; ++k) {
            od[ob + k] = buf[k].real();
            od[ob + B + k] = buf[k].imag();
        }
        buf.resize(N);
    }
    if (out.requires_grad()) {
        Impl fi = frames.impl();
        TensorImpl* self = out.impl().get();
        out.impl()->backward_fn = [fi, self, F, N, B]() {
            ensure_grad(fi.get());
            std::vector<std::complex<double>> g(N);
            for (int f = 0; f < F; ++f) {
                const size_t gb = static_cast<size_t>(f) * 2 * B;
                // adjoint of the one-sided DFT: real part of the inverse
                // transform of the conjugated gradient spectrum
                std::fill(g.begin(), g.end(), std::complex<double>(0.0, 0.0));
                for (int k = 0; k < B; ++k)
                    g[k] = std::complex<double>(self->grad[gb + k], -self->grad[gb + B + k]);
                dsp::fft(g, false);
                const size_t fb = static_cast<size_t>(f) * N;
                for (int n = 0; n < N; ++n) fi->grad[fb + n] += g[n].real();
                g.resize(N);
            }
        };
    }
    return out;
}

Tensor stopgrad(const Tensor& a) {
    return Tensor::from(a.data(), a.shape(), false);
}

}  // namespace promptcodec::nn
