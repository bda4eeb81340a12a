#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "cids/errors.hpp"
#include "cids/rng.hpp"

namespace cids::nn {

// ---------------------------------------------------------------------------
// Buffer recycling. A training step rebuilds the whole graph, so without a
// pool every large tensor buffer round-trips through mmap/munmap and the
// kernel re-zeroes the pages each step. Buffers here are handed back on node
// destruction and reused best-fit.

namespace detail {

class BufferPool {
public:
    static BufferPool& instance() {
        thread_local BufferPool pool;
        return pool;
    }

    std::vector<double> acquire(size_t n) {
        size_t best = free_.size();
        for (size_t i = 0; i < free_.size(); ++i) {
            if (free_[i].capacity() >= n &&
                (best == free_.size() || free_[i].capacity() < free_[best].capacity()))
                best = i;
        }
        if (best == free_.size()) return std::vector<double>(n, 0.0);
        std::vector<double> v = std::move(free_[best]);
        free_.erase(free_.begin() + static_cast<ptrdiff_t>(best));
        bytes_ -= v.capacity() * sizeof(double);
        v.assign(n, 0.0);
        return v;
    }

    void release(std::vector<double>&& v) {
        const size_t bytes = v.capacity() * sizeof(double);
        if (bytes < (1u << 16)) return; // small blocks: plain malloc reuse is fine
        if (free_.size() >= 64 || bytes_ + bytes > (512u << 20)) return;
        bytes_ += bytes;
        free_.push_back(std::move(v));
    }

private:
    std::vector<std::vector<double>> free_;
    size_t bytes_ = 0;
};

} // namespace detail

// ---------------------------------------------------------------------------
// Graph node. Values are 64-bit floats throughout; every forward op checks
// its output for NaN/Inf and raises a NumericError naming the op.

struct Node {
    std::vector<size_t> shape;
    std::vector<double> value;
    std::vector<double> grad; // allocated only when requires_grad
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn; // accumulates into parent grads
    bool requires_grad = false;
    const char* op = "leaf";

    ~Node() {
        detail::BufferPool::instance().release(std::move(value));
        detail::BufferPool::instance().release(std::move(grad));
    }

    size_t size() const { return value.size(); }

    void reset_grad() {
        if (grad.size() == value.size())
            std::fill(grad.begin(), grad.end(), 0.0);
        else
            grad = detail::BufferPool::instance().acquire(value.size());
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor leaf(std::vector<size_t> shape, std::vector<double> value, bool requires_grad = false) {
        auto n = std::make_shared<Node>();
        const size_t expect = std::accumulate(shape.begin(), shape.end(), size_t{1}, std::multiplies<>());
        if (value.size() != expect)
            throw ShapeError("leaf value size " + std::to_string(value.size()) +
                             " does not match shape product " + std::to_string(expect));
        n->shape = std::move(shape);
        n->value = std::move(value);
        n->requires_grad = requires_grad;
        if (requires_grad) n->grad.assign(n->value.size(), 0.0);
        return Tensor(n);
    }

    static Tensor zeros(std::vector<size_t> shape, bool requires_grad = false) {
        const size_t total = std::accumulate(shape.begin(), shape.end(), size_t{1}, std::multiplies<>());
        return leaf(std::move(shape), std::vector<double>(total, 0.0), requires_grad);
    }

    static Tensor scalar(double v) { return leaf({1}, {v}); }

    bool defined() const { return node_ != nullptr; }
    const std::vector<size_t>& shape() const { return node_->shape; }
    size_t size() const { return node_->value.size(); }
    size_t dim(size_t i) const { return node_->shape.at(i); }
    size_t rank() const { return node_->shape.size(); }

    const std::vector<double>& values() const { return node_->value; }
    std::vector<double>& mutable_values() { return node_->value; }
    const std::vector<double>& grads() const { return node_->grad; }
    double item() const {
        if (size() != 1) throw ShapeError("item() on non-scalar tensor");
        return node_->value[0];
    }
    bool requires_grad() const { return node_->requires_grad; }
    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

namespace detail {

inline std::shared_ptr<Node> make_node(std::vector<size_t> shape, std::vector<std::shared_ptr<Node>> parents,
                                       const char* op) {
    auto n = std::make_shared<Node>();
    const size_t total = std::accumulate(shape.begin(), shape.end(), size_t{1}, std::multiplies<>());
    n->shape = std::move(shape);
    n->value = BufferPool::instance().acquire(total);
    n->parents = std::move(parents);
    n->op = op;
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    return n;
}

inline void check_finite(const Node& n) {
    for (double v : n.value)
        if (!std::isfinite(v))
            throw NumericError(std::string("non-finite value produced by op '") + n.op + "'");
}

// C[M,N] += A[M,K] * B[K,N]
inline void mm_accum(const double* a, const double* b, double* c, size_t M, size_t K, size_t N) {
    for (size_t m = 0; m < M; ++m) {
        const double* arow = a + m * K;
        double* crow = c + m * N;
        for (size_t k = 0; k < K; ++k) {
            const double av = arow[k];
            const double* brow = b + k * N;
            for (size_t n = 0; n < N; ++n) crow[n] += av * brow[n];
        }
    }
}

// C[M,K] += A[M,N] * B[K,N]^T
inline void mm_abT_accum(const double* a, const double* b, double* c, size_t M, size_t N, size_t K) {
    for (size_t m = 0; m < M; ++m) {
        const double* arow = a + m * N;
        double* crow = c + m * K;
        for (size_t k = 0; k < K; ++k) {
            const double* brow = b + k * N;
            double s = 0.0;
            for (size_t n = 0; n < N; ++n) s += arow[n] * brow[n];
            crow[k] += s;
        }
    }
}

// C[K,N] += A[M,K]^T * B[M,N]
inline void mm_aTb_accum(const double* a, const double* b, double* c, size_t M, size_t K, size_t N) {
    for (size_t m = 0; m < M; ++m) {
        const double* arow = a + m * K;
        const double* brow = b + m * N;
        for (size_t k = 0; k < K; ++k) {
            const double av = arow[k];
            double* crow = c + k * N;
            for (size_t n = 0; n < N; ++n) crow[n] += av * brow[n];
        }
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Backward pass: topological order from the loss, gradients zeroed first.

inline void backward(const Tensor& loss) {
    if (loss.size() != 1) throw ShapeError("backward() requires a scalar loss");
    if (!loss.requires_grad()) return; // no trainable inputs anywhere
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack{{loss.node().get(), 0}};
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (visited.insert(parent).second) stack.push_back({parent, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* n : order)
        if (n->requires_grad) n->reset_grad();
    loss.node()->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->requires_grad) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------------------
// Elementwise and structural ops

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("add: shape mismatch");
    auto n = detail::make_node(a.shape(), {a.node(), b.node()}, "add");
    for (size_t i = 0; i < n->size(); ++i) n->value[i] = a.values()[i] + b.values()[i];
    detail::check_finite(*n);
    n->backward_fn = [](Node& self) {
        for (size_t i = 0; i < self.size(); ++i) {
            if (self.parents[0]->requires_grad) self.parents[0]->grad[i] += self.grad[i];
            if (self.parents[1]->requires_grad) self.parents[1]->grad[i] += self.grad[i];
        }
    };
    return Tensor(n);
}

inline Tensor scale(const Tensor& a, double c) {
    auto n = detail::make_node(a.shape(), {a.node()}, "scale");
    for (size_t i = 0; i < n->size(); ++i) n->value[i] = a.values()[i] * c;
    detail::check_finite(*n);
    n->backward_fn = [c](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        for (size_t i = 0; i < self.size(); ++i) self.parents[0]->grad[i] += c * self.grad[i];
    };
    return Tensor(n);
}

inline Tensor relu(const Tensor& a) {
    auto n = detail::make_node(a.shape(), {a.node()}, "relu");
    for (size_t i = 0; i < n->size(); ++i) n->value[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
    n->backward_fn = [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        for (size_t i = 0; i < self.size(); ++i)
            if (self.parents[0]->value[i] > 0.0) self.parents[0]->grad[i] += self.grad[i];
    };
    return Tensor(n);
}

inline Tensor sum_all(const Tensor& a) {
    auto n = detail::make_node({1}, {a.node()}, "sum_all");
    double s = 0.0;
    for (double v : a.values()) s += v;
    n->value[0] = s;
    detail::check_finite(*n);
    n->backward_fn = [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        for (auto& g : self.parents[0]->grad) g += self.grad[0];
    };
    return Tensor(n);
}

// x: [..., N] plus row vector b: [N]
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
    const size_t n_cols = x.shape().back();
    if (b.rank() != 1 || b.dim(0) != n_cols) throw ShapeError("add_bias: bias width mismatch");
    auto n = detail::make_node(x.shape(), {x.node(), b.node()}, "add_bias");
    const size_t rows = x.size() / n_cols;
    for (size_t r = 0; r < rows; ++r)
        for (size_t c = 0; c < n_cols; ++c)
            n->value[r * n_cols + c] = x.values()[r * n_cols + c] + b.values()[c];
    detail::check_finite(*n);
    n->backward_fn = [n_cols, rows](Node& self) {
        auto& xp = *self.parents[0];
        auto& bp = *self.parents[1];
        for (size_t r = 0; r < rows; ++r)
            for (size_t c = 0; c < n_cols; ++c) {
                const double g = self.grad[r * n_cols + c];
                if (xp.requires_grad) xp.grad[r * n_cols + c] += g;
                if (bp.requires_grad) bp.grad[c] += g;
            }
    };
    return Tensor(n);
}

inline Tensor reshape(const Tensor& a, std::vector<size_t> shape) {
    const size_t total = std::accumulate(shape.begin(), shape.end(), size_t{1}, std::multiplies<>());
    if (total != a.size()) throw ShapeError("reshape: element count mismatch");
    auto n = detail::make_node(std::move(shape), {a.node()}, "reshape");
    n->value = a.values();
    n->backward_fn = [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        for (size_t i = 0; i < self.size(); ++i) self.parents[0]->grad[i] += self.grad[i];
    };
    return Tensor(n);
}

// [A,B,C,D] -> [A,C,B,D]; the permutation is its own inverse.
inline Tensor permute_0213(const Tensor& x) {
    if (x.rank() != 4) throw ShapeError("permute_0213: rank-4 tensor required");
    const size_t A = x.dim(0), B = x.dim(1), C = x.dim(2), D = x.dim(3);
    auto n = detail::make_node({A, C, B, D}, {x.node()}, "permute_0213");
    for (size_t a = 0; a < A; ++a)
        for (size_t b = 0; b < B; ++b)
            for (size_t c = 0; c < C; ++c) {
                const double* src = x.values().data() + ((a * B + b) * C + c) * D;
                double* dst = n->value.data() + ((a * C + c) * B + b) * D;
                std::memcpy(dst, src, D * sizeof(double));
            }
    n->backward_fn = [A, B, C, D](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        for (size_t a = 0; a < A; ++a)
            for (size_t c = 0; c < C; ++c)
                for (size_t b = 0; b < B; ++b) {
                    const double* src = self.grad.data() + ((a * C + c) * B + b) * D;
                    double* dst = self.parents[0]->grad.data() + ((a * B + b) * C + c) * D;
                    for (size_t d = 0; d < D; ++d) dst[d] += src[d];
                }
    };
    return Tensor(n);
}

inline Tensor transpose_last2(const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("transpose_last2: rank-3 tensor required");
    const size_t G = x.dim(0), M = x.dim(1), N = x.dim(2);
    auto n = detail::make_node({G, N, M}, {x.node()}, "transpose_last2");
    for (size_t g = 0; g < G; ++g)
        for (size_t m = 0; m < M; ++m)
            for (size_t c = 0; c < N; ++c)
                n->value[(g * N + c) * M + m] = x.values()[(g * M + m) * N + c];
    n->backward_fn = [G, M, N](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        for (size_t g = 0; g < G; ++g)
            for (size_t c = 0; c < N; ++c)
                for (size_t m = 0; m < M; ++m)
                    self.parents[0]->grad[(g * M + m) * N + c] += self.grad[(g * N + c) * M + m];
    };
    return Tensor(n);
}

// ---------------------------------------------------------------------------
// Matrix products

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes");
    const size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
    auto n = detail::make_node({M, N}, {a.node(), b.node()}, "matmul");
    detail::mm_accum(a.values().data(), b.values().data(), n->value.data(), M, K, N);
    detail::check_finite(*n);
    n->backward_fn = [M, K, N](Node& self) {
        auto& ap = *self.parents[0];
        auto& bp = *self.parents[1];
        if (ap.requires_grad)
            detail::mm_abT_accum(self.grad.data(), bp.value.data(), ap.grad.data(), M, N, K);
        if (bp.requires_grad)
            detail::mm_aTb_accum(ap.value.data(), self.grad.data(), bp.grad.data(), M, K, N);
    };
    return Tensor(n);
}

// Batched: [G,M,K] x [G,K,N] -> [G,M,N]
inline Tensor bmm(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
        throw ShapeError("bmm: incompatible shapes");
    const size_t G = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
    auto n = detail::make_node({G, M, N}, {a.node(), b.node()}, "bmm");
    for (size_t g = 0; g < G; ++g)
        detail::mm_accum(a.values().data() + g * M * K, b.values().data() + g * K * N,
                         n->value.data() + g * M * N, M, K, N);
    detail::check_finite(*n);
    n->backward_fn = [G, M, K, N](Node& self) {
        auto& ap = *self.parents[0];
        auto& bp = *self.parents[1];
        for (size_t g = 0; g < G; ++g) {
            if (ap.requires_grad)
                detail::mm_abT_accum(self.grad.data() + g * M * N, bp.value.data() + g * K * N,
                                     ap.grad.data() + g * M * K, M, N, K);
            if (bp.requires_grad)
                detail::mm_aTb_accum(ap.value.data() + g * M * K, self.grad.data() + g * M * N,
                                     bp.grad.data() + g * K * N, M, K, N);
        }
    };
    return Tensor(n);
}

// y = x W + b for x: [B, in]
inline Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add_bias(matmul(x, w), b);
}

// ---------------------------------------------------------------------------
// Normalization and attention

// Per-last-axis standardization (population variance, epsilon inside the
// square root) followed by the affine gain/bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
    const size_t d = x.shape().back();
    if (gain.size() != d || bias.size() != d) throw ShapeError("layer_norm: gain/bias width mismatch");
    const size_t rows = x.size() / d;
    auto n = detail::make_node(x.shape(), {x.node(), gain.node(), bias.node()}, "layer_norm");
    auto xhat = std::make_shared<std::vector<double>>(x.size());
    auto inv_s = std::make_shared<std::vector<double>>(rows);
    for (size_t r = 0; r < rows; ++r) {
        const double* xr = x.values().data() + r * d;
        double mean = 0.0;
        for (size_t i = 0; i < d; ++i) mean += xr[i];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_s)[r] = inv;
        for (size_t i = 0; i < d; ++i) {
            const double xh = (xr[i] - mean) * inv;
            (*xhat)[r * d + i] = xh;
            n->value[r * d + i] = xh * gain.values()[i] + bias.values()[i];
        }
    }
    detail::check_finite(*n);
    n->backward_fn = [d, rows, xhat, inv_s](Node& self) {
        auto& xp = *self.parents[0];
        auto& gp = *self.parents[1];
        auto& bp = *self.parents[2];
        for (size_t r = 0; r < rows; ++r) {
            const double* gy = self.grad.data() + r * d;
            const double* xh = xhat->data() + r * d;
            double sum_dyg = 0.0, sum_dyg_xh = 0.0;
            for (size_t i = 0; i < d; ++i) {
                const double dyg = gy[i] * gp.value[i];
                sum_dyg += dyg;
                sum_dyg_xh += dyg * xh[i];
                if (gp.requires_grad) gp.grad[i] += gy[i] * xh[i];
                if (bp.requires_grad) bp.grad[i] += gy[i];
            }
            if (xp.requires_grad) {
                const double inv = (*inv_s)[r];
                const double dn = static_cast<double>(d);
                for (size_t i = 0; i < d; ++i) {
                    const double dyg = gy[i] * gp.value[i];
                    xp.grad[r * d + i] += inv * (dyg - sum_dyg / dn - xh[i] * sum_dyg_xh / dn);
                }
            }
        }
    };
    return Tensor(n);
}

// Max-subtraction stabilized softmax over the last axis.
inline Tensor softmax(const Tensor& x) {
    const size_t k = x.shape().back();
    const size_t rows = x.size() / k;
    auto n = detail::make_node(x.shape(), {x.node()}, "softmax");
    for (size_t r = 0; r < rows; ++r) {
        const double* xr = x.values().data() + r * k;
        double* yr = n->value.data() + r * k;
        double mx = xr[0];
        for (size_t i = 1; i < k; ++i) mx = std::max(mx, xr[i]);
        double sum = 0.0;
        for (size_t i = 0; i < k; ++i) {
            yr[i] = std::exp(xr[i] - mx);
            sum += yr[i];
        }
        for (size_t i = 0; i < k; ++i) yr[i] /= sum;
    }
    detail::check_finite(*n);
    n->backward_fn = [k, rows](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        for (size_t r = 0; r < rows; ++r) {
            const double* y = self.value.data() + r * k;
            const double* gy = self.grad.data() + r * k;
            double dot = 0.0;
            for (size_t i = 0; i < k; ++i) dot += y[i] * gy[i];
            for (size_t i = 0; i < k; ++i) self.parents[0]->grad[r * k + i] += y[i] * (gy[i] - dot);
        }
    };
    return Tensor(n);
}

// Mean over the batch of -log p[true]; takes probabilities.
inline Tensor cross_entropy(const Tensor& probs, const std::vector<size_t>& labels) {
    if (probs.rank() != 2) throw ShapeError("cross_entropy: [B, K] probabilities required");
    const size_t B = probs.dim(0), K = probs.dim(1);
    if (labels.size() != B) throw ShapeError("cross_entropy: label count mismatch");
    for (size_t b = 0; b < B; ++b)
        if (labels[b] >= K)
            throw InputError("cross_entropy: label " + std::to_string(labels[b]) +
                             " out of range for K=" + std::to_string(K));
    auto n = detail::make_node({1}, {probs.node()}, "cross_entropy");
    double total = 0.0;
    for (size_t b = 0; b < B; ++b) total += -std::log(probs.values()[b * K + labels[b]]);
    n->value[0] = total / static_cast<double>(B);
    detail::check_finite(*n);
    n->backward_fn = [B, K, labels](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        const double g = self.grad[0] / static_cast<double>(B);
        for (size_t b = 0; b < B; ++b) {
            const size_t idx = b * K + labels[b];
            self.parents[0]->grad[idx] += -g / self.parents[0]->value[idx];
        }
    };
    return Tensor(n);
}

// Fused log-sum-exp cross entropy on logits; gradient (p - onehot)/B.
inline Tensor cross_entropy_logits(const Tensor& logits, const std::vector<size_t>& labels) {
    if (logits.rank() != 2) throw ShapeError("cross_entropy_logits: [B, K] logits required");
    const size_t B = logits.dim(0), K = logits.dim(1);
    if (labels.size() != B) throw ShapeError("cross_entropy_logits: label count mismatch");
    for (size_t b = 0; b < B; ++b)
        if (labels[b] >= K)
            throw InputError("cross_entropy_logits: label " + std::to_string(labels[b]) +
                             " out of range for K=" + std::to_string(K));
    auto n = detail::make_node({1}, {logits.node()}, "cross_entropy_logits");
    auto probs = std::make_shared<std::vector<double>>(B * K);
    double total = 0.0;
    for (size_t b = 0; b < B; ++b) {
        const double* xr = logits.values().data() + b * K;
        double mx = xr[0];
        for (size_t i = 1; i < K; ++i) mx = std::max(mx, xr[i]);
        double sum = 0.0;
        for (size_t i = 0; i < K; ++i) sum += std::exp(xr[i] - mx);
        const double lse = mx + std::log(sum);
        total += lse - xr[labels[b]];
        for (size_t i = 0; i < K; ++i) (*probs)[b * K + i] = std::exp(xr[i] - lse);
    }
    n->value[0] = total / static_cast<double>(B);
    detail::check_finite(*n);
    n->backward_fn = [B, K, labels, probs](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        const double g = self.grad[0] / static_cast<double>(B);
        for (size_t b = 0; b < B; ++b)
            for (size_t i = 0; i < K; ++i) {
                const double onehot = labels[b] == i ? 1.0 : 0.0;
                self.parents[0]->grad[b * K + i] += g * ((*probs)[b * K + i] - onehot);
            }
    };
    return Tensor(n);
}

// Attention softmax over the key axis with masked keys excluded from the
// normalization entirely. Rows whose key set is empty produce all-zero
// weights. scores: [B*heads, Tq, Tk]; key_mask: B x Tk flattened.
inline Tensor masked_softmax(const Tensor& scores, const std::vector<uint8_t>& key_mask, size_t heads) {
    if (scores.rank() != 3) throw ShapeError("masked_softmax: rank-3 scores required");
    const size_t G = scores.dim(0), Tq = scores.dim(1), Tk = scores.dim(2);
    if (G % heads != 0) throw ShapeError("masked_softmax: batch not divisible by heads");
    const size_t B = G / heads;
    if (key_mask.size() != B * Tk) throw ShapeError("masked_softmax: key mask size mismatch");
    auto n = detail::make_node(scores.shape(), {scores.node()}, "masked_softmax");
    for (size_t g = 0; g < G; ++g) {
        const uint8_t* mask = key_mask.data() + (g / heads) * Tk;
        for (size_t q = 0; q < Tq; ++q) {
            const double* xr = scores.values().data() + (g * Tq + q) * Tk;
            double* yr = n->value.data() + (g * Tq + q) * Tk;
            double mx = -HUGE_VAL;
            for (size_t i = 0; i < Tk; ++i)
                if (mask[i]) mx = std::max(mx, xr[i]);
            if (mx == -HUGE_VAL) continue; // no valid keys: weights all zero
            double sum = 0.0;
            for (size_t i = 0; i < Tk; ++i) {
                if (mask[i]) {
                    yr[i] = std::exp(xr[i] - mx);
                    sum += yr[i];
                }
            }
            for (size_t i = 0; i < Tk; ++i) yr[i] /= sum;
        }
    }
    detail::check_finite(*n);
    n->backward_fn = [G, Tq, Tk](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        for (size_t row = 0; row < G * Tq; ++row) {
            const double* y = self.value.data() + row * Tk;
            const double* gy = self.grad.data() + row * Tk;
            double dot = 0.0;
            for (size_t i = 0; i < Tk; ++i) dot += y[i] * gy[i];
            for (size_t i = 0; i < Tk; ++i)
                if (y[i] != 0.0) self.parents[0]->grad[row * Tk + i] += y[i] * (gy[i] - dot);
        }
    };
    return Tensor(n);
}

// Zeroes masked rows: x [B,T,d] * mask [B,T].
inline Tensor mul_row_mask(const Tensor& x, const std::vector<uint8_t>& mask) {
    if (x.rank() != 3) throw ShapeError("mul_row_mask: rank-3 tensor required");
    const size_t B = x.dim(0), T = x.dim(1), d = x.dim(2);
    if (mask.size() != B * T) throw ShapeError("mul_row_mask: mask size mismatch");
    auto n = detail::make_node(x.shape(), {x.node()}, "mul_row_mask");
    for (size_t r = 0; r < B * T; ++r)
        if (mask[r])
            std::memcpy(n->value.data() + r * d, x.values().data() + r * d, d * sizeof(double));
    n->backward_fn = [B, T, d, mask](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        for (size_t r = 0; r < B * T; ++r)
            if (mask[r])
                for (size_t i = 0; i < d; ++i)
                    self.parents[0]->grad[r * d + i] += self.grad[r * d + i];
    };
    return Tensor(n);
}

// Adds a constant positional table [T,d] at unmasked positions only, so
// padding rows stay exactly zero.
inline Tensor add_positional(const Tensor& x, const std::vector<double>& pe,
                             const std::vector<uint8_t>& mask) {
    if (x.rank() != 3) throw ShapeError("add_positional: rank-3 tensor required");
    const size_t B = x.dim(0), T = x.dim(1), d = x.dim(2);
    if (pe.size() != T * d) throw ShapeError("add_positional: table size mismatch");
    if (mask.size() != B * T) throw ShapeError("add_positional: mask size mismatch");
    auto n = detail::make_node(x.shape(), {x.node()}, "add_positional");
    n->value = x.values();
    for (size_t b = 0; b < B; ++b)
        for (size_t t = 0; t < T; ++t)
            if (mask[b * T + t])
                for (size_t i = 0; i < d; ++i) n->value[(b * T + t) * d + i] += pe[t * d + i];
    detail::check_finite(*n);
    n->backward_fn = [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        for (size_t i = 0; i < self.size(); ++i) self.parents[0]->grad[i] += self.grad[i];
    };
    return Tensor(n);
}

// Mean over unmasked rows; batches with an all-false mask produce zeros.
inline Tensor masked_mean_pool(const Tensor& x, const std::vector<uint8_t>& mask) {
    if (x.rank() != 3) throw ShapeError("masked_mean_pool: rank-3 tensor required");
    const size_t B = x.dim(0), T = x.dim(1), d = x.dim(2);
    if (mask.size() != B * T) throw ShapeError("masked_mean_pool: mask size mismatch");
    auto n = detail::make_node({B, d}, {x.node()}, "masked_mean_pool");
    for (size_t b = 0; b < B; ++b) {
        size_t count = 0;
        for (size_t t = 0; t < T; ++t) {
            if (!mask[b * T + t]) continue;
            ++count;
            for (size_t i = 0; i < d; ++i) n->value[b * d + i] += x.values()[(b * T + t) * d + i];
        }
        if (count > 0)
            for (size_t i = 0; i < d; ++i) n->value[b * d + i] /= static_cast<double>(count);
    }
    detail::check_finite(*n);
    n->backward_fn = [B, T, d, mask](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        for (size_t b = 0; b < B; ++b) {
            size_t count = 0;
            for (size_t t = 0; t < T; ++t) count += mask[b * T + t] ? 1 : 0;
            if (count == 0) continue;
            const double inv = 1.0 / static_cast<double>(count);
            for (size_t t = 0; t < T; ++t) {
                if (!mask[b * T + t]) continue;
                for (size_t i = 0; i < d; ++i)
                    self.parents[0]->grad[(b * T + t) * d + i] += self.grad[b * d + i] * inv;
            }
        }
    };
    return Tensor(n);
}

// Concatenates [B, d_i] blocks along the feature axis.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const size_t B = parts[0].dim(0);
    size_t total = 0;
    std::vector<std::shared_ptr<Node>> parents;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.dim(0) != B) throw ShapeError("concat_cols: [B, d] blocks required");
        total += p.dim(1);
        parents.push_back(p.node());
    }
    auto n = detail::make_node({B, total}, std::move(parents), "concat_cols");
    size_t offset = 0;
    for (const auto& p : parts) {
        const size_t d = p.dim(1);
        for (size_t b = 0; b < B; ++b)
            std::memcpy(n->value.data() + b * total + offset, p.values().data() + b * d,
                        d * sizeof(double));
        offset += d;
    }
    n->backward_fn = [B, total](Node& self) {
        size_t offset = 0;
        for (auto& parent : self.parents) {
            const size_t d = parent->shape[1];
            if (parent->requires_grad)
                for (size_t b = 0; b < B; ++b)
                    for (size_t i = 0; i < d; ++i)
                        parent->grad[b * d + i] += self.grad[b * total + offset + i];
            offset += d;
        }
    };
    return Tensor(n);
}

// ---------------------------------------------------------------------------
// Parameter set: named trainable leaves, deterministically initialized.

class ParamSet {
public:
    explicit ParamSet(uint64_t seed = 0) : seed_(seed), rng_(seed) {}

    // Dense weights: uniform in +-sqrt(6 / (fan_in + fan_out)).
    Tensor add_dense_weight(const std::string& name, size_t fan_in, size_t fan_out) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::vector<double> w(fan_in * fan_out);
        for (auto& v : w) v = rng_.uniform(-limit, limit);
        return add(name, Tensor::leaf({fan_in, fan_out}, std::move(w), true));
    }

    Tensor add_zeros(const std::string& name, std::vector<size_t> shape) {
        return add(name, Tensor::zeros(std::move(shape), true));
    }

    Tensor add_ones(const std::string& name, std::vector<size_t> shape) {
        const size_t total =
            std::accumulate(shape.begin(), shape.end(), size_t{1}, std::multiplies<>());
        return add(name, Tensor::leaf(std::move(shape), std::vector<double>(total, 1.0), true));
    }

    Tensor add(const std::string& name, Tensor t) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        index_[name] = ordered_.size();
        ordered_.emplace_back(name, t);
        return t;
    }

    Tensor get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return ordered_[it->second].second;
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return ordered_; }
    uint64_t seed() const { return seed_; }
    size_t count() const { return ordered_.size(); }

    void zero_grad() {
        for (auto& [name, t] : ordered_) t.node()->reset_grad();
    }

    // Flat binary checkpoint: u64 seed, u64 count, then per parameter a name
    // (u32 length + bytes) and shape (u32 rank + u64 dims), then all payloads
    // in order as row-major 64-bit little-endian floats.
    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw InputError("cannot open checkpoint for writing: " + path);
        auto put_u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
        auto put_u64 = [&](uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
        put_u64(seed_);
        put_u64(ordered_.size());
        for (const auto& [name, t] : ordered_) {
            put_u32(static_cast<uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            put_u32(static_cast<uint32_t>(t.rank()));
            for (size_t d : t.shape()) put_u64(d);
        }
        for (const auto& [name, t] : ordered_)
            out.write(reinterpret_cast<const char*>(t.values().data()),
                      static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!out) throw InputError("failed writing checkpoint: " + path);
    }

    static ParamSet load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw InputError("cannot open checkpoint: " + path);
        auto get_u32 = [&] {
            uint32_t v = 0;
            in.read(reinterpret_cast<char*>(&v), 4);
            return v;
        };
        auto get_u64 = [&] {
            uint64_t v = 0;
            in.read(reinterpret_cast<char*>(&v), 8);
            return v;
        };
        const uint64_t seed = get_u64();
        const uint64_t count = get_u64();
        if (!in || count > (1ull << 24)) throw InputError("implausible checkpoint header: " + path);
        ParamSet params(seed);
        std::vector<std::pair<std::string, std::vector<size_t>>> headers;
        for (uint64_t i = 0; i < count; ++i) {
            const uint32_t name_len = get_u32();
            if (!in || name_len > 4096) throw InputError("implausible checkpoint entry: " + path);
            std::string name(name_len, '\0');
            in.read(name.data(), name_len);
            const uint32_t rank = get_u32();
            if (!in || rank > 8) throw InputError("implausible checkpoint entry: " + path);
            std::vector<size_t> shape(rank);
            for (auto& d : shape) d = get_u64();
            headers.emplace_back(std::move(name), std::move(shape));
        }
        for (auto& [name, shape] : headers) {
            const size_t total =
                std::accumulate(shape.begin(), shape.end(), size_t{1}, std::multiplies<>());
            std::vector<double> value(total);
            in.read(reinterpret_cast<char*>(value.data()),
                    static_cast<std::streamsize>(total * sizeof(double)));
            if (!in) throw InputError("truncated checkpoint: " + path);
            params.add(name, Tensor::leaf(shape, std::move(value), true));
        }
        return params;
    }

private:
    uint64_t seed_;
    Rng rng_;
    std::vector<std::pair<std::string, Tensor>> ordered_;
    std::map<std::string, size_t> index_;
};

// ---------------------------------------------------------------------------
// Adam optimizer with bias correction.

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class AdamState {
public:
    explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamSet& params, double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (auto& [name, tensor] : params.entries()) {
            auto& m = moments1_[name];
            auto& v = moments2_[name];
            if (m.size() != tensor.size()) {
                m.assign(tensor.size(), 0.0);
                v.assign(tensor.size(), 0.0);
            }
            auto& value = tensor.node()->value;
            const auto& grad = tensor.node()->grad;
            for (size_t i = 0; i < value.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
            }
        }
    }

    size_t steps_taken() const { return t_; }

private:
    AdamConfig cfg_;
    size_t t_ = 0;
    std::map<std::string, std::vector<double>> moments1_;
    std::map<std::string, std::vector<double>> moments2_;
};

// ---------------------------------------------------------------------------
// Sinusoidal positional table (constant, not trainable).

inline std::vector<double> sinusoidal_positions(size_t t_max, size_t d) {
    std::vector<double> pe(t_max * d);
    for (size_t pos = 0; pos < t_max; ++pos)
        for (size_t i = 0; i < d; ++i) {
            const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(d);
            const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
            pe[pos * d + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return pe;
}

// ---------------------------------------------------------------------------
// Attention and transformer block

// The key projection carries no bias: softmax rows are exactly invariant to
// a constant shift of every key, so such a parameter could never train.
struct AttentionParams {
    Tensor wq, bq, wk, wv, bv, wo, bo;
};

inline AttentionParams make_attention_params(ParamSet& params, const std::string& prefix, size_t d) {
    AttentionParams p;
    p.wq = params.add_dense_weight(prefix + ".wq", d, d);
    p.bq = params.add_zeros(prefix + ".bq", {d});
    p.wk = params.add_dense_weight(prefix + ".wk", d, d);
    p.wv = params.add_dense_weight(prefix + ".wv", d, d);
    p.bv = params.add_zeros(prefix + ".bv", {d});
    p.wo = params.add_dense_weight(prefix + ".wo", d, d);
    p.bo = params.add_zeros(prefix + ".bo", {d});
    return p;
}

inline AttentionParams attention_params_from(const ParamSet& params, const std::string& prefix) {
    AttentionParams p;
    p.wq = params.get(prefix + ".wq");
    p.bq = params.get(prefix + ".bq");
    p.wk = params.get(prefix + ".wk");
    p.wv = params.get(prefix + ".wv");
    p.bv = params.get(prefix + ".bv");
    p.wo = params.get(prefix + ".wo");
    p.bo = params.get(prefix + ".bo");
    return p;
}

// Scaled dot-product attention, h heads, scale 1/sqrt(d/h). Masked keys get
// zero weight; masked query rows produce zero output rows.
inline Tensor multi_head_attention(const Tensor& x, const std::vector<uint8_t>& mask,
                                   const AttentionParams& p, size_t heads) {
    if (x.rank() != 3) throw ShapeError("multi_head_attention: [B,T,d] input required");
    const size_t B = x.dim(0), T = x.dim(1), D = x.dim(2);
    if (heads == 0 || D % heads != 0)
        throw ConfigError("multi_head_attention: d_model " + std::to_string(D) +
                          " not divisible by heads " + std::to_string(heads));
    const size_t dh = D / heads;

    const Tensor x2 = reshape(x, {B * T, D});
    auto split_heads = [&](const Tensor& t) {
        return reshape(permute_0213(reshape(t, {B, T, heads, dh})), {B * heads, T, dh});
    };
    const Tensor q = split_heads(dense(x2, p.wq, p.bq));
    const Tensor k = split_heads(matmul(x2, p.wk));
    const Tensor v = split_heads(dense(x2, p.wv, p.bv));

    const Tensor scores = scale(bmm(q, transpose_last2(k)), 1.0 / std::sqrt(static_cast<double>(dh)));
    const Tensor weights = masked_softmax(scores, mask, heads);
    const Tensor context = bmm(weights, v);
    const Tensor merged =
        reshape(permute_0213(reshape(context, {B, heads, T, dh})), {B * T, D});
    const Tensor out = reshape(dense(merged, p.wo, p.bo), {B, T, D});
    return mul_row_mask(out, mask);
}

struct TransformerBlockParams {
    Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    AttentionParams attention;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

inline constexpr size_t kFfnExpansion = 4;

inline TransformerBlockParams make_transformer_block_params(ParamSet& params,
                                                            const std::string& prefix, size_t d) {
    TransformerBlockParams p;
    p.ln1_gain = params.add_ones(prefix + ".ln1.gain", {d});
    p.ln1_bias = params.add_zeros(prefix + ".ln1.bias", {d});
    p.attention = make_attention_params(params, prefix + ".attn", d);
    p.ln2_gain = params.add_ones(prefix + ".ln2.gain", {d});
    p.ln2_bias = params.add_zeros(prefix + ".ln2.bias", {d});
    p.ffn_w1 = params.add_dense_weight(prefix + ".ffn.w1", d, kFfnExpansion * d);
    p.ffn_b1 = params.add_zeros(prefix + ".ffn.b1", {kFfnExpansion * d});
    p.ffn_w2 = params.add_dense_weight(prefix + ".ffn.w2", kFfnExpansion * d, d);
    p.ffn_b2 = params.add_zeros(prefix + ".ffn.b2", {d});
    return p;
}

inline TransformerBlockParams transformer_block_params_from(const ParamSet& params,
                                                            const std::string& prefix) {
    TransformerBlockParams p;
    p.ln1_gain = params.get(prefix + ".ln1.gain");
    p.ln1_bias = params.get(prefix + ".ln1.bias");
    p.attention = attention_params_from(params, prefix + ".attn");
    p.ln2_gain = params.get(prefix + ".ln2.gain");
    p.ln2_bias = params.get(prefix + ".ln2.bias");
    p.ffn_w1 = params.get(prefix + ".ffn.w1");
    p.ffn_b1 = params.get(prefix + ".ffn.b1");
    p.ffn_w2 = params.get(prefix + ".ffn.w2");
    p.ffn_b2 = params.get(prefix + ".ffn.b2");
    return p;
}

// Pre-norm residual block: x + MHA(LN(x)), then + FFN(LN(.)) with one hidden
// expansion and ReLU. Sublayer outputs are re-masked so padding rows that
// enter as zero leave as zero.
inline Tensor transformer_block(const Tensor& x, const std::vector<uint8_t>& mask,
                                const TransformerBlockParams& p, size_t heads) {
    const size_t B = x.dim(0), T = x.dim(1), D = x.dim(2);
    const Tensor attn_out =
        multi_head_attention(layer_norm(x, p.ln1_gain, p.ln1_bias), mask, p.attention, heads);
    const Tensor h = add(x, attn_out);

    const Tensor normed = layer_norm(h, p.ln2_gain, p.ln2_bias);
    const Tensor hidden = relu(dense(reshape(normed, {B * T, D}), p.ffn_w1, p.ffn_b1));
    const Tensor ffn_out = reshape(dense(hidden, p.ffn_w2, p.ffn_b2), {B, T, D});
    return add(h, mul_row_mask(ffn_out, mask));
}

} // namespace cids::nn
