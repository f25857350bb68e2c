#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sepsa/errors.hpp"
#include "sepsa/rng.hpp"

// Dense tensors (rank <= 3, row-major) with reverse-mode autodiff.
//
// Scalar type is a template parameter: double for tests and numeric oracles,
// float for training. Everything is single-threaded; with a fixed seed the
// results are bit-identical run to run.

namespace sepsa {

inline thread_local int g_no_grad_depth = 0;

inline bool grad_enabled() { return g_no_grad_depth == 0; }

// RAII scope that disables graph recording (inference / evaluation passes).
struct NoGradGuard {
    NoGradGuard() { ++g_no_grad_depth; }
    ~NoGradGuard() { --g_no_grad_depth; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename T>
class TensorT {
public:
    struct Node {
        std::vector<int> shape;
        std::vector<T> values;
        std::vector<T> grad;  // empty until backward reaches this node
        bool requires_grad = false;
        bool consumed = false;  // backward already ran through this node
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents
    };

    TensorT() = default;

    static TensorT zeros(std::vector<int> shape, bool requires_grad = false) {
        TensorT t;
        t.n_ = std::make_shared<Node>();
        t.n_->shape = std::move(shape);
        t.n_->values.assign(numel_of(t.n_->shape), T(0));
        t.n_->requires_grad = requires_grad;
        return t;
    }

    static TensorT full(std::vector<int> shape, T value, bool requires_grad = false) {
        TensorT t = zeros(std::move(shape), requires_grad);
        std::fill(t.n_->values.begin(), t.n_->values.end(), value);
        return t;
    }

    static TensorT from_values(std::vector<int> shape, std::vector<T> values,
                               bool requires_grad = false) {
        if (numel_of(shape) != values.size())
            throw ShapeError("tensor: shape/value count mismatch (" +
                             std::to_string(numel_of(shape)) + " vs " +
                             std::to_string(values.size()) + ")");
        TensorT t;
        t.n_ = std::make_shared<Node>();
        t.n_->shape = std::move(shape);
        t.n_->values = std::move(values);
        t.n_->requires_grad = requires_grad;
        return t;
    }

    static TensorT scalar(T v) { return from_values({1}, {v}); }

    bool defined() const { return static_cast<bool>(n_); }
    const std::vector<int>& shape() const { return n_->shape; }
    int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(n_->shape.size()); }
    size_t numel() const { return n_->values.size(); }

    std::vector<T>& values() { return n_->values; }
    const std::vector<T>& values() const { return n_->values; }

    T item() const {
        if (numel() != 1) throw ContractError("item() on tensor with numel != 1");
        return n_->values[0];
    }

    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool rg) { n_->requires_grad = rg; }

    bool has_grad() const { return !n_->grad.empty(); }
    std::vector<T>& grad() {
        if (n_->grad.empty()) n_->grad.assign(numel(), T(0));
        return n_->grad;
    }
    const std::vector<T>& grad() const { return n_->grad; }
    void zero_grad() { n_->grad.clear(); }

    void fill_randn(Rng& rng, T stddev = T(1), T mean = T(0)) {
        for (auto& v : n_->values) v = static_cast<T>(rng.normal(mean, stddev));
    }
    void fill_uniform(Rng& rng, T lo, T hi) {
        for (auto& v : n_->values) v = static_cast<T>(rng.uniform(lo, hi));
    }

    // Runs reverse-mode differentiation from this scalar. Every node on a
    // grad-requiring path receives its gradient; a second backward without
    // re-running the forward computation is an error.
    void backward() {
        if (!n_) throw ContractError("backward() on undefined tensor");
        if (numel() != 1) throw ContractError("backward() requires a scalar loss tensor");
        if (n_->consumed)
            throw ContractError("backward() on a stale graph: re-run forward before a second backward");

        std::vector<Node*> order = topo_order(n_.get());
        grad()[0] = T(1);
        // Reverse post-order: every consumer of a node runs before the node,
        // so node.grad is complete when node.backprop fires.
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* node = *it;
            node->consumed = true;
            if (node->backprop) node->backprop(*node);
        }
    }

    // Graph-building entry used by the ops below.
    static TensorT make_op(std::vector<int> shape, std::vector<T> values,
                           const std::vector<TensorT>& inputs,
                           std::function<void(Node&)> backprop) {
        TensorT out = from_values(std::move(shape), std::move(values));
        bool needs = false;
        if (grad_enabled()) {
            for (const auto& in : inputs) needs = needs || (in.defined() && in.n_->requires_grad);
        }
        if (needs) {
            out.n_->requires_grad = true;
            out.n_->backprop = std::move(backprop);
            for (const auto& in : inputs)
                if (in.defined() && in.n_->requires_grad) out.n_->parents.push_back(in.n_);
        }
        return out;
    }

    std::shared_ptr<Node> handle() const { return n_; }
    Node* node() const { return n_.get(); }

    static std::vector<T>& ensure_grad(Node& n) {
        if (n.grad.empty()) n.grad.assign(n.values.size(), T(0));
        return n.grad;
    }

    static size_t numel_of(const std::vector<int>& shape) {
        size_t n = 1;
        for (const int d : shape) {
            if (d <= 0) throw ShapeError("tensor: non-positive dimension " + std::to_string(d));
            n *= static_cast<size_t>(d);
        }
        return n;
    }

private:
    static std::vector<Node*> topo_order(Node* root) {
        // Iterative post-order DFS over grad-requiring parents.
        std::vector<Node*> order;
        std::vector<std::pair<Node*, size_t>> stack;
        std::vector<Node*> seen_sorted;
        auto seen_insert = [&](Node* n) {
            auto it = std::lower_bound(seen_sorted.begin(), seen_sorted.end(), n);
            if (it != seen_sorted.end() && *it == n) return false;
            seen_sorted.insert(it, n);
            return true;
        };

        seen_insert(root);
        stack.emplace_back(root, 0);
        while (!stack.empty()) {
            auto& [node, idx] = stack.back();
            if (idx < node->parents.size()) {
                Node* parent = node->parents[idx++].get();
                if (seen_insert(parent)) stack.emplace_back(parent, 0);
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
        return order;
    }

    std::shared_ptr<Node> n_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

namespace detail {

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <typename T>
void require_rank(const TensorT<T>& t, int rank, const char* op) {
    if (t.rank() != rank)
        throw ShapeError(std::string(op) + ": expected rank-" + std::to_string(rank) +
                         " tensor, got " + shape_str(t.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv1d: input [N x Cin x L], weight [Cout x Cin/g x k], bias [Cout]
// ---------------------------------------------------------------------------
template <typename T>
TensorT<T> conv1d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                  int stride = 1, int padding = 0, int groups = 1) {
    detail::require_rank(x, 3, "conv1d input");
    detail::require_rank(w, 3, "conv1d weight");
    detail::require_rank(b, 1, "conv1d bias");
    const int batch = x.dim(0), cin = x.dim(1), len = x.dim(2);
    const int cout = w.dim(0), cin_g = w.dim(1), k = w.dim(2);
    if (stride < 1) throw ConfigError("conv1d: stride must be >= 1");
    if (padding < 0) throw ConfigError("conv1d: padding must be >= 0");
    if (groups < 1) throw ConfigError("conv1d: groups must be >= 1");
    if (cin % groups != 0 || cout % groups != 0)
        throw ConfigError("conv1d: groups=" + std::to_string(groups) + " must divide Cin=" +
                          std::to_string(cin) + " and Cout=" + std::to_string(cout));
    if (cin_g != cin / groups)
        throw ShapeError("conv1d: weight " + detail::shape_str(w.shape()) + " incompatible with Cin=" +
                         std::to_string(cin) + ", groups=" + std::to_string(groups));
    if (b.dim(0) != cout)
        throw ShapeError("conv1d: bias " + detail::shape_str(b.shape()) + " vs Cout=" + std::to_string(cout));
    if (k > len + 2 * padding)
        throw ShapeError("conv1d: kernel " + std::to_string(k) + " exceeds padded length " +
                         std::to_string(len + 2 * padding));

    const int lout = (len + 2 * padding - k) / stride + 1;
    const int cout_g = cout / groups;
    std::vector<T> out(static_cast<size_t>(batch) * cout * lout);

    const T* xv = x.values().data();
    const T* wv = w.values().data();
    const T* bv = b.values().data();
    for (int n = 0; n < batch; ++n) {
        for (int co = 0; co < cout; ++co) {
            const int g = co / cout_g;
            const T* wrow0 = wv + static_cast<size_t>(co) * cin_g * k;
            T* orow = out.data() + (static_cast<size_t>(n) * cout + co) * lout;
            for (int t = 0; t < lout; ++t) {
                const int start = t * stride - padding;
                const int jlo = start < 0 ? -start : 0;
                const int jhi = std::min(k, len - start);
                T acc = bv[co];
                for (int ci = 0; ci < cin_g; ++ci) {
                    const T* xrow = xv + (static_cast<size_t>(n) * cin + g * cin_g + ci) * len + start;
                    const T* wrow = wrow0 + static_cast<size_t>(ci) * k;
                    for (int j = jlo; j < jhi; ++j) acc += xrow[j] * wrow[j];
                }
                orow[t] = acc;
            }
        }
    }

    auto xh = x.handle(), wh = w.handle(), bh = b.handle();
    auto back = [xh, wh, bh, batch, cin, len, cout, cin_g, cout_g, k, stride, padding,
                 lout](typename TensorT<T>::Node& self) {
        const T* g = self.grad.data();
        const T* xv2 = xh->values.data();
        const T* wv2 = wh->values.data();
        T* gx = nullptr;
        T* gw = nullptr;
        if (xh->requires_grad) gx = TensorT<T>::ensure_grad(*xh).data();
        if (wh->requires_grad) gw = TensorT<T>::ensure_grad(*wh).data();
        if (bh->requires_grad) {
            T* gb = TensorT<T>::ensure_grad(*bh).data();
            for (int n = 0; n < batch; ++n)
                for (int co = 0; co < cout; ++co) {
                    const T* grow = g + (static_cast<size_t>(n) * cout + co) * lout;
                    T acc = T(0);
                    for (int t = 0; t < lout; ++t) acc += grow[t];
                    gb[co] += acc;
                }
        }
        if (!gx && !gw) return;
        for (int n = 0; n < batch; ++n) {
            for (int co = 0; co < cout; ++co) {
                const int grp = co / cout_g;
                const T* grow = g + (static_cast<size_t>(n) * cout + co) * lout;
                for (int t = 0; t < lout; ++t) {
                    const T gv = grow[t];
                    if (gv == T(0)) continue;
                    const int start = t * stride - padding;
                    const int jlo = start < 0 ? -start : 0;
                    const int jhi = std::min(k, len - start);
                    for (int ci = 0; ci < cin_g; ++ci) {
                        const size_t xoff = (static_cast<size_t>(n) * cin + grp * cin_g + ci) * len + start;
                        const size_t woff = (static_cast<size_t>(co) * cin_g + ci) * k;
                        if (gx) {
                            const T* wrow = wv2 + woff;
                            T* gxrow = gx + xoff;
                            for (int j = jlo; j < jhi; ++j) gxrow[j] += gv * wrow[j];
                        }
                        if (gw) {
                            const T* xrow = xv2 + xoff;
                            T* gwrow = gw + woff;
                            for (int j = jlo; j < jhi; ++j) gwrow[j] += gv * xrow[j];
                        }
                    }
                }
            }
        }
    };
    return TensorT<T>::make_op({batch, cout, lout}, std::move(out), {x, w, b}, back);
}

// ---------------------------------------------------------------------------
// batch_norm1d over [N x C x L]: per-channel statistics across N*L
// ---------------------------------------------------------------------------
template <typename T>
struct BatchNormRunning {
    std::vector<T> mean;
    std::vector<T> var;
    explicit BatchNormRunning(int channels = 0)
        : mean(static_cast<size_t>(channels), T(0)), var(static_cast<size_t>(channels), T(1)) {}
};

template <typename T>
TensorT<T> batch_norm1d(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                        BatchNormRunning<T>* running, bool training, T momentum = T(0.1),
                        T eps = T(1e-5)) {
    detail::require_rank(x, 3, "batch_norm1d input");
    const int batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
    if (gamma.numel() != static_cast<size_t>(ch) || beta.numel() != static_cast<size_t>(ch))
        throw ShapeError("batch_norm1d: gamma/beta size must equal channel count " + std::to_string(ch));
    if (eps <= T(0)) throw ConfigError("batch_norm1d: epsilon must be > 0");
    const size_t m = static_cast<size_t>(batch) * len;
    if (training && m < 2)
        throw ContractError("batch_norm1d: degenerate batch (N*L < 2) in train mode");

    std::vector<T> mean(ch), invstd(ch);
    if (training) {
        for (int c = 0; c < ch; ++c) {
            double sum = 0.0;
            for (int n = 0; n < batch; ++n) {
                const T* row = x.values().data() + (static_cast<size_t>(n) * ch + c) * len;
                for (int l = 0; l < len; ++l) sum += row[l];
            }
            const double mu = sum / static_cast<double>(m);
            double sq = 0.0;
            for (int n = 0; n < batch; ++n) {
                const T* row = x.values().data() + (static_cast<size_t>(n) * ch + c) * len;
                for (int l = 0; l < len; ++l) {
                    const double d = row[l] - mu;
                    sq += d * d;
                }
            }
            const double var = sq / static_cast<double>(m);  // population variance
            mean[c] = static_cast<T>(mu);
            invstd[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            if (running) {
                running->mean[c] = (T(1) - momentum) * running->mean[c] + momentum * static_cast<T>(mu);
                running->var[c] = (T(1) - momentum) * running->var[c] + momentum * static_cast<T>(var);
            }
        }
    } else {
        if (!running) throw ContractError("batch_norm1d: eval mode requires running statistics");
        for (int c = 0; c < ch; ++c) {
            mean[c] = running->mean[c];
            invstd[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running->var[c]) +
                                                       static_cast<double>(eps)));
        }
    }

    std::vector<T> out(x.numel());
    const T* gv = gamma.values().data();
    const T* bv = beta.values().data();
    for (int n = 0; n < batch; ++n)
        for (int c = 0; c < ch; ++c) {
            const T* row = x.values().data() + (static_cast<size_t>(n) * ch + c) * len;
            T* orow = out.data() + (static_cast<size_t>(n) * ch + c) * len;
            const T mu = mean[c], is = invstd[c], ga = gv[c], be = bv[c];
            for (int l = 0; l < len; ++l) orow[l] = ga * (row[l] - mu) * is + be;
        }

    auto xh = x.handle(), gh = gamma.handle(), bh = beta.handle();
    auto back = [xh, gh, bh, batch, ch, len, mean, invstd, training,
                 m](typename TensorT<T>::Node& self) {
        const T* g = self.grad.data();
        const T* xv = xh->values.data();
        const T* ga = gh->values.data();
        T* gx = xh->requires_grad ? TensorT<T>::ensure_grad(*xh).data() : nullptr;
        T* gg = gh->requires_grad ? TensorT<T>::ensure_grad(*gh).data() : nullptr;
        T* gb = bh->requires_grad ? TensorT<T>::ensure_grad(*bh).data() : nullptr;
        for (int c = 0; c < ch; ++c) {
            const T mu = mean[c], is = invstd[c];
            double sum_g = 0.0, sum_gx = 0.0;
            for (int n = 0; n < batch; ++n) {
                const size_t off = (static_cast<size_t>(n) * ch + c) * len;
                for (int l = 0; l < len; ++l) {
                    const double gl = g[off + l];
                    sum_g += gl;
                    sum_gx += gl * (xv[off + l] - mu) * is;
                }
            }
            if (gg) gg[c] += static_cast<T>(sum_gx);
            if (gb) gb[c] += static_cast<T>(sum_g);
            if (gx) {
                const double scale = static_cast<double>(ga[c]) * is;
                if (training) {
                    const double mg = sum_g / static_cast<double>(m);
                    const double mgx = sum_gx / static_cast<double>(m);
                    for (int n = 0; n < batch; ++n) {
                        const size_t off = (static_cast<size_t>(n) * ch + c) * len;
                        for (int l = 0; l < len; ++l) {
                            const double xhat = (xv[off + l] - mu) * is;
                            gx[off + l] += static_cast<T>(scale * (g[off + l] - mg - xhat * mgx));
                        }
                    }
                } else {
                    for (int n = 0; n < batch; ++n) {
                        const size_t off = (static_cast<size_t>(n) * ch + c) * len;
                        for (int l = 0; l < len; ++l) gx[off + l] += static_cast<T>(scale * g[off + l]);
                    }
                }
            }
        }
    };
    return TensorT<T>::make_op(x.shape(), std::move(out), {x, gamma, beta}, back);
}

// ---------------------------------------------------------------------------
// Elementwise activations
// ---------------------------------------------------------------------------
template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
    std::vector<T> out(x.numel());
    const auto& xv = x.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
    auto xh = x.handle();
    auto back = [xh](typename TensorT<T>::Node& self) {
        if (!xh->requires_grad) return;
        T* gx = TensorT<T>::ensure_grad(*xh).data();
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (xh->values[i] > T(0)) gx[i] += self.grad[i];
    };
    return TensorT<T>::make_op(x.shape(), std::move(out), {x}, back);
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& x) {
    std::vector<T> out(x.numel());
    const auto& xv = x.values();
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(xv[i]))));
    auto xh = x.handle();
    auto back = [xh](typename TensorT<T>::Node& self) {
        if (!xh->requires_grad) return;
        T* gx = TensorT<T>::ensure_grad(*xh).data();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            const T s = self.values[i];
            gx[i] += self.grad[i] * s * (T(1) - s);
        }
    };
    return TensorT<T>::make_op(x.shape(), std::move(out), {x}, back);
}

// ---------------------------------------------------------------------------
// Pooling over [N x C x L]
// ---------------------------------------------------------------------------
template <typename T>
TensorT<T> max_pool1d(const TensorT<T>& x, int k, int stride) {
    detail::require_rank(x, 3, "max_pool1d input");
    const int batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
    if (k < 1 || stride < 1) throw ConfigError("max_pool1d: k and stride must be >= 1");
    if (k > len)
        throw ShapeError("max_pool1d: window " + std::to_string(k) + " > length " + std::to_string(len));
    const int lout = (len - k) / stride + 1;
    std::vector<T> out(static_cast<size_t>(batch) * ch * lout);
    std::vector<int> argmax(out.size());
    const T* xv = x.values().data();
    for (int n = 0; n < batch; ++n)
        for (int c = 0; c < ch; ++c) {
            const T* row = xv + (static_cast<size_t>(n) * ch + c) * len;
            const size_t obase = (static_cast<size_t>(n) * ch + c) * lout;
            for (int t = 0; t < lout; ++t) {
                const int start = t * stride;
                int best = start;
                T bv = row[start];
                for (int j = 1; j < k; ++j)
                    if (row[start + j] > bv) {
                        bv = row[start + j];
                        best = start + j;
                    }
                out[obase + t] = bv;
                argmax[obase + t] = best;
            }
        }
    auto xh = x.handle();
    auto back = [xh, argmax, batch, ch, len, lout](typename TensorT<T>::Node& self) {
        if (!xh->requires_grad) return;
        T* gx = TensorT<T>::ensure_grad(*xh).data();
        for (int n = 0; n < batch; ++n)
            for (int c = 0; c < ch; ++c) {
                const size_t obase = (static_cast<size_t>(n) * ch + c) * lout;
                const size_t xbase = (static_cast<size_t>(n) * ch + c) * len;
                for (int t = 0; t < lout; ++t)
                    gx[xbase + argmax[obase + t]] += self.grad[obase + t];
            }
    };
    return TensorT<T>::make_op({batch, ch, lout}, std::move(out), {x}, back);
}

template <typename T>
TensorT<T> global_max_pool1d(const TensorT<T>& x) {
    detail::require_rank(x, 3, "global_max_pool1d input");
    const int batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
    std::vector<T> out(static_cast<size_t>(batch) * ch);
    std::vector<int> argmax(out.size());
    const T* xv = x.values().data();
    for (int n = 0; n < batch; ++n)
        for (int c = 0; c < ch; ++c) {
            const T* row = xv + (static_cast<size_t>(n) * ch + c) * len;
            int best = 0;
            for (int l = 1; l < len; ++l)
                if (row[l] > row[best]) best = l;
            out[static_cast<size_t>(n) * ch + c] = row[best];
            argmax[static_cast<size_t>(n) * ch + c] = best;
        }
    auto xh = x.handle();
    auto back = [xh, argmax, batch, ch, len](typename TensorT<T>::Node& self) {
        if (!xh->requires_grad) return;
        T* gx = TensorT<T>::ensure_grad(*xh).data();
        for (size_t i = 0; i < self.grad.size(); ++i)
            gx[i * len + argmax[i]] += self.grad[i];
        (void)batch;
        (void)ch;
    };
    return TensorT<T>::make_op({batch, ch, 1}, std::move(out), {x}, back);
}

template <typename T>
TensorT<T> global_avg_pool1d(const TensorT<T>& x) {
    detail::require_rank(x, 3, "global_avg_pool1d input");
    const int batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
    std::vector<T> out(static_cast<size_t>(batch) * ch);
    const T* xv = x.values().data();
    for (int n = 0; n < batch; ++n)
        for (int c = 0; c < ch; ++c) {
            const T* row = xv + (static_cast<size_t>(n) * ch + c) * len;
            double acc = 0.0;
            for (int l = 0; l < len; ++l) acc += row[l];
            out[static_cast<size_t>(n) * ch + c] = static_cast<T>(acc / len);
        }
    auto xh = x.handle();
    auto back = [xh, len](typename TensorT<T>::Node& self) {
        if (!xh->requires_grad) return;
        T* gx = TensorT<T>::ensure_grad(*xh).data();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            const T gv = self.grad[i] / static_cast<T>(len);
            T* row = gx + i * len;
            for (int l = 0; l < len; ++l) row[l] += gv;
        }
    };
    return TensorT<T>::make_op({batch, ch, 1}, std::move(out), {x}, back);
}

// ---------------------------------------------------------------------------
// dense: input [N x Din], weight [Dout x Din], bias [Dout]
// ---------------------------------------------------------------------------
template <typename T>
TensorT<T> dense(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    detail::require_rank(x, 2, "dense input");
    detail::require_rank(w, 2, "dense weight");
    detail::require_rank(b, 1, "dense bias");
    const int batch = x.dim(0), din = x.dim(1);
    const int dout = w.dim(0);
    if (w.dim(1) != din)
        throw ShapeError("dense: weight " + detail::shape_str(w.shape()) + " vs input " +
                         detail::shape_str(x.shape()));
    if (b.dim(0) != dout)
        throw ShapeError("dense: bias " + detail::shape_str(b.shape()) + " vs Dout=" + std::to_string(dout));
    std::vector<T> out(static_cast<size_t>(batch) * dout);
    const T* xv = x.values().data();
    const T* wv = w.values().data();
    const T* bv = b.values().data();
    for (int n = 0; n < batch; ++n)
        for (int o = 0; o < dout; ++o) {
            const T* xrow = xv + static_cast<size_t>(n) * din;
            const T* wrow = wv + static_cast<size_t>(o) * din;
            T acc = bv[o];
            for (int i = 0; i < din; ++i) acc += xrow[i] * wrow[i];
            out[static_cast<size_t>(n) * dout + o] = acc;
        }
    auto xh = x.handle(), wh = w.handle(), bh = b.handle();
    auto back = [xh, wh, bh, batch, din, dout](typename TensorT<T>::Node& self) {
        const T* g = self.grad.data();
        T* gx = xh->requires_grad ? TensorT<T>::ensure_grad(*xh).data() : nullptr;
        T* gw = wh->requires_grad ? TensorT<T>::ensure_grad(*wh).data() : nullptr;
        T* gb = bh->requires_grad ? TensorT<T>::ensure_grad(*bh).data() : nullptr;
        for (int n = 0; n < batch; ++n)
            for (int o = 0; o < dout; ++o) {
                const T gv = g[static_cast<size_t>(n) * dout + o];
                if (gv == T(0)) continue;
                if (gx) {
                    const T* wrow = wh->values.data() + static_cast<size_t>(o) * din;
                    T* gxrow = gx + static_cast<size_t>(n) * din;
                    for (int i = 0; i < din; ++i) gxrow[i] += gv * wrow[i];
                }
                if (gw) {
                    const T* xrow = xh->values.data() + static_cast<size_t>(n) * din;
                    T* gwrow = gw + static_cast<size_t>(o) * din;
                    for (int i = 0; i < din; ++i) gwrow[i] += gv * xrow[i];
                }
                if (gb) gb[o] += gv;
            }
    };
    return TensorT<T>::make_op({batch, dout}, std::move(out), {x, w, b}, back);
}

// ---------------------------------------------------------------------------
// spatial_dropout: one Bernoulli draw per (n, c); survivors scaled 1/(1-rate)
// ---------------------------------------------------------------------------
template <typename T>
TensorT<T> spatial_dropout(const TensorT<T>& x, double rate, bool training, Rng& rng) {
    detail::require_rank(x, 3, "spatial_dropout input");
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("spatial_dropout: rate must be in [0, 1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    const int batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    std::vector<T> mask(static_cast<size_t>(batch) * ch);
    for (auto& m : mask) m = rng.uniform() < rate ? T(0) : scale;
    std::vector<T> out(x.numel());
    const T* xv = x.values().data();
    for (size_t i = 0; i < mask.size(); ++i) {
        const T m = mask[i];
        const T* row = xv + i * len;
        T* orow = out.data() + i * len;
        for (int l = 0; l < len; ++l) orow[l] = row[l] * m;
    }
    auto xh = x.handle();
    auto back = [xh, mask, len](typename TensorT<T>::Node& self) {
        if (!xh->requires_grad) return;
        T* gx = TensorT<T>::ensure_grad(*xh).data();
        for (size_t i = 0; i < mask.size(); ++i) {
            const T m = mask[i];
            const T* grow = self.grad.data() + i * len;
            T* gxrow = gx + i * len;
            for (int l = 0; l < len; ++l) gxrow[l] += grow[l] * m;
        }
    };
    return TensorT<T>::make_op(x.shape(), std::move(out), {x}, back);
}

// ---------------------------------------------------------------------------
// add (residual join), channel scaling (SE gate), squeeze
// ---------------------------------------------------------------------------
template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add: incompatible shapes " + detail::shape_str(a.shape()) + " vs " +
                         detail::shape_str(b.shape()) + " (skip path needs a projection)");
    std::vector<T> out(a.numel());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    auto ah = a.handle(), bh = b.handle();
    auto back = [ah, bh](typename TensorT<T>::Node& self) {
        if (ah->requires_grad) {
            T* ga = TensorT<T>::ensure_grad(*ah).data();
            for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
        }
        if (bh->requires_grad) {
            T* gb = TensorT<T>::ensure_grad(*bh).data();
            for (size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i];
        }
    };
    return TensorT<T>::make_op(a.shape(), std::move(out), {a, b}, back);
}

// out[n,c,l] = x[n,c,l] * gate[n,c]
template <typename T>
TensorT<T> scale_channels(const TensorT<T>& x, const TensorT<T>& gate) {
    detail::require_rank(x, 3, "scale_channels input");
    detail::require_rank(gate, 2, "scale_channels gate");
    const int batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
    if (gate.dim(0) != batch || gate.dim(1) != ch)
        throw ShapeError("scale_channels: gate " + detail::shape_str(gate.shape()) + " vs input " +
                         detail::shape_str(x.shape()));
    std::vector<T> out(x.numel());
    const T* xv = x.values().data();
    const T* gv = gate.values().data();
    for (size_t i = 0; i < static_cast<size_t>(batch) * ch; ++i) {
        const T g = gv[i];
        const T* row = xv + i * len;
        T* orow = out.data() + i * len;
        for (int l = 0; l < len; ++l) orow[l] = row[l] * g;
    }
    auto xh = x.handle(), gh = gate.handle();
    auto back = [xh, gh, batch, ch, len](typename TensorT<T>::Node& self) {
        const size_t rows = static_cast<size_t>(batch) * ch;
        if (xh->requires_grad) {
            T* gx = TensorT<T>::ensure_grad(*xh).data();
            const T* gv2 = gh->values.data();
            for (size_t i = 0; i < rows; ++i) {
                const T g = gv2[i];
                const T* grow = self.grad.data() + i * len;
                T* gxrow = gx + i * len;
                for (int l = 0; l < len; ++l) gxrow[l] += grow[l] * g;
            }
        }
        if (gh->requires_grad) {
            T* gg = TensorT<T>::ensure_grad(*gh).data();
            const T* xv2 = xh->values.data();
            for (size_t i = 0; i < rows; ++i) {
                const T* grow = self.grad.data() + i * len;
                const T* xrow = xv2 + i * len;
                double acc = 0.0;
                for (int l = 0; l < len; ++l) acc += static_cast<double>(grow[l]) * xrow[l];
                gg[i] += static_cast<T>(acc);
            }
        }
    };
    return TensorT<T>::make_op(x.shape(), std::move(out), {x, gate}, back);
}

// [N x C x 1] -> [N x C]
template <typename T>
TensorT<T> squeeze_last(const TensorT<T>& x) {
    detail::require_rank(x, 3, "squeeze_last input");
    if (x.dim(2) != 1)
        throw ShapeError("squeeze_last: last dimension must be 1, got " + detail::shape_str(x.shape()));
    auto xh = x.handle();
    auto back = [xh](typename TensorT<T>::Node& self) {
        if (!xh->requires_grad) return;
        T* gx = TensorT<T>::ensure_grad(*xh).data();
        for (size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    };
    return TensorT<T>::make_op({x.dim(0), x.dim(1)}, x.values(), {x}, back);
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------
template <typename T>
TensorT<T> sum(const TensorT<T>& x) {
    double acc = 0.0;
    for (const T v : x.values()) acc += v;
    auto xh = x.handle();
    auto back = [xh](typename TensorT<T>::Node& self) {
        if (!xh->requires_grad) return;
        T* gx = TensorT<T>::ensure_grad(*xh).data();
        const T g = self.grad[0];
        for (size_t i = 0; i < xh->values.size(); ++i) gx[i] += g;
    };
    return TensorT<T>::make_op({1}, {static_cast<T>(acc)}, {x}, back);
}

// Scalar <x, w>; the scalarizer used by gradient checks and identity tests.
template <typename T>
TensorT<T> dot_sum(const TensorT<T>& x, const std::vector<T>& weights) {
    if (weights.size() != x.numel())
        throw ShapeError("dot_sum: weight count " + std::to_string(weights.size()) + " vs numel " +
                         std::to_string(x.numel()));
    double acc = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) acc += static_cast<double>(x.values()[i]) * weights[i];
    auto xh = x.handle();
    auto back = [xh, weights](typename TensorT<T>::Node& self) {
        if (!xh->requires_grad) return;
        T* gx = TensorT<T>::ensure_grad(*xh).data();
        const T g = self.grad[0];
        for (size_t i = 0; i < weights.size(); ++i) gx[i] += g * weights[i];
    };
    return TensorT<T>::make_op({1}, {static_cast<T>(acc)}, {x}, back);
}

// ---------------------------------------------------------------------------
// Binary cross-entropy on probabilities in (0,1); targets in {0,1}.
// ---------------------------------------------------------------------------
template <typename T>
TensorT<T> bce_loss(const TensorT<T>& scores, const TensorT<T>& targets) {
    if (scores.shape() != targets.shape())
        throw ShapeError("bce_loss: scores " + detail::shape_str(scores.shape()) + " vs targets " +
                         detail::shape_str(targets.shape()));
    const size_t n = scores.numel();
    const double lo = 1e-7, hi = 1.0 - 1e-7;
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double t = targets.values()[i];
        if (t != 0.0 && t != 1.0)
            throw ContractError("bce_loss: target values must be 0 or 1, got " + std::to_string(t));
        const double s = std::clamp(static_cast<double>(scores.values()[i]), lo, hi);
        acc += -(t * std::log(s) + (1.0 - t) * std::log(1.0 - s));
    }
    acc /= static_cast<double>(n);
    auto sh = scores.handle(), th = targets.handle();
    auto back = [sh, th, n, lo, hi](typename TensorT<T>::Node& self) {
        if (!sh->requires_grad) return;
        T* gs = TensorT<T>::ensure_grad(*sh).data();
        const T g = self.grad[0];
        for (size_t i = 0; i < n; ++i) {
            const double raw = sh->values[i];
            if (raw < lo || raw > hi) continue;  // clamp region is locally flat
            const double t = th->values[i];
            gs[i] += static_cast<T>(static_cast<double>(g) * (raw - t) / (raw * (1.0 - raw) * static_cast<double>(n)));
        }
    };
    return TensorT<T>::make_op({1}, {static_cast<T>(acc)}, {scores, targets}, back);
}

}  // namespace sepsa
