#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <unordered_set>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pri4r/rng.hpp"

namespace pri4r {

using Shape = std::vector<size_t>;

inline size_t numel(const Shape& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One node of the reverse-mode tape. Nodes are created in forward order and
// carry a monotonically increasing id; backward() visits reachable nodes in
// strictly decreasing id order, i.e. exact reverse insertion order.
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    uint64_t id = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop;  // scatters this->grad into parents' grads

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

inline uint64_t next_node_id() {
    thread_local uint64_t counter = 0;
    return ++counter;
}

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor leaf(Shape shape, std::vector<double> data, bool requires_grad = false) {
        if (numel(shape) != data.size())
            throw ShapeError("leaf: shape " + shape_str(shape) + " does not match data length " +
                             std::to_string(data.size()));
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->data = std::move(data);
        n->requires_grad = requires_grad;
        n->id = next_node_id();
        return Tensor(n);
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::vector<double> d(numel(shape), 0.0);
        return leaf(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor full(Shape shape, double v, bool requires_grad = false) {
        std::vector<double> d(numel(shape), v);
        return leaf(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor scalar(double v, bool requires_grad = false) { return leaf({1}, {v}, requires_grad); }

    static Tensor randn(Shape shape, Pcg32& rng, double stddev = 1.0, bool requires_grad = false) {
        std::vector<double> d(numel(shape));
        for (double& x : d) x = stddev * rng.normal();
        return leaf(std::move(shape), std::move(d), requires_grad);
    }

    const Shape& shape() const { return node_->shape; }
    size_t size() const { return node_->data.size(); }
    size_t rank() const { return node_->shape.size(); }
    const std::vector<double>& data() const { return node_->data; }
    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    double item() const {
        if (size() != 1) throw ShapeError("item: tensor has " + std::to_string(size()) + " elements");
        return node_->data[0];
    }
    std::shared_ptr<Node> node() const { return node_; }
    bool defined() const { return node_ != nullptr; }

    // Detached copy: same values, no tape history. Safe to move across threads.
    Tensor detach() const { return leaf(node_->shape, node_->data, false); }

private:
    std::shared_ptr<Node> node_;
};

namespace detail {

inline void check_finite(const std::vector<double>& d, const char* op) {
    for (double x : d)
        if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite value in output");
}

inline std::shared_ptr<Node> make_node(Shape shape, std::vector<double> data,
                                       std::vector<std::shared_ptr<Node>> parents) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->parents = std::move(parents);
    n->requires_grad = false;
    for (auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    n->id = next_node_id();
    return n;
}

// numpy-style broadcast of two shapes (align right, size-1 dims stretch)
inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (size_t i = 0; i < r; ++i) {
        size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1)
            throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                             " are not broadcastable");
        out[i] = std::max(da, db);
    }
    return out;
}

inline std::vector<size_t> strides_for(const Shape& s) {
    std::vector<size_t> st(s.size());
    size_t acc = 1;
    for (size_t i = s.size(); i-- > 0;) {
        st[i] = acc;
        acc *= s[i];
    }
    return st;
}

// strides of `in` viewed under the broadcast shape `out` (0 where stretched)
inline std::vector<size_t> broadcast_strides(const Shape& in, const Shape& out) {
    std::vector<size_t> st(out.size(), 0);
    auto base = strides_for(in);
    size_t off = out.size() - in.size();
    for (size_t i = 0; i < in.size(); ++i)
        if (in[i] != 1) st[off + i] = base[i];
    return st;
}

inline size_t offset_for(const std::vector<size_t>& idx, const std::vector<size_t>& strides) {
    size_t o = 0;
    for (size_t i = 0; i < idx.size(); ++i) o += idx[i] * strides[i];
    return o;
}

inline void advance_index(std::vector<size_t>& idx, const Shape& shape) {
    for (size_t i = idx.size(); i-- > 0;) {
        if (++idx[i] < shape[i]) return;
        idx[i] = 0;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise binary ops with broadcasting
// ---------------------------------------------------------------------------

namespace detail {

template <class Fwd, class Bwd>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
    Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
    size_t n = numel(out_shape);
    std::vector<double> out(n);
    auto sa = broadcast_strides(a.shape(), out_shape);
    auto sb = broadcast_strides(b.shape(), out_shape);
    std::vector<size_t> idx(out_shape.size(), 0);
    for (size_t i = 0; i < n; ++i) {
        out[i] = fwd(a.data()[offset_for(idx, sa)], b.data()[offset_for(idx, sb)]);
        advance_index(idx, out_shape);
    }
    check_finite(out, name);
    auto node = make_node(out_shape, std::move(out), {a.node(), b.node()});
    if (node->requires_grad) {
        auto an = a.node();
        auto bn = b.node();
        Node* self = node.get();
        Shape os = out_shape;
        node->backprop = [self, an, bn, sa, sb, os, bwd]() {
            std::vector<size_t> idx(os.size(), 0);
            size_t n = self->data.size();
            for (size_t i = 0; i < n; ++i) {
                size_t oa = offset_for(idx, sa);
                size_t ob = offset_for(idx, sb);
                double ga, gb;
                bwd(an->data[oa], bn->data[ob], self->grad[i], ga, gb);
                if (an->requires_grad) an->grad[oa] += ga;
                if (bn->requires_grad) bn->grad[ob] += gb;
                advance_index(idx, os);
            }
        };
    }
    return Tensor(node);
}

template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& a, const char* name, Fwd fwd, Bwd bwd) {
    size_t n = a.size();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = fwd(a.data()[i]);
    check_finite(out, name);
    auto node = make_node(a.shape(), std::move(out), {a.node()});
    if (node->requires_grad) {
        auto an = a.node();
        Node* self = node.get();
        node->backprop = [self, an, bwd]() {
            for (size_t i = 0; i < self->data.size(); ++i)
                an->grad[i] += self->grad[i] * bwd(an->data[i], self->data[i]);
        };
    }
    return Tensor(node);
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double, double g, double& ga, double& gb) { ga = g; gb = g; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double, double g, double& ga, double& gb) { ga = g; gb = -g; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double x, double y, double g, double& ga, double& gb) { ga = g * y; gb = g * x; });
}

inline Tensor relu(const Tensor& a) {
    return detail::unary_op(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor gelu(const Tensor& a) {
    // exact erf formulation: x * Phi(x)
    return detail::unary_op(
        a, "gelu", [](double x) { return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244)); },
        [](double x, double) {
            double phi = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
            double pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779;
            return phi + x * pdf;
        });
}

inline Tensor tanh_op(const Tensor& a) {
    return detail::unary_op(
        a, "tanh", [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

inline Tensor scale(const Tensor& a, double c) {
    return detail::unary_op(
        a, "scale", [c](double x) { return c * x; }, [c](double, double) { return c; });
}

// ---------------------------------------------------------------------------
// matmul (batched, broadcast batch dims)
// ---------------------------------------------------------------------------

namespace detail {

// C[m,n] += A[m,k] * B[k,n], row-major raw pointers; ikj order for locality
inline void mm_acc(const double* A, const double* B, double* C, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* a_row = A + i * k;
        double* c_row = C + i * n;
        for (size_t p = 0; p < k; ++p) {
            double av = a_row[p];
            const double* b_row = B + p * n;
            for (size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
        }
    }
}

// C[m,n] += A[k,m]^T * B[k,n]
inline void mm_acc_at(const double* A, const double* B, double* C, size_t m, size_t k, size_t n) {
    for (size_t p = 0; p < k; ++p) {
        const double* a_row = A + p * m;
        const double* b_row = B + p * n;
        for (size_t i = 0; i < m; ++i) {
            double av = a_row[i];
            double* c_row = C + i * n;
            for (size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
        }
    }
}

// C[m,n] += A[m,k] * B[n,k]^T
inline void mm_acc_bt(const double* A, const double* B, double* C, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* a_row = A + i * k;
        double* c_row = C + i * n;
        for (size_t j = 0; j < n; ++j) {
            const double* b_row = B + j * k;
            double acc = 0.0;
            for (size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
            c_row[j] += acc;
        }
    }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2)
        throw ShapeError("matmul: both inputs must have rank >= 2, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
    size_t m = a.shape()[a.rank() - 2], ka = a.shape()[a.rank() - 1];
    size_t kb = b.shape()[b.rank() - 2], n = b.shape()[b.rank() - 1];
    if (ka != kb)
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Shape ba(a.shape().begin(), a.shape().end() - 2);
    Shape bb(b.shape().begin(), b.shape().end() - 2);
    Shape batch = detail::broadcast_shape(ba, bb, "matmul");
    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    size_t nbatch = numel(batch);
    std::vector<double> out(nbatch * m * n, 0.0);

    auto sa = detail::broadcast_strides(ba, batch);
    auto sb = detail::broadcast_strides(bb, batch);
    size_t mat_a = m * ka, mat_b = ka * n, mat_c = m * n;
    std::vector<size_t> idx(batch.size(), 0);
    std::vector<size_t> offs_a(nbatch), offs_b(nbatch);
    for (size_t bi = 0; bi < nbatch; ++bi) {
        offs_a[bi] = detail::offset_for(idx, sa) * mat_a;
        offs_b[bi] = detail::offset_for(idx, sb) * mat_b;
        detail::mm_acc(a.data().data() + offs_a[bi], b.data().data() + offs_b[bi],
                       out.data() + bi * mat_c, m, ka, n);
        detail::advance_index(idx, batch);
    }
    detail::check_finite(out, "matmul");
    auto node = detail::make_node(out_shape, std::move(out), {a.node(), b.node()});
    if (node->requires_grad) {
        auto an = a.node();
        auto bn = b.node();
        Node* self = node.get();
        size_t kk = ka;
        node->backprop = [self, an, bn, offs_a, offs_b, nbatch, m, kk, n, mat_c]() {
            for (size_t bi = 0; bi < nbatch; ++bi) {
                const double* gC = self->grad.data() + bi * mat_c;
                if (an->requires_grad)  // dA = gC * B^T
                    detail::mm_acc_bt(gC, bn->data.data() + offs_b[bi], an->grad.data() + offs_a[bi],
                                      m, n, kk);
                if (bn->requires_grad)  // dB = A^T * gC
                    detail::mm_acc_at(an->data.data() + offs_a[bi], gC, bn->grad.data() + offs_b[bi],
                                      kk, m, n);
            }
        };
    }
    return Tensor(node);
}

inline Tensor transpose2d(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose2d: rank-2 tensor required, got " + shape_str(a.shape()));
    size_t r = a.shape()[0], c = a.shape()[1];
    std::vector<double> out(r * c);
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) out[j * r + i] = a.data()[i * c + j];
    auto node = detail::make_node({c, r}, std::move(out), {a.node()});
    if (node->requires_grad) {
        auto an = a.node();
        Node* self = node.get();
        node->backprop = [self, an, r, c]() {
            for (size_t i = 0; i < r; ++i)
                for (size_t j = 0; j < c; ++j) an->grad[i * c + j] += self->grad[j * r + i];
        };
    }
    return Tensor(node);
}

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.size())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    auto node = detail::make_node(std::move(shape), a.data(), {a.node()});
    if (node->requires_grad) {
        auto an = a.node();
        Node* self = node.get();
        node->backprop = [self, an]() {
            for (size_t i = 0; i < self->data.size(); ++i) an->grad[i] += self->grad[i];
        };
    }
    return Tensor(node);
}

// ---------------------------------------------------------------------------
// slicing / concatenation (rank-2)
// ---------------------------------------------------------------------------

inline Tensor row_slice(const Tensor& a, size_t r0, size_t r1) {
    if (a.rank() != 2 || r1 > a.shape()[0] || r0 >= r1)
        throw ShapeError("row_slice: invalid range [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ") for " + shape_str(a.shape()));
    size_t c = a.shape()[1];
    std::vector<double> out(a.data().begin() + r0 * c, a.data().begin() + r1 * c);
    auto node = detail::make_node({r1 - r0, c}, std::move(out), {a.node()});
    if (node->requires_grad) {
        auto an = a.node();
        Node* self = node.get();
        node->backprop = [self, an, r0, c]() {
            for (size_t i = 0; i < self->data.size(); ++i) an->grad[r0 * c + i] += self->grad[i];
        };
    }
    return Tensor(node);
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: empty input");
    size_t c = parts[0].shape()[1];
    size_t rows = 0;
    std::vector<std::shared_ptr<Node>> parents;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.shape()[1] != c)
            throw ShapeError("concat_rows: column mismatch at " + shape_str(p.shape()));
        rows += p.shape()[0];
        parents.push_back(p.node());
    }
    std::vector<double> out;
    out.reserve(rows * c);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    auto node = detail::make_node({rows, c}, std::move(out), std::move(parents));
    if (node->requires_grad) {
        Node* self = node.get();
        auto ps = node->parents;
        node->backprop = [self, ps]() {
            size_t off = 0;
            for (auto& p : ps) {
                if (p->requires_grad)
                    for (size_t i = 0; i < p->data.size(); ++i) p->grad[i] += self->grad[off + i];
                off += p->data.size();
            }
        };
    }
    return Tensor(node);
}

inline Tensor col_slice(const Tensor& a, size_t c0, size_t c1) {
    if (a.rank() != 2 || c1 > a.shape()[1] || c0 >= c1)
        throw ShapeError("col_slice: invalid range for " + shape_str(a.shape()));
    size_t r = a.shape()[0], c = a.shape()[1], w = c1 - c0;
    std::vector<double> out(r * w);
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < w; ++j) out[i * w + j] = a.data()[i * c + c0 + j];
    auto node = detail::make_node({r, w}, std::move(out), {a.node()});
    if (node->requires_grad) {
        auto an = a.node();
        Node* self = node.get();
        node->backprop = [self, an, r, c, c0, w]() {
            for (size_t i = 0; i < r; ++i)
                for (size_t j = 0; j < w; ++j) an->grad[i * c + c0 + j] += self->grad[i * w + j];
        };
    }
    return Tensor(node);
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: empty input");
    size_t r = parts[0].shape()[0];
    size_t cols = 0;
    std::vector<std::shared_ptr<Node>> parents;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.shape()[0] != r)
            throw ShapeError("concat_cols: row mismatch at " + shape_str(p.shape()));
        cols += p.shape()[1];
        parents.push_back(p.node());
    }
    std::vector<double> out(r * cols);
    size_t off = 0;
    for (const auto& p : parts) {
        size_t w = p.shape()[1];
        for (size_t i = 0; i < r; ++i)
            for (size_t j = 0; j < w; ++j) out[i * cols + off + j] = p.data()[i * w + j];
        off += w;
    }
    auto node = detail::make_node({r, cols}, std::move(out), std::move(parents));
    if (node->requires_grad) {
        Node* self = node.get();
        auto ps = node->parents;
        node->backprop = [self, ps, r, cols]() {
            size_t off = 0;
            for (auto& p : ps) {
                size_t w = p->shape[1];
                if (p->requires_grad)
                    for (size_t i = 0; i < r; ++i)
                        for (size_t j = 0; j < w; ++j) p->grad[i * w + j] += self->grad[i * cols + off + j];
                off += w;
            }
        };
    }
    return Tensor(node);
}

// picks one row of a [R,C] matrix (embedding lookup)
inline Tensor row_select(const Tensor& a, size_t row) {
    return row_slice(a, row, row + 1);
}

// tiles a [1,C] row n times into [n,C]
inline Tensor repeat_rows(const Tensor& a, size_t n) {
    if (a.rank() != 2 || a.shape()[0] != 1) throw ShapeError("repeat_rows: [1,C] input required");
    size_t c = a.shape()[1];
    std::vector<double> out(n * c);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < c; ++j) out[i * c + j] = a.data()[j];
    auto node = detail::make_node({n, c}, std::move(out), {a.node()});
    if (node->requires_grad) {
        auto an = a.node();
        Node* self = node.get();
        node->backprop = [self, an, n, c]() {
            for (size_t i = 0; i < n; ++i)
                for (size_t j = 0; j < c; ++j) an->grad[j] += self->grad[i * c + j];
        };
    }
    return Tensor(node);
}

// out[h,j,:d] = z[h,:], out[h,j,d:] = e[j,:]; the fusion input of the point
// track head: horizon embeddings broadcast across points, point features
// broadcast across the horizon
inline Tensor broadcast_concat(const Tensor& z, const Tensor& e) {
    if (z.rank() != 2 || e.rank() != 2 || z.shape()[1] != e.shape()[1])
        throw ShapeError("broadcast_concat: need [H,d] and [Np,d] with equal d, got " +
                         shape_str(z.shape()) + " and " + shape_str(e.shape()));
    size_t H = z.shape()[0], Np = e.shape()[0], d = z.shape()[1];
    std::vector<double> out(H * Np * 2 * d);
    for (size_t h = 0; h < H; ++h)
        for (size_t j = 0; j < Np; ++j) {
            double* cell = out.data() + (h * Np + j) * 2 * d;
            std::memcpy(cell, z.data().data() + h * d, d * sizeof(double));
            std::memcpy(cell + d, e.data().data() + j * d, d * sizeof(double));
        }
    auto node = detail::make_node({H, Np, 2 * d}, std::move(out), {z.node(), e.node()});
    if (node->requires_grad) {
        auto zn = z.node();
        auto en = e.node();
        Node* self = node.get();
        node->backprop = [self, zn, en, H, Np, d]() {
            for (size_t h = 0; h < H; ++h)
                for (size_t j = 0; j < Np; ++j) {
                    const double* g = self->grad.data() + (h * Np + j) * 2 * d;
                    if (zn->requires_grad)
                        for (size_t x = 0; x < d; ++x) zn->grad[h * d + x] += g[x];
                    if (en->requires_grad)
                        for (size_t x = 0; x < d; ++x) en->grad[j * d + x] += g[d + x];
                }
        };
    }
    return Tensor(node);
}

// ---------------------------------------------------------------------------
// masked softmax (rows of a [Tq,Tk] score matrix)
// ---------------------------------------------------------------------------

// mask[i*Tk+j] != 0 means query i may attend key j. Disallowed entries get
// probability exactly 0.0 and receive zero gradient, so appending masked-out
// keys leaves allowed rows bitwise unchanged.
inline Tensor masked_softmax_rows(const Tensor& scores, const std::vector<uint8_t>& mask) {
    if (scores.rank() != 2) throw ShapeError("masked_softmax_rows: rank-2 input required");
    size_t tq = scores.shape()[0], tk = scores.shape()[1];
    if (mask.size() != tq * tk) throw ShapeError("masked_softmax_rows: mask size mismatch");
    std::vector<double> out(tq * tk, 0.0);
    for (size_t i = 0; i < tq; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < tk; ++j)
            if (mask[i * tk + j] && scores.data()[i * tk + j] > mx) mx = scores.data()[i * tk + j];
        if (!std::isfinite(mx))
            throw NumericError("masked_softmax_rows: query row " + std::to_string(i) +
                               " has no allowed keys");
        double sum = 0.0;
        for (size_t j = 0; j < tk; ++j)
            if (mask[i * tk + j]) {
                double e = std::exp(scores.data()[i * tk + j] - mx);
                out[i * tk + j] = e;
                sum += e;
            }
        double inv = 1.0 / sum;
        for (size_t j = 0; j < tk; ++j)
            if (mask[i * tk + j]) out[i * tk + j] *= inv;
    }
    auto node = detail::make_node({tq, tk}, std::move(out), {scores.node()});
    if (node->requires_grad) {
        auto sn = scores.node();
        Node* self = node.get();
        auto m = mask;
        node->backprop = [self, sn, m, tq, tk]() {
            for (size_t i = 0; i < tq; ++i) {
                double dot = 0.0;
                for (size_t j = 0; j < tk; ++j)
                    if (m[i * tk + j]) dot += self->grad[i * tk + j] * self->data[i * tk + j];
                for (size_t j = 0; j < tk; ++j)
                    if (m[i * tk + j])
                        sn->grad[i * tk + j] +=
                            self->data[i * tk + j] * (self->grad[i * tk + j] - dot);
            }
        };
    }
    return Tensor(node);
}

// ---------------------------------------------------------------------------
// reductions and losses
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) s += x;
    auto node = detail::make_node({1}, {s}, {a.node()});
    if (node->requires_grad) {
        auto an = a.node();
        Node* self = node.get();
        node->backprop = [self, an]() {
            for (double& g : an->grad) g += self->grad[0];
        };
    }
    return Tensor(node);
}

inline Tensor mean_all(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) s += x;
    double inv = 1.0 / static_cast<double>(a.size());
    auto node = detail::make_node({1}, {s * inv}, {a.node()});
    if (node->requires_grad) {
        auto an = a.node();
        Node* self = node.get();
        node->backprop = [self, an, inv]() {
            for (double& g : an->grad) g += self->grad[0] * inv;
        };
    }
    return Tensor(node);
}

// mean over rows of [R,C] -> [1,C]
inline Tensor mean_rows(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("mean_rows: rank-2 input required");
    size_t r = a.shape()[0], c = a.shape()[1];
    double inv = 1.0 / static_cast<double>(r);
    std::vector<double> out(c, 0.0);
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) out[j] += a.data()[i * c + j];
    for (double& x : out) x *= inv;
    auto node = detail::make_node({1, c}, std::move(out), {a.node()});
    if (node->requires_grad) {
        auto an = a.node();
        Node* self = node.get();
        node->backprop = [self, an, r, c, inv]() {
            for (size_t i = 0; i < r; ++i)
                for (size_t j = 0; j < c; ++j) an->grad[i * c + j] += self->grad[j] * inv;
        };
    }
    return Tensor(node);
}

// mean |pred - target|; subgradient at exact ties is 0
inline Tensor l1_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape())
        throw ShapeError("l1_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    size_t n = pred.size();
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += std::fabs(pred.data()[i] - target.data()[i]);
    double inv = 1.0 / static_cast<double>(n);
    auto node = detail::make_node({1}, {s * inv}, {pred.node(), target.node()});
    if (node->requires_grad) {
        auto pn = pred.node();
        auto tn = target.node();
        Node* self = node.get();
        node->backprop = [self, pn, tn, n, inv]() {
            for (size_t i = 0; i < n; ++i) {
                double d = pn->data[i] - tn->data[i];
                double sg = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                double g = self->grad[0] * inv * sg;
                if (pn->requires_grad) pn->grad[i] += g;
                if (tn->requires_grad) tn->grad[i] -= g;
            }
        };
    }
    return Tensor(node);
}

// mean (pred - target)^2
inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape())
        throw ShapeError("mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    size_t n = pred.size();
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double d = pred.data()[i] - target.data()[i];
        s += d * d;
    }
    double inv = 1.0 / static_cast<double>(n);
    auto node = detail::make_node({1}, {s * inv}, {pred.node(), target.node()});
    if (node->requires_grad) {
        auto pn = pred.node();
        auto tn = target.node();
        Node* self = node.get();
        node->backprop = [self, pn, tn, n, inv]() {
            for (size_t i = 0; i < n; ++i) {
                double g = self->grad[0] * inv * 2.0 * (pn->data[i] - tn->data[i]);
                if (pn->requires_grad) pn->grad[i] += g;
                if (tn->requires_grad) tn->grad[i] -= g;
            }
        };
    }
    return Tensor(node);
}

// single-head scaled dot-product attention with a boolean mask
inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const std::vector<uint8_t>& mask) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.shape()[1] != k.shape()[1] ||
        k.shape()[0] != v.shape()[0])
        throw ShapeError("attention: incompatible shapes " + shape_str(q.shape()) + ", " +
                         shape_str(k.shape()) + ", " + shape_str(v.shape()));
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.shape()[1]));
    Tensor scores = scale(matmul(q, transpose2d(k)), inv_sqrt_d);
    Tensor probs = masked_softmax_rows(scores, mask);
    return matmul(probs, v);
}

inline std::vector<uint8_t> full_mask(size_t tq, size_t tk) {
    return std::vector<uint8_t>(tq * tk, 1);
}

inline Tensor sum_of(const std::vector<Tensor>& ts) {
    if (ts.empty()) throw ShapeError("sum_of: empty input");
    Tensor acc = ts[0];
    for (size_t i = 1; i < ts.size(); ++i) acc = add(acc, ts[i]);
    return acc;
}

// ---------------------------------------------------------------------------
// backward pass
// ---------------------------------------------------------------------------

inline void backward(const Tensor& loss) {
    if (loss.size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    // collect the reachable subgraph, then replay it in reverse insertion order
    std::vector<Node*> stack{loss.node().get()};
    std::vector<Node*> reach;
    std::unordered_set<Node*> visited;
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        if (!visited.insert(n).second) continue;
        reach.push_back(n);
        for (auto& p : n->parents) stack.push_back(p.get());
    }
    std::sort(reach.begin(), reach.end(), [](Node* a, Node* b) { return a->id > b->id; });
    for (Node* n : reach)
        if (n->requires_grad) n->ensure_grad();
    loss.node()->ensure_grad();
    loss.node()->grad[0] = 1.0;
    for (Node* n : reach)
        if (n->requires_grad && n->backprop) n->backprop();
}

}  // namespace pri4r
