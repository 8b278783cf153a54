#pragma once

// Dense 64-bit tensors (rank 0..2) with tape-based reverse-mode differentiation.
//
// Every differentiable primitive pushes one pullback closure onto a Tape while
// it executes, so execution order doubles as a topological order and the
// backward pass is a single reverse walk of the tape. Gradients accumulate
// (+=) into leaf tensors; callers zero them between steps. A tape can be swept
// exactly once per recording.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "aao/errors.hpp"

namespace aao {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

class Tensor {
public:
    Tensor() : d_(std::make_shared<Data>()) {}

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        Tensor t;
        t.d_->shape = std::move(shape);
        t.d_->v.assign(shape_numel(t.d_->shape), 0.0);
        t.set_requires_grad(requires_grad);
        return t;
    }

    static Tensor full(Shape shape, double value, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        std::fill(t.d_->v.begin(), t.d_->v.end(), value);
        return t;
    }

    static Tensor scalar(double value, bool requires_grad = false) {
        Tensor t = zeros({}, requires_grad);
        t.d_->v[0] = value;
        return t;
    }

    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
        if (shape_numel(shape) != values.size())
            throw shape_error("tensor: " + shape_str(shape) + " cannot hold " +
                              std::to_string(values.size()) + " values");
        Tensor t;
        t.d_->shape = std::move(shape);
        t.d_->v = std::move(values);
        t.set_requires_grad(requires_grad);
        return t;
    }

    const Shape& shape() const { return d_->shape; }
    std::size_t rank() const { return d_->shape.size(); }
    std::size_t numel() const { return d_->v.size(); }
    std::size_t rows() const { return d_->shape.size() > 0 ? d_->shape[0] : 1; }
    std::size_t cols() const { return d_->shape.size() > 1 ? d_->shape[1] : 1; }

    // Tensor is a shared handle: copies alias one buffer, and const applies to
    // the handle, not the storage (pullback closures mutate grads through
    // captured copies).
    std::vector<double>& values() const { return d_->v; }
    double* data() const { return d_->v.data(); }
    double& at(std::size_t i) const { return d_->v[i]; }
    double& at(std::size_t r, std::size_t c) const { return d_->v[r * cols() + c]; }

    bool requires_grad() const { return d_->rg; }
    void set_requires_grad(bool rg) const {
        d_->rg = rg;
        if (rg && d_->g.size() != d_->v.size()) d_->g.assign(d_->v.size(), 0.0);
        if (!rg) d_->g.clear();
    }

    std::vector<double>& grad() const {
        if (!d_->rg) throw contract_error("grad requested on tensor without requires_grad");
        return d_->g;
    }
    void zero_grad() const {
        if (d_->rg) std::fill(d_->g.begin(), d_->g.end(), 0.0);
    }

    // Scalar extraction; contract error on non-scalar tensors.
    double item() const {
        if (numel() != 1) throw contract_error("item() on tensor of shape " + shape_str(shape()));
        return d_->v[0];
    }

    bool all_finite() const {
        for (double x : d_->v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    // Detached deep copy (fresh storage, no grad tracking).
    Tensor clone_detached() const {
        Tensor t;
        t.d_->shape = d_->shape;
        t.d_->v = d_->v;
        return t;
    }

    bool same_storage(const Tensor& o) const { return d_ == o.d_; }

private:
    struct Data {
        Shape shape;
        std::vector<double> v;
        std::vector<double> g;
        bool rg = false;
    };
    std::shared_ptr<Data> d_;
};

// Ordered record of executed primitives. Backward = one reverse sweep.
class Tape {
public:
    void record(std::function<void()> pullback) { pullbacks_.push_back(std::move(pullback)); }

    std::size_t size() const { return pullbacks_.size(); }
    bool swept() const { return swept_; }

    void reset() {
        pullbacks_.clear();
        swept_ = false;
    }

    // Seeds d(root)/d(root) = seed and propagates through every recorded
    // pullback in reverse order. Root must be a scalar that tracks gradients.
    void backward(Tensor root, double seed = 1.0) {
        if (swept_) throw contract_error("tape already swept; re-record before calling backward again");
        if (root.numel() != 1)
            throw contract_error("backward root must be scalar, got " + shape_str(root.shape()));
        if (!root.requires_grad())
            throw contract_error("backward root does not track gradients");
        root.grad()[0] += seed;
        for (auto it = pullbacks_.rbegin(); it != pullbacks_.rend(); ++it) (*it)();
        swept_ = true;
    }

private:
    std::vector<std::function<void()>> pullbacks_;
    bool swept_ = false;
};

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw shape_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
}

inline bool tracked(const Tape* tape, const Tensor& a) { return tape && a.requires_grad(); }
inline bool tracked(const Tape* tape, const Tensor& a, const Tensor& b) {
    return tape && (a.requires_grad() || b.requires_grad());
}

inline Tensor make_result(Shape shape, bool track) {
    return Tensor::zeros(std::move(shape), track);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise binary
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
    detail::check_same_shape(a, b, "add");
    const bool track = detail::tracked(tape, a, b);
    Tensor c = detail::make_result(a.shape(), track);
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) c.at(i) = a.at(i) + b.at(i);
    if (track)
        tape->record([a, b, c]() {
            const std::size_t n = c.numel();
            if (a.requires_grad())
                for (std::size_t i = 0; i < n; ++i) a.grad()[i] += c.grad()[i];
            if (b.requires_grad())
                for (std::size_t i = 0; i < n; ++i) b.grad()[i] += c.grad()[i];
        });
    return c;
}

inline Tensor sub(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
    detail::check_same_shape(a, b, "sub");
    const bool track = detail::tracked(tape, a, b);
    Tensor c = detail::make_result(a.shape(), track);
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) c.at(i) = a.at(i) - b.at(i);
    if (track)
        tape->record([a, b, c]() {
            const std::size_t n = c.numel();
            if (a.requires_grad())
                for (std::size_t i = 0; i < n; ++i) a.grad()[i] += c.grad()[i];
            if (b.requires_grad())
                for (std::size_t i = 0; i < n; ++i) b.grad()[i] -= c.grad()[i];
        });
    return c;
}

inline Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
    detail::check_same_shape(a, b, "mul");
    const bool track = detail::tracked(tape, a, b);
    Tensor c = detail::make_result(a.shape(), track);
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) c.at(i) = a.at(i) * b.at(i);
    if (track)
        tape->record([a, b, c]() {
            const std::size_t n = c.numel();
            if (a.requires_grad())
                for (std::size_t i = 0; i < n; ++i) a.grad()[i] += c.grad()[i] * b.at(i);
            if (b.requires_grad())
                for (std::size_t i = 0; i < n; ++i) b.grad()[i] += c.grad()[i] * a.at(i);
        });
    return c;
}

inline Tensor div(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
    detail::check_same_shape(a, b, "div");
    const bool track = detail::tracked(tape, a, b);
    Tensor c = detail::make_result(a.shape(), track);
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) c.at(i) = a.at(i) / b.at(i);
    if (track)
        tape->record([a, b, c]() {
            const std::size_t n = c.numel();
            if (a.requires_grad())
                for (std::size_t i = 0; i < n; ++i) a.grad()[i] += c.grad()[i] / b.at(i);
            if (b.requires_grad())
                for (std::size_t i = 0; i < n; ++i)
                    b.grad()[i] -= c.grad()[i] * a.at(i) / (b.at(i) * b.at(i));
        });
    return c;
}

// Elementwise minimum; ties route the gradient to the first operand.
inline Tensor min2(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
    detail::check_same_shape(a, b, "min2");
    const bool track = detail::tracked(tape, a, b);
    Tensor c = detail::make_result(a.shape(), track);
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) c.at(i) = a.at(i) <= b.at(i) ? a.at(i) : b.at(i);
    if (track)
        tape->record([a, b, c]() {
            const std::size_t n = c.numel();
            for (std::size_t i = 0; i < n; ++i) {
                if (a.at(i) <= b.at(i)) {
                    if (a.requires_grad()) a.grad()[i] += c.grad()[i];
                } else if (b.requires_grad()) {
                    b.grad()[i] += c.grad()[i];
                }
            }
        });
    return c;
}

inline Tensor max2(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
    detail::check_same_shape(a, b, "max2");
    const bool track = detail::tracked(tape, a, b);
    Tensor c = detail::make_result(a.shape(), track);
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) c.at(i) = a.at(i) >= b.at(i) ? a.at(i) : b.at(i);
    if (track)
        tape->record([a, b, c]() {
            const std::size_t n = c.numel();
            for (std::size_t i = 0; i < n; ++i) {
                if (a.at(i) >= b.at(i)) {
                    if (a.requires_grad()) a.grad()[i] += c.grad()[i];
                } else if (b.requires_grad()) {
                    b.grad()[i] += c.grad()[i];
                }
            }
        });
    return c;
}

// ---------------------------------------------------------------------------
// scalar-constant and scalar-tensor broadcasts
// ---------------------------------------------------------------------------

inline Tensor scale(const Tensor& a, double k, Tape* tape = nullptr) {
    const bool track = detail::tracked(tape, a);
    Tensor c = detail::make_result(a.shape(), track);
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) c.at(i) = a.at(i) * k;
    if (track)
        tape->record([a, c, k]() {
            const std::size_t n = c.numel();
            for (std::size_t i = 0; i < n; ++i) a.grad()[i] += c.grad()[i] * k;
        });
    return c;
}

inline Tensor add_const(const Tensor& a, double k, Tape* tape = nullptr) {
    const bool track = detail::tracked(tape, a);
    Tensor c = detail::make_result(a.shape(), track);
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) c.at(i) = a.at(i) + k;
    if (track)
        tape->record([a, c]() {
            const std::size_t n = c.numel();
            for (std::size_t i = 0; i < n; ++i) a.grad()[i] += c.grad()[i];
        });
    return c;
}

inline Tensor neg(const Tensor& a, Tape* tape = nullptr) { return scale(a, -1.0, tape); }

namespace detail {
inline void check_scalar(const Tensor& s, const char* op) {
    if (s.numel() != 1)
        throw shape_error(std::string(op) + ": broadcast operand must be scalar, got " +
                          shape_str(s.shape()));
}
}  // namespace detail

// v op s with s a rank-0 tensor broadcast over all of v.
inline Tensor add_scalar(const Tensor& v, const Tensor& s, Tape* tape = nullptr) {
    detail::check_scalar(s, "add_scalar");
    const bool track = detail::tracked(tape, v, s);
    Tensor c = detail::make_result(v.shape(), track);
    const std::size_t n = v.numel();
    const double sv = s.at(std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) c.at(i) = v.at(i) + sv;
    if (track)
        tape->record([v, s, c]() {
            const std::size_t n = c.numel();
            if (v.requires_grad())
                for (std::size_t i = 0; i < n; ++i) v.grad()[i] += c.grad()[i];
            if (s.requires_grad()) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += c.grad()[i];
                s.grad()[0] += acc;
            }
        });
    return c;
}

inline Tensor sub_scalar(const Tensor& v, const Tensor& s, Tape* tape = nullptr) {
    detail::check_scalar(s, "sub_scalar");
    const bool track = detail::tracked(tape, v, s);
    Tensor c = detail::make_result(v.shape(), track);
    const std::size_t n = v.numel();
    const double sv = s.at(std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) c.at(i) = v.at(i) - sv;
    if (track)
        tape->record([v, s, c]() {
            const std::size_t n = c.numel();
            if (v.requires_grad())
                for (std::size_t i = 0; i < n; ++i) v.grad()[i] += c.grad()[i];
            if (s.requires_grad()) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += c.grad()[i];
                s.grad()[0] -= acc;
            }
        });
    return c;
}

inline Tensor mul_scalar(const Tensor& v, const Tensor& s, Tape* tape = nullptr) {
    detail::check_scalar(s, "mul_scalar");
    const bool track = detail::tracked(tape, v, s);
    Tensor c = detail::make_result(v.shape(), track);
    const std::size_t n = v.numel();
    const double sv = s.at(std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) c.at(i) = v.at(i) * sv;
    if (track)
        tape->record([v, s, c]() {
            const std::size_t n = c.numel();
            const double sv = s.at(std::size_t{0});
            if (v.requires_grad())
                for (std::size_t i = 0; i < n; ++i) v.grad()[i] += c.grad()[i] * sv;
            if (s.requires_grad()) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += c.grad()[i] * v.at(i);
                s.grad()[0] += acc;
            }
        });
    return c;
}

inline Tensor div_scalar(const Tensor& v, const Tensor& s, Tape* tape = nullptr) {
    detail::check_scalar(s, "div_scalar");
    const bool track = detail::tracked(tape, v, s);
    Tensor c = detail::make_result(v.shape(), track);
    const std::size_t n = v.numel();
    const double sv = s.at(std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) c.at(i) = v.at(i) / sv;
    if (track)
        tape->record([v, s, c]() {
            const std::size_t n = c.numel();
            const double sv = s.at(std::size_t{0});
            if (v.requires_grad())
                for (std::size_t i = 0; i < n; ++i) v.grad()[i] += c.grad()[i] / sv;
            if (s.requires_grad()) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += c.grad()[i] * v.at(i);
                s.grad()[0] -= acc / (sv * sv);
            }
        });
    return c;
}

// ---------------------------------------------------------------------------
// elementwise unary
// ---------------------------------------------------------------------------

namespace detail {

template <class Fwd, class Pull>
Tensor unary_op(const Tensor& a, Tape* tape, Fwd fwd, Pull pull) {
    const bool track = tracked(tape, a);
    Tensor c = make_result(a.shape(), track);
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) c.at(i) = fwd(a.at(i));
    if (track)
        tape->record([a, c, pull]() {
            const std::size_t n = c.numel();
            for (std::size_t i = 0; i < n; ++i) a.grad()[i] += c.grad()[i] * pull(a.at(i), c.at(i));
        });
    return c;
}

}  // namespace detail

inline Tensor exp(const Tensor& a, Tape* tape = nullptr) {
    return detail::unary_op(
        a, tape, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a, Tape* tape = nullptr) {
    return detail::unary_op(
        a, tape, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor sqrt(const Tensor& a, Tape* tape = nullptr) {
    return detail::unary_op(
        a, tape, [](double x) { return std::sqrt(x); },
        [](double, double y) { return 0.5 / y; });
}

inline Tensor recip(const Tensor& a, Tape* tape = nullptr) {
    return detail::unary_op(
        a, tape, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

inline Tensor square(const Tensor& a, Tape* tape = nullptr) {
    return detail::unary_op(
        a, tape, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Tensor relu(const Tensor& a, Tape* tape = nullptr) {
    return detail::unary_op(
        a, tape, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor tanh(const Tensor& a, Tape* tape = nullptr) {
    return detail::unary_op(
        a, tape, [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

inline double sigmoid_value(double x) {
    // Saturation-safe in both directions.
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log(sigmoid(x)) = -softplus(-x), computed without overflow for large |x|.
inline double log_sigmoid_value(double x) {
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

inline Tensor sigmoid(const Tensor& a, Tape* tape = nullptr) {
    return detail::unary_op(
        a, tape, [](double x) { return sigmoid_value(x); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Tensor log_sigmoid(const Tensor& a, Tape* tape = nullptr) {
    return detail::unary_op(
        a, tape, [](double x) { return log_sigmoid_value(x); },
        [](double x, double) { return 1.0 - sigmoid_value(x); });
}

// ---------------------------------------------------------------------------
// matrix ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
        throw shape_error("matmul: incompatible shapes " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    const bool track = detail::tracked(tape, a, b);
    Tensor c = detail::make_result({m, n}, track);
    {
        const double* pa = a.data();
        const double* pb = b.data();
        double* pc = c.data();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const double av = pa[i * k + p];
                const double* brow = pb + p * n;
                double* crow = pc + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
    }
    if (track)
        tape->record([a, b, c, m, k, n]() {
            const double* gc = c.grad().data();
            if (a.requires_grad()) {
                double* ga = a.grad().data();
                const double* pb = b.data();
                // dA = dC * B^T
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double* gcrow = gc + i * n;
                        const double* brow = pb + p * n;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) acc += gcrow[j] * brow[j];
                        ga[i * k + p] += acc;
                    }
            }
            if (b.requires_grad()) {
                double* gb = b.grad().data();
                const double* pa = a.data();
                // dB = A^T * dC
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = pa[i * k + p];
                        const double* gcrow = gc + i * n;
                        double* gbrow = gb + p * n;
                        for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * gcrow[j];
                    }
            }
        });
    return c;
}

inline Tensor transpose(const Tensor& a, Tape* tape = nullptr) {
    if (a.rank() != 2) throw shape_error("transpose: expects rank-2, got " + shape_str(a.shape()));
    const std::size_t r = a.rows(), c0 = a.cols();
    const bool track = detail::tracked(tape, a);
    Tensor c = detail::make_result({c0, r}, track);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c0; ++j) c.at(j, i) = a.at(i, j);
    if (track)
        tape->record([a, c, r, c0]() {
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c0; ++j) a.grad()[i * c0 + j] += c.grad()[j * r + i];
        });
    return c;
}

inline Tensor reshape(const Tensor& a, Shape new_shape, Tape* tape = nullptr) {
    if (shape_numel(new_shape) != a.numel())
        throw shape_error("reshape: " + shape_str(a.shape()) + " to " + shape_str(new_shape));
    const bool track = detail::tracked(tape, a);
    Tensor c = detail::make_result(std::move(new_shape), track);
    c.values() = a.values();
    if (track)
        tape->record([a, c]() {
            const std::size_t n = c.numel();
            for (std::size_t i = 0; i < n; ++i) a.grad()[i] += c.grad()[i];
        });
    return c;
}

// Stacks b's rows below a's rows.
inline Tensor concat_rows(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols())
        throw shape_error("concat_rows: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::size_t ra = a.rows(), rb = b.rows(), c0 = a.cols();
    const bool track = detail::tracked(tape, a, b);
    Tensor c = detail::make_result({ra + rb, c0}, track);
    std::copy(a.values().begin(), a.values().end(), c.values().begin());
    std::copy(b.values().begin(), b.values().end(), c.values().begin() + ra * c0);
    if (track)
        tape->record([a, b, c, ra, rb, c0]() {
            if (a.requires_grad())
                for (std::size_t i = 0; i < ra * c0; ++i) a.grad()[i] += c.grad()[i];
            if (b.requires_grad())
                for (std::size_t i = 0; i < rb * c0; ++i) b.grad()[i] += c.grad()[ra * c0 + i];
        });
    return c;
}

// Embedding-style row lookup. Gradients scatter-add into the source rows.
inline Tensor gather_rows(const Tensor& table, const std::vector<int>& ids, Tape* tape = nullptr) {
    if (table.rank() != 2)
        throw shape_error("gather_rows: table must be rank-2, got " + shape_str(table.shape()));
    const std::size_t r = table.rows(), c0 = table.cols();
    for (int id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= r)
            throw vocab_error("gather_rows: id " + std::to_string(id) + " out of range [0, " +
                              std::to_string(r) + ")");
    const bool track = detail::tracked(tape, table);
    Tensor c = detail::make_result({ids.size(), c0}, track);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const std::size_t off = static_cast<std::size_t>(ids[i]) * c0;
        std::copy(table.values().begin() + off, table.values().begin() + off + c0,
                  c.values().begin() + i * c0);
    }
    if (track)
        tape->record([table, c, ids, c0]() {
            for (std::size_t i = 0; i < ids.size(); ++i) {
                double* dst = table.grad().data() + static_cast<std::size_t>(ids[i]) * c0;
                const double* src = c.grad().data() + i * c0;
                for (std::size_t j = 0; j < c0; ++j) dst[j] += src[j];
            }
        });
    return c;
}

// Picks m[rows[i], cols[i]] for each i into a vector.
inline Tensor gather_nd(const Tensor& m, const std::vector<std::size_t>& row_idx,
                        const std::vector<int>& col_idx, Tape* tape = nullptr) {
    if (m.rank() != 2) throw shape_error("gather_nd: expects rank-2, got " + shape_str(m.shape()));
    if (row_idx.size() != col_idx.size())
        throw contract_error("gather_nd: row/col index count mismatch");
    const std::size_t r = m.rows(), c0 = m.cols();
    for (std::size_t i = 0; i < row_idx.size(); ++i)
        if (row_idx[i] >= r || col_idx[i] < 0 || static_cast<std::size_t>(col_idx[i]) >= c0)
            throw vocab_error("gather_nd: index (" + std::to_string(row_idx[i]) + ", " +
                              std::to_string(col_idx[i]) + ") outside " + shape_str(m.shape()));
    const bool track = detail::tracked(tape, m);
    Tensor c = detail::make_result({row_idx.size()}, track);
    for (std::size_t i = 0; i < row_idx.size(); ++i) c.at(i) = m.at(row_idx[i], col_idx[i]);
    if (track)
        tape->record([m, c, row_idx, col_idx, c0]() {
            for (std::size_t i = 0; i < row_idx.size(); ++i)
                m.grad()[row_idx[i] * c0 + static_cast<std::size_t>(col_idx[i])] += c.grad()[i];
        });
    return c;
}

inline Tensor add_row_broadcast(const Tensor& m, const Tensor& bias, Tape* tape = nullptr) {
    if (m.rank() != 2 || bias.rank() != 1 || bias.numel() != m.cols())
        throw shape_error("add_row_broadcast: " + shape_str(m.shape()) + " vs " +
                          shape_str(bias.shape()));
    const std::size_t r = m.rows(), c0 = m.cols();
    const bool track = detail::tracked(tape, m, bias);
    Tensor c = detail::make_result({r, c0}, track);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c0; ++j) c.at(i, j) = m.at(i, j) + bias.at(j);
    if (track)
        tape->record([m, bias, c, r, c0]() {
            if (m.requires_grad())
                for (std::size_t i = 0; i < r * c0; ++i) m.grad()[i] += c.grad()[i];
            if (bias.requires_grad())
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c0; ++j) bias.grad()[j] += c.grad()[i * c0 + j];
        });
    return c;
}

// Row r of m scaled by v[r].
inline Tensor mul_col_broadcast(const Tensor& m, const Tensor& v, Tape* tape = nullptr) {
    if (m.rank() != 2 || v.rank() != 1 || v.numel() != m.rows())
        throw shape_error("mul_col_broadcast: " + shape_str(m.shape()) + " vs " +
                          shape_str(v.shape()));
    const std::size_t r = m.rows(), c0 = m.cols();
    const bool track = detail::tracked(tape, m, v);
    Tensor c = detail::make_result({r, c0}, track);
    for (std::size_t i = 0; i < r; ++i) {
        const double vi = v.at(i);
        for (std::size_t j = 0; j < c0; ++j) c.at(i, j) = m.at(i, j) * vi;
    }
    if (track)
        tape->record([m, v, c, r, c0]() {
            if (m.requires_grad())
                for (std::size_t i = 0; i < r; ++i) {
                    const double vi = v.at(i);
                    for (std::size_t j = 0; j < c0; ++j)
                        m.grad()[i * c0 + j] += c.grad()[i * c0 + j] * vi;
                }
            if (v.requires_grad())
                for (std::size_t i = 0; i < r; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < c0; ++j)
                        acc += c.grad()[i * c0 + j] * m.at(i, j);
                    v.grad()[i] += acc;
                }
        });
    return c;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& a, Tape* tape = nullptr) {
    const bool track = detail::tracked(tape, a);
    Tensor c = detail::make_result({}, track);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += a.at(i);
    c.at(std::size_t{0}) = acc;
    if (track)
        tape->record([a, c]() {
            const double g = c.grad()[0];
            for (std::size_t i = 0; i < a.numel(); ++i) a.grad()[i] += g;
        });
    return c;
}

inline Tensor col_sums(const Tensor& m, Tape* tape = nullptr) {
    if (m.rank() != 2) throw shape_error("col_sums: expects rank-2, got " + shape_str(m.shape()));
    const std::size_t r = m.rows(), c0 = m.cols();
    const bool track = detail::tracked(tape, m);
    Tensor c = detail::make_result({c0}, track);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c0; ++j) c.at(j) += m.at(i, j);
    if (track)
        tape->record([m, c, r, c0]() {
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c0; ++j) m.grad()[i * c0 + j] += c.grad()[j];
        });
    return c;
}

inline Tensor row_sums(const Tensor& m, Tape* tape = nullptr) {
    if (m.rank() != 2) throw shape_error("row_sums: expects rank-2, got " + shape_str(m.shape()));
    const std::size_t r = m.rows(), c0 = m.cols();
    const bool track = detail::tracked(tape, m);
    Tensor c = detail::make_result({r}, track);
    for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c0; ++j) acc += m.at(i, j);
        c.at(i) = acc;
    }
    if (track)
        tape->record([m, c, r, c0]() {
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c0; ++j) m.grad()[i * c0 + j] += c.grad()[i];
        });
    return c;
}

// Per-row maximum; gradient routes to the first attaining column.
inline Tensor row_max(const Tensor& m, Tape* tape = nullptr) {
    if (m.rank() != 2) throw shape_error("row_max: expects rank-2, got " + shape_str(m.shape()));
    const std::size_t r = m.rows(), c0 = m.cols();
    if (c0 == 0) throw contract_error("row_max: empty rows");
    const bool track = detail::tracked(tape, m);
    Tensor c = detail::make_result({r}, track);
    std::vector<std::size_t> arg(r, 0);
    for (std::size_t i = 0; i < r; ++i) {
        double best = m.at(i, 0);
        std::size_t bj = 0;
        for (std::size_t j = 1; j < c0; ++j)
            if (m.at(i, j) > best) {
                best = m.at(i, j);
                bj = j;
            }
        c.at(i) = best;
        arg[i] = bj;
    }
    if (track)
        tape->record([m, c, arg, c0]() {
            for (std::size_t i = 0; i < arg.size(); ++i) m.grad()[i * c0 + arg[i]] += c.grad()[i];
        });
    return c;
}

inline Tensor reduce_max(const Tensor& v, Tape* tape = nullptr) {
    if (v.numel() == 0) throw contract_error("reduce_max: empty tensor");
    const bool track = detail::tracked(tape, v);
    Tensor c = detail::make_result({}, track);
    std::size_t arg = 0;
    double best = v.at(std::size_t{0});
    for (std::size_t i = 1; i < v.numel(); ++i)
        if (v.at(i) > best) {
            best = v.at(i);
            arg = i;
        }
    c.at(std::size_t{0}) = best;
    if (track)
        tape->record([v, c, arg]() { v.grad()[arg] += c.grad()[0]; });
    return c;
}

inline Tensor reduce_min(const Tensor& v, Tape* tape = nullptr) {
    if (v.numel() == 0) throw contract_error("reduce_min: empty tensor");
    const bool track = detail::tracked(tape, v);
    Tensor c = detail::make_result({}, track);
    std::size_t arg = 0;
    double best = v.at(std::size_t{0});
    for (std::size_t i = 1; i < v.numel(); ++i)
        if (v.at(i) < best) {
            best = v.at(i);
            arg = i;
        }
    c.at(std::size_t{0}) = best;
    if (track)
        tape->record([v, c, arg]() { v.grad()[arg] += c.grad()[0]; });
    return c;
}

// ---------------------------------------------------------------------------
// softmax family
// ---------------------------------------------------------------------------

// Max-shifted log-softmax along the last axis of a [rows x vocab] matrix.
inline Tensor log_softmax_rows(const Tensor& m, Tape* tape = nullptr) {
    if (m.rank() != 2)
        throw shape_error("log_softmax_rows: expects rank-2, got " + shape_str(m.shape()));
    const std::size_t r = m.rows(), c0 = m.cols();
    if (c0 == 0) throw contract_error("log_softmax_rows: empty rows");
    const bool track = detail::tracked(tape, m);
    Tensor c = detail::make_result({r, c0}, track);
    for (std::size_t i = 0; i < r; ++i) {
        double mx = m.at(i, 0);
        for (std::size_t j = 1; j < c0; ++j) mx = std::max(mx, m.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < c0; ++j) z += std::exp(m.at(i, j) - mx);
        const double lse = mx + std::log(z);
        for (std::size_t j = 0; j < c0; ++j) c.at(i, j) = m.at(i, j) - lse;
    }
    if (track)
        tape->record([m, c, r, c0]() {
            for (std::size_t i = 0; i < r; ++i) {
                double gsum = 0.0;
                for (std::size_t j = 0; j < c0; ++j) gsum += c.grad()[i * c0 + j];
                for (std::size_t j = 0; j < c0; ++j)
                    m.grad()[i * c0 + j] +=
                        c.grad()[i * c0 + j] - std::exp(c.at(i, j)) * gsum;
            }
        });
    return c;
}

// Vector convenience wrapper.
inline Tensor log_softmax(const Tensor& v, Tape* tape = nullptr) {
    if (v.rank() == 2) return log_softmax_rows(v, tape);
    if (v.rank() != 1)
        throw shape_error("log_softmax: expects rank-1 or rank-2, got " + shape_str(v.shape()));
    Tensor m = reshape(v, {1, v.numel()}, tape);
    return reshape(log_softmax_rows(m, tape), {v.numel()}, tape);
}

// ---------------------------------------------------------------------------
// cosine similarity
// ---------------------------------------------------------------------------

// u.v / (|u||v|). Zero-norm operands are rejected rather than mapped to 0.
inline Tensor cosine(const Tensor& u, const Tensor& v, Tape* tape = nullptr) {
    detail::check_same_shape(u, v, "cosine");
    Tensor uu = sum_all(mul(u, u, tape), tape);
    Tensor vv = sum_all(mul(v, v, tape), tape);
    if (uu.item() == 0.0 || vv.item() == 0.0)
        throw degenerate_input_error("cosine: zero-norm vector");
    Tensor uv = sum_all(mul(u, v, tape), tape);
    Tensor denom = mul(sqrt(uu, tape), sqrt(vv, tape), tape);
    return div(uv, denom, tape);
}

inline double cosine_value(const Tensor& u, const Tensor& v) { return cosine(u, v).item(); }

}  // namespace aao
