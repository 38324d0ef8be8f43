#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ican {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class Precision { f64, f32 };

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first touched
    bool requires_grad = false;
    bool leaf = true;

    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

using NodePtr = std::shared_ptr<TensorNode>;

}  // namespace detail

/// Dense row-major tensor handle. Copies share storage; values are immutable
/// once created except through the leaf mutation API used by optimizers.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor ones(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor vector(std::vector<double> values, bool requires_grad = false);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                         bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t dim() const { return shape().size(); }
    std::size_t extent(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> values() const;
    double item() const;
    double operator[](std::size_t i) const { return values()[i]; }
    double at(std::size_t row, std::size_t col) const;

    bool requires_grad() const;
    bool is_leaf() const;
    /// Gradient accumulator; all zeros when nothing has flowed into it yet.
    std::vector<double> grad() const;
    void zero_grad();

    // Leaf-only mutation (parameter updates, finite-difference probing).
    std::span<double> mutable_values();
    std::span<double> mutable_grad();

    /// Value copy that is cut from any recorded computation.
    Tensor detach() const;

    const detail::NodePtr& node() const { return node_; }
    static Tensor from_node(detail::NodePtr node);

private:
    detail::NodePtr node_;
};

/// Flat, single-owner record of primitive operations executed while the tape
/// is active on the current thread. Adjoints are replayed in reverse order.
class Tape {
public:
    using Adjoint = std::function<void(const detail::TensorNode& out)>;

    void record(detail::NodePtr output, Adjoint adjoint);

    /// Seeds d(output)/d(output) = 1 and accumulates into every leaf that
    /// requires grad. Intermediate gradients are reset first, so a second call
    /// adds the same contribution to the leaves again.
    void backward(const Tensor& output);

    void clear() { entries_.clear(); }
    std::size_t size() const { return entries_.size(); }

private:
    struct Entry {
        detail::NodePtr output;
        Adjoint adjoint;
    };
    std::vector<Entry> entries_;
};

/// Activates a tape for the current thread for the guard's lifetime. Passing
/// nullptr suspends recording.
class TapeGuard {
public:
    explicit TapeGuard(Tape* tape);
    ~TapeGuard();
    TapeGuard(const TapeGuard&) = delete;
    TapeGuard& operator=(const TapeGuard&) = delete;

private:
    Tape* previous_;
};

Tape* active_tape();

/// Numeric precision used when materializing op results on this thread. In
/// f32 mode every produced value is rounded to binary32.
class PrecisionGuard {
public:
    explicit PrecisionGuard(Precision precision);
    ~PrecisionGuard();
    PrecisionGuard(const PrecisionGuard&) = delete;
    PrecisionGuard& operator=(const PrecisionGuard&) = delete;

private:
    Precision previous_;
};

Precision active_precision();
void round_to_precision(std::span<double> values, Precision precision);

/// Runs backward on the active tape.
void backward(const Tensor& output);

}  // namespace ican
