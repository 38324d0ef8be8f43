#include "ican/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace ican {

namespace {
thread_local Tape* g_tape = nullptr;
thread_local Precision g_precision = Precision::f64;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << " x ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    for (auto e : shape) {
        if (e == 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
    }
    if (values.size() != shape_numel(shape)) {
        throw std::invalid_argument("tensor of shape " + shape_str(shape) + " needs " +
                                    std::to_string(shape_numel(shape)) + " values, got " +
                                    std::to_string(values.size()));
    }
    node_ = std::make_shared<detail::TensorNode>();
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }
Tensor Tensor::ones(Shape shape, bool requires_grad) { return full(std::move(shape), 1.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
    const auto n = values.size();
    return Tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad) {
    return Tensor({rows, cols}, std::move(values), requires_grad);
}

Tensor Tensor::from_node(detail::NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

const Shape& Tensor::shape() const {
    if (!node_) throw std::logic_error("undefined tensor");
    return node_->shape;
}

std::size_t Tensor::extent(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw std::out_of_range("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->value.size() : 0; }

std::span<const double> Tensor::values() const {
    if (!node_) throw std::logic_error("undefined tensor");
    return node_->value;
}

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item() needs a single-element tensor, got " + shape_str(shape()));
    return node_->value[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
    if (dim() != 2) throw std::invalid_argument("at(row, col) needs a matrix");
    return node_->value.at(row * node_->shape[1] + col);
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::is_leaf() const { return node_ && node_->leaf; }

std::vector<double> Tensor::grad() const {
    if (!node_) throw std::logic_error("undefined tensor");
    if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

std::span<double> Tensor::mutable_values() {
    if (!node_) throw std::logic_error("undefined tensor");
    if (!node_->leaf) throw std::logic_error("only leaf tensors can be mutated");
    return node_->value;
}

std::span<double> Tensor::mutable_grad() {
    if (!node_) throw std::logic_error("undefined tensor");
    return node_->ensure_grad();
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->value, false); }

void Tape::record(detail::NodePtr output, Adjoint adjoint) {
    output->leaf = false;
    entries_.push_back({std::move(output), std::move(adjoint)});
}

void Tape::backward(const Tensor& output) {
    if (!output.defined() || output.numel() != 1) {
        throw std::invalid_argument("backward needs a scalar output, got " +
                                    (output.defined() ? shape_str(output.shape()) : std::string("undefined")));
    }
    for (auto& e : entries_) {
        if (!e.output->grad.empty()) std::fill(e.output->grad.begin(), e.output->grad.end(), 0.0);
    }
    const auto& out = output.node();
    out->ensure_grad()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (it->output->grad.empty()) continue;
        it->adjoint(*it->output);
    }
}

TapeGuard::TapeGuard(Tape* tape) : previous_(g_tape) { g_tape = tape; }
TapeGuard::~TapeGuard() { g_tape = previous_; }
Tape* active_tape() { return g_tape; }

PrecisionGuard::PrecisionGuard(Precision precision) : previous_(g_precision) { g_precision = precision; }
PrecisionGuard::~PrecisionGuard() { g_precision = previous_; }
Precision active_precision() { return g_precision; }

void round_to_precision(std::span<double> values, Precision precision) {
    if (precision != Precision::f32) return;
    for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
}

void backward(const Tensor& output) {
    if (!g_tape) throw std::logic_error("backward called with no active tape");
    g_tape->backward(output);
}

}  // namespace ican
