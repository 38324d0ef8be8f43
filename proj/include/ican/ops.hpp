#pragma once

#include <cstddef>
#include <vector>

#include "ican/tensor.hpp"

// Differentiable primitives. Every op records its adjoint on the active tape
// when at least one input requires grad.
//
// Broadcasting: binary element-wise ops accept either identical shapes or a
// 1-D operand whose length equals the trailing extent of the other operand;
// the vector is then repeated along every leading index. Anything else needs
// an explicit reshape.

namespace ican {

enum class ElementwiseOp { add, sub, mul, relu, scale };

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b = nullptr,
                   double factor = 1.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& a);
Tensor scale(const Tensor& a, double factor);

/// [m x k] * [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);

/// Sums consecutive windows of `window` entries along the trailing axis.
Tensor sum_pool(const Tensor& a, std::size_t window);
Tensor reduce_sum(const Tensor& a, std::size_t axis);
/// Sum over every element, producing a scalar (shape {}).
Tensor sum(const Tensor& a);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);

/// x: [c x H x W], weight: [c_out x c x k x k], bias: [c_out].
/// Zero padding (k - 1) / 2, so for k <= 3 the output is [c_out x H/s x W/s].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride);

}  // namespace ican
