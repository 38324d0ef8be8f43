#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ican/tensor.hpp"

namespace ican {

using Rng = std::mt19937_64;

struct Parameter {
    std::string name;
    Tensor tensor;
};

/// Ordered registry of trainable tensors. Registration order is the
/// serialization and optimizer order.
class ParameterStore {
public:
    Tensor add(std::string name, Tensor init);
    /// Uniform in +-sqrt(6 / (fan_in + fan_out)).
    Tensor add_glorot(std::string name, Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);
    Tensor add_zeros(std::string name, Shape shape);

    const std::vector<Parameter>& all() const { return params_; }
    std::vector<Parameter>& all() { return params_; }
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const;
    /// Total number of trainable scalars.
    std::size_t scalar_count() const;
    void zero_grad();

private:
    std::vector<Parameter> params_;
};

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng, bool requires_grad = true);

}  // namespace ican
