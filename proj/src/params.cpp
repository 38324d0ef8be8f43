#include "ican/params.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ican {

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng, bool requires_grad) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = dist(rng);
    round_to_precision(values, active_precision());
    return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor ParameterStore::add(std::string name, Tensor init) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
    const auto v = init.values();
    Tensor t(init.shape(), std::vector<double>(v.begin(), v.end()), true);
    params_.push_back({std::move(name), t});
    return t;
}

Tensor ParameterStore::add_glorot(std::string name, Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    return add(std::move(name), glorot_uniform(std::move(shape), fan_in, fan_out, rng, false));
}

Tensor ParameterStore::add_zeros(std::string name, Shape shape) { return add(std::move(name), Tensor::zeros(std::move(shape))); }

const Tensor& ParameterStore::get(const std::string& name) const {
    auto it = std::find_if(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
    if (it == params_.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return it->tensor;
}

bool ParameterStore::contains(const std::string& name) const {
    return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace ican
