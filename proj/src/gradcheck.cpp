#include "ican/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ican {

GradCheckResult finite_difference_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves,
                                        const GradCheckOptions& options) {
    PrecisionGuard precision(Precision::f64);

    for (auto& leaf : leaves) {
        if (!leaf.requires_grad() || !leaf.is_leaf()) {
            throw std::invalid_argument("finite_difference_check: every probed tensor must be a grad-requiring leaf");
        }
        leaf.zero_grad();
    }
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        TapeGuard guard(&tape);
        tape.backward(f());
        for (const auto& leaf : leaves) analytic.push_back(leaf.grad());
    }

    TapeGuard no_record(nullptr);
    auto eval = [&] { return f().item(); };
    auto central = [&](double& coord, double h) {
        const double saved = coord;
        coord = saved + h;
        const double up = eval();
        coord = saved - h;
        const double down = eval();
        coord = saved;
        return (up - down) / (2.0 * h);
    };

    GradCheckResult result;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto values = leaves[li].mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double numeric = central(values[i], options.eps);
            if (options.skip_kinks) {
                const double half = central(values[i], options.eps / 2.0);
                const double scale = std::max({std::abs(numeric), std::abs(half), 1e-8});
                if (std::abs(numeric - half) > options.kink_tolerance * scale) {
                    ++result.skipped;
                    continue;
                }
            }
            const double a = analytic[li][i];
            const double diff = std::abs(a - numeric);
            const double rel = diff < options.absolute_floor ? 0.0 : diff / (std::abs(a) + std::abs(numeric) + 1e-12);
            result.max_rel_error = std::max(result.max_rel_error, rel);
            ++result.checked;
        }
    }
    return result;
}

GradCheckResult finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                                        const GradCheckOptions& options) {
    const auto v = point.values();
    Tensor leaf(point.shape(), std::vector<double>(v.begin(), v.end()), true);
    return finite_difference_check([&] { return f(leaf); }, {leaf}, options);
}

}  // namespace ican
