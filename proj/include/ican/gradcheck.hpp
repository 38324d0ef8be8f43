#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "ican/tensor.hpp"

namespace ican {

struct GradCheckOptions {
    double eps = 1e-5;
    // Central differences at eps and eps/2 that disagree by more than this
    // relative amount indicate a kink (relu) inside the stencil; such
    // coordinates are skipped and counted instead of compared.
    double kink_tolerance = 1e-5;
    bool skip_kinks = true;
    // Coordinates whose analytic and numeric values differ by less than this
    // count as exact; covers rounding residue on gradients that are zero.
    double absolute_floor = 1e-14;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
};

/// Compares reverse-mode gradients of the scalar `f` with respect to every
/// tensor in `leaves` against central differences. Relative error per
/// coordinate is |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
/// Always evaluated in 64-bit mode. Leaves are restored on return.
GradCheckResult finite_difference_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves,
                                        const GradCheckOptions& options = {});

/// Single-input form: `point` is copied into a fresh leaf and fed to `f`.
GradCheckResult finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                                        const GradCheckOptions& options = {});

}  // namespace ican
