#pragma once

#include <functional>

#include "docsegtr/tensor.hpp"

namespace docsegtr {

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
    std::int64_t checked = 0;
    std::int64_t skipped = 0;
};

/// Central-difference check of backward() against (f(x+h)-f(x-h))/2h.
///
/// `f` must be scalar-valued and record on the active tape when `x`
/// requires grad. Coordinates where `skip(x, i)` is true (e.g. near a
/// relu kink) are reported as skipped rather than failed. When
/// `max_coords` > 0, only a deterministic pseudo-random subset of that
/// many coordinates is probed.
GradCheckReport finite_diff_check(
    const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h, double tol,
    const std::function<bool(const Tensor&, std::int64_t)>& skip = nullptr,
    std::int64_t max_coords = 0);

}  // namespace docsegtr
