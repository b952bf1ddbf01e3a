#include "docsegtr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "docsegtr/rng.hpp"

namespace docsegtr {

GradCheckReport finite_diff_check(
    const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h, double tol,
    const std::function<bool(const Tensor&, std::int64_t)>& skip, std::int64_t max_coords) {
    if (h <= 0.0) throw ContractError("finite_diff_check: h must be > 0");

    Tensor probe(x.shape(), x.values(), true);
    Tape::active().clear();
    Tensor loss = f(probe);
    if (loss.requires_grad()) {
        backward(loss);
    } else {
        Tape::active().clear();  // constant f never touched the probe
    }
    const std::vector<double> analytic = probe.has_grad()
        ? probe.grad()
        : std::vector<double>(static_cast<std::size_t>(x.numel()), 0.0);

    std::vector<std::int64_t> coords;
    const std::int64_t n = x.numel();
    if (max_coords > 0 && max_coords < n) {
        // deterministic subset without replacement
        std::vector<std::int64_t> all(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) all[i] = i;
        Rng rng(0xD0C5E67Au);
        for (std::int64_t i = 0; i < max_coords; ++i) {
            const std::int64_t j = i + static_cast<std::int64_t>(rng.next_below(n - i));
            std::swap(all[i], all[j]);
            coords.push_back(all[i]);
        }
    } else {
        coords.resize(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) coords[i] = i;
    }

    GradCheckReport report;
    detail::NoGradGuard no_grad;
    Tensor work(x.shape(), x.values(), false);
    for (std::int64_t i : coords) {
        if (skip && skip(x, i)) {
            ++report.skipped;
            continue;
        }
        const double orig = work.at(i);
        work.at(i) = orig + h;
        const double fp = f(work).item();
        work.at(i) = orig - h;
        const double fm = f(work).item();
        work.at(i) = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double an = analytic[static_cast<std::size_t>(i)];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
        const double rel = std::abs(fd - an) / denom;
        report.max_rel_err = std::max(report.max_rel_err, rel);
        ++report.checked;
    }
    report.pass = report.max_rel_err < tol;
    return report;
}

}  // namespace docsegtr
