#include "docsegtr/training.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace docsegtr {

GridTargets assign_targets(const std::vector<GtInstance>& gt, std::int64_t n,
                           std::int64_t q_c, std::int64_t h_m, std::int64_t w_m) {
    if (n < 1 || q_c < 1 || h_m < 1 || w_m < 1) throw ConfigError("assign_targets: bad dimensions");

    struct Claim { std::size_t instance; std::int64_t area; int class_id; };
    std::vector<Claim> owner(static_cast<std::size_t>(n * n), Claim{SIZE_MAX, -1, 0});

    for (std::size_t idx = 0; idx < gt.size(); ++idx) {
        const auto& inst = gt[idx];
        const std::int64_t area = inst.mask.area();
        if (area == 0) {
            std::cerr << "warning: skipping ground-truth instance " << idx << " with empty mask\n";
            continue;
        }
        double cy = 0.0, cx = 0.0;
        for (std::int64_t y = 0; y < inst.mask.h; ++y)
            for (std::int64_t x = 0; x < inst.mask.w; ++x)
                if (inst.mask.at(y, x)) {
                    cy += static_cast<double>(y) + 0.5;
                    cx += static_cast<double>(x) + 0.5;
                }
        cy /= static_cast<double>(area);
        cx /= static_cast<double>(area);
        auto to_cell = [n](double c, std::int64_t extent) {
            auto cell = static_cast<std::int64_t>(std::floor(c / static_cast<double>(extent) *
                                                             static_cast<double>(n)));
            return std::clamp<std::int64_t>(cell, 0, n - 1);
        };
        const std::int64_t ci = to_cell(cy, inst.mask.h);
        const std::int64_t cj = to_cell(cx, inst.mask.w);
        Claim& cur = owner[static_cast<std::size_t>(ci * n + cj)];
        if (area > cur.area || (area == cur.area && inst.class_id < cur.class_id)) {
            cur = Claim{idx, area, inst.class_id};
        }
    }

    GridTargets t;
    t.cate_t = Tensor(Shape{n, n, q_c}, 0.0);
    for (std::int64_t ci = 0; ci < n; ++ci) {
        for (std::int64_t cj = 0; cj < n; ++cj) {
            const Claim& c = owner[static_cast<std::size_t>(ci * n + cj)];
            if (c.instance == SIZE_MAX) continue;
            const auto& inst = gt[c.instance];
            if (inst.class_id < 0 || inst.class_id >= q_c) {
                throw ConfigError("assign_targets: class_id " + std::to_string(inst.class_id) +
                                  " out of range for q_c=" + std::to_string(q_c));
            }
            t.cate_t.at((ci * n + cj) * q_c + inst.class_id) = 1.0;
            t.pos_cells.push_back(PosCell{ci, cj, c.instance});

            // max-pool downsample the ground-truth mask to mask-feature size
            BinaryMask down(h_m, w_m);
            const std::int64_t H = inst.mask.h, W = inst.mask.w;
            for (std::int64_t y = 0; y < h_m; ++y) {
                const std::int64_t y0 = (y * H) / h_m, y1 = ((y + 1) * H + h_m - 1) / h_m;
                for (std::int64_t x = 0; x < w_m; ++x) {
                    const std::int64_t x0 = (x * W) / w_m, x1 = ((x + 1) * W + w_m - 1) / w_m;
                    std::uint8_t v = 0;
                    for (std::int64_t iy = y0; iy < y1 && !v; ++iy)
                        for (std::int64_t ix = x0; ix < x1; ++ix)
                            if (inst.mask.at(iy, ix)) { v = 1; break; }
                    down.at(y, x) = v;
                }
            }
            t.mask_t.push_back(std::move(down));
        }
    }
    return t;
}

Tensor focal_loss(const Tensor& p, const Tensor& cate_t, double alpha, double gamma) {
    if (p.shape() != cate_t.shape()) {
        throw ShapeError("focal_loss: predictions " + shape_str(p.shape()) +
                         " vs targets " + shape_str(cate_t.shape()));
    }
    const std::int64_t n_elem = p.numel();
    const std::int64_t q_c = p.shape().back();
    const std::int64_t cells = n_elem / q_c;

    std::int64_t num_pos_cells = 0;
    for (std::int64_t cell = 0; cell < cells; ++cell) {
        for (std::int64_t c = 0; c < q_c; ++c) {
            if (cate_t.at(cell * q_c + c) != 0.0) { ++num_pos_cells; break; }
        }
    }
    const double norm = static_cast<double>(std::max<std::int64_t>(1, num_pos_cells));

    constexpr double kClampLo = 1e-7, kClampHi = 1.0 - 1e-7;
    std::int64_t clamped = 0;
    auto clamp_p = [&](double v) {
        if (v < kClampLo) { ++clamped; return kClampLo; }
        if (v > kClampHi) { ++clamped; return kClampHi; }
        return v;
    };

    double sum = 0.0;
    for (std::int64_t i = 0; i < n_elem; ++i) {
        const double pv = clamp_p(p.at(i));
        if (cate_t.at(i) != 0.0) {
            sum += -alpha * std::pow(1.0 - pv, gamma) * std::log(pv);
        } else {
            sum += -(1.0 - alpha) * std::pow(pv, gamma) * std::log(1.0 - pv);
        }
    }
    if (clamped > 0) {
        std::cerr << "warning: focal_loss clamped " << clamped << " probabilities to (0,1)\n";
    }
    Tensor y = Tensor::scalar(sum / norm);

    if (detail::grad_enabled() && p.requires_grad()) {
        y.set_requires_grad(true);
        auto pp = p.ptr();
        auto pt = cate_t.ptr();
        auto py = y.ptr();
        auto& tape = Tape::active();
        py->tape_epoch = tape.epoch();
        py->node = tape.record([pp, pt, py, alpha, gamma, norm, n_elem]() {
            if (py->grad.empty()) return;
            const double g = py->grad[0] / norm;
            detail::ensure_grad(*pp);
            for (std::int64_t i = 0; i < n_elem; ++i) {
                double pv = pp->values[i];
                pv = std::clamp(pv, 1e-7, 1.0 - 1e-7);
                double d;
                if (pt->values[i] != 0.0) {
                    // d/dp [-a (1-p)^g ln p]
                    const double mod = std::pow(1.0 - pv, gamma);
                    double term = mod / pv;
                    if (gamma != 0.0) term += -gamma * std::pow(1.0 - pv, gamma - 1.0) * std::log(pv);
                    d = -alpha * term;
                } else {
                    // d/dp [-(1-a) p^g ln(1-p)]
                    const double mod = std::pow(pv, gamma);
                    double term = -mod / (1.0 - pv);
                    if (gamma != 0.0) term += gamma * std::pow(pv, gamma - 1.0) * std::log(1.0 - pv);
                    d = -(1.0 - alpha) * term;
                }
                pp->grad[i] += g * d;
            }
        });
    }
    return y;
}

Tensor dice_loss(const Tensor& p, const Tensor& q) {
    if (p.shape() != q.shape()) {
        throw ShapeError("dice_loss: shape mismatch " + shape_str(p.shape()) + " vs " +
                         shape_str(q.shape()));
    }
    constexpr double kEps = 1e-9;
    const std::int64_t n = p.numel();
    double pq = 0.0, pp2 = 0.0, qq = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        pq += p.at(i) * q.at(i);
        pp2 += p.at(i) * p.at(i);
        qq += q.at(i) * q.at(i);
    }
    const double denom = pp2 + qq + kEps;
    Tensor y = Tensor::scalar(1.0 - 2.0 * pq / denom);
    if (detail::grad_enabled() && p.requires_grad()) {
        y.set_requires_grad(true);
        auto ppd = p.ptr();
        auto pqd = q.ptr();
        auto py = y.ptr();
        auto& tape = Tape::active();
        py->tape_epoch = tape.epoch();
        py->node = tape.record([ppd, pqd, py, pq, denom, n]() {
            if (py->grad.empty()) return;
            const double g = py->grad[0];
            detail::ensure_grad(*ppd);
            for (std::int64_t i = 0; i < n; ++i) {
                // d/dp_i [1 - 2A/B] = -2(q_i B - 2 p_i A)/B^2
                const double d = -2.0 * (pqd->values[i] * denom - 2.0 * ppd->values[i] * pq) /
                                 (denom * denom);
                ppd->grad[i] += g * d;
            }
        });
    }
    return y;
}

LossBreakdown total_loss(const Tensor& cate, const Tensor& mask_logits,
                         const GridTargets& targets, double lambda_mask) {
    constexpr double kAlpha = 0.25, kGamma = 2.0;
    LossBreakdown out;
    out.focal = focal_loss(cate, targets.cate_t, kAlpha, kGamma);
    if (targets.pos_cells.empty()) {
        out.dice = Tensor::scalar(0.0);
        out.total = out.focal;
        return out;
    }
    Tensor dice_sum = Tensor::scalar(0.0);
    for (std::size_t k = 0; k < targets.pos_cells.size(); ++k) {
        const auto& pc = targets.pos_cells[k];
        const auto& mt = targets.mask_t[k];
        Tensor soft = sigmoid(select_cell(mask_logits, pc.i, pc.j));
        std::vector<double> qv(mt.data.begin(), mt.data.end());
        Tensor q(Shape{mt.h, mt.w}, std::move(qv));
        dice_sum = add(dice_sum, dice_loss(soft, q));
    }
    out.dice = scale(dice_sum, 1.0 / static_cast<double>(targets.pos_cells.size()));
    out.total = add(out.focal, scale(out.dice, lambda_mask));
    return out;
}

void OptimizerState::init_velocity(const std::vector<Tensor>& params) {
    velocity.clear();
    for (const auto& p : params) {
        velocity.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    }
}

double lr_at(std::int64_t iter, const OptimizerState& state) {
    if (iter < 0) throw ContractError("lr_at: iter must be >= 0");
    if (state.warmup_iters > 0 && iter < state.warmup_iters) {
        return state.lr_base * static_cast<double>(iter + 1) / static_cast<double>(state.warmup_iters);
    }
    double lr = state.lr_base;
    for (auto m : state.milestones) {
        if (iter >= m) lr *= 0.1;
    }
    return lr;
}

void sgd_step(std::vector<Tensor>& params, OptimizerState& state) {
    if (state.velocity.size() != params.size()) {
        throw ContractError("sgd_step: velocity not initialized for this parameter list");
    }
    const double lr = lr_at(state.iter, state);
    const double mu = state.momentum;
    const double wd = state.weight_decay;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = params[k];
        if (!p.has_grad()) {
            throw ContractError("sgd_step: parameter " + std::to_string(k) + " has no gradient");
        }
        auto& v = state.velocity[k];
        auto& vals = p.values();
        const auto& g = p.grad();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double gi = g[i] + wd * vals[i];
            v[i] = mu * v[i] + gi;
            vals[i] -= lr * (gi + mu * v[i]);
        }
    }
    ++state.iter;
}

}  // namespace docsegtr
