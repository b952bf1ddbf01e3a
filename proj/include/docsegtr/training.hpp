#pragma once

#include <cstdint>
#include <vector>

#include "docsegtr/mask.hpp"
#include "docsegtr/maskgen.hpp"
#include "docsegtr/tensor.hpp"

namespace docsegtr {

struct GtInstance {
    int class_id = 0;
    BinaryMask mask;
};

struct PosCell {
    std::int64_t i = 0;
    std::int64_t j = 0;
    std::size_t instance = 0;  // index into the ground-truth list
};

struct GridTargets {
    Tensor cate_t;                    // [n, n, q_c] in {0,1}
    std::vector<PosCell> pos_cells;   // one entry per occupied cell
    std::vector<BinaryMask> mask_t;   // [H_m, W_m] target per pos cell
};

/// Centroid-cell assignment: each instance claims the grid cell holding
/// its mask centroid; collisions go to the larger instance, then the
/// lower class id. Mask targets are max-pool downsampled to H_m x W_m.
GridTargets assign_targets(const std::vector<GtInstance>& gt, std::int64_t n,
                           std::int64_t q_c, std::int64_t h_m, std::int64_t w_m);

/// Focal loss over independent per-class sigmoid outputs, summed over
/// all cells/classes and divided by max(1, #positive cells).
/// Probabilities at exactly 0/1 are clamped into [1e-7, 1-1e-7].
Tensor focal_loss(const Tensor& p, const Tensor& cate_t, double alpha, double gamma);

/// 1 - 2*sum(p*q) / (sum(p^2) + sum(q^2) + 1e-9).
Tensor dice_loss(const Tensor& p, const Tensor& q);

struct LossBreakdown {
    Tensor total;
    Tensor focal;
    Tensor dice;  // mean dice over positive cells (scalar 0 when none)
};

/// total = focal + lambda_mask * mean over positive cells of
/// dice(sigmoid(mask logit at the cell), mask target).
LossBreakdown total_loss(const Tensor& cate, const Tensor& mask_logits,
                         const GridTargets& targets, double lambda_mask);

struct OptimizerState {
    double lr_base = 0.005;
    double momentum = 0.9;
    double weight_decay = 1e-5;
    std::int64_t iter = 0;
    std::int64_t warmup_iters = 100;
    std::vector<std::int64_t> milestones;
    std::vector<std::vector<double>> velocity;  // aligned with the parameter list

    void init_velocity(const std::vector<Tensor>& params);
};

/// Linear warmup to lr_base, then x0.1 per passed milestone.
double lr_at(std::int64_t iter, const OptimizerState& state);

/// Nesterov SGD with decoupled-in-gradient weight decay:
/// g = grad + wd*p; v = mu*v + g; p -= lr*(g + mu*v). Increments iter.
void sgd_step(std::vector<Tensor>& params, OptimizerState& state);

}  // namespace docsegtr
