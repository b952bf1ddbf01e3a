#include "docsegtr/trainer.hpp"

#include <cmath>
#include <ostream>

namespace docsegtr {

TrainResult train_model(Model& model, OptimizerState& state, const Dataset& data,
                        std::int64_t iters, std::ostream* log) {
    if (data.samples.empty()) throw ContractError("train_model: empty dataset");
    const std::int64_t n = model.cfg.grid_size;
    const std::int64_t h_m = data.cfg.height / 4, w_m = data.cfg.width / 4;

    // targets are a pure function of the ground truth; compute once
    std::vector<GridTargets> targets;
    targets.reserve(data.samples.size());
    for (const auto& s : data.samples) {
        targets.push_back(assign_targets(s.instances, n, model.cfg.num_classes, h_m, w_m));
    }

    auto params_named = model.named_params();
    std::vector<Tensor> params;
    for (auto& [name, t] : params_named) params.push_back(t);
    if (state.velocity.empty()) state.init_velocity(params);

    TrainResult result;
    const std::int64_t start = state.iter;
    for (std::int64_t it = start; it < start + iters; ++it) {
        const std::size_t idx = static_cast<std::size_t>(it % static_cast<std::int64_t>(data.samples.size()));
        Tape::active().clear();
        auto fwd = model.forward(data.samples[idx].image);
        LossBreakdown loss = total_loss(fwd.cate, fwd.mask_logits, targets[idx], model.cfg.lambda_mask);
        const double total = loss.total.item();
        if (it == start) result.initial_loss = total;
        result.final_loss = total;
        if (log) {
            std::ostream& os = *log;
            os.precision(17);
            os << it << "," << total << "," << loss.focal.item() << "," << loss.dice.item()
               << "," << lr_at(it, state) << "\n";
        }
        if (!std::isfinite(total)) {
            result.diverged = true;
            result.diverged_iter = it;
            return result;
        }
        for (auto& p : params) p.zero_grad();
        backward(loss.total);
        // ablated branches (e.g. encoder with use_transformer=false) get a
        // zero gradient rather than tripping the missing-grad contract
        for (auto& p : params) {
            if (!p.has_grad()) detail::ensure_grad(*p.ptr());
        }
        sgd_step(params, state);
    }
    return result;
}

}  // namespace docsegtr
