#pragma once

#include <iosfwd>

#include "docsegtr/checkpoint.hpp"
#include "docsegtr/synthdoc.hpp"

namespace docsegtr {

struct TrainResult {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    bool diverged = false;       // NaN/inf loss encountered
    std::int64_t diverged_iter = -1;
};

/// Runs `iters` SGD iterations starting at state.iter, cycling through
/// the dataset in index order. Optionally streams CSV log lines
/// `iter,total_loss,focal,dice,lr`. Stops early on non-finite loss.
TrainResult train_model(Model& model, OptimizerState& state, const Dataset& data,
                        std::int64_t iters, std::ostream* log = nullptr);

}  // namespace docsegtr
