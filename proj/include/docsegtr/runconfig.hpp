#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "docsegtr/maskgen.hpp"

namespace docsegtr {

/// Flat key=value run configuration (model + optimizer + inference).
struct RunConfig {
    // model
    std::int64_t grid_size = 8;        // n
    std::int64_t num_layers = 2;       // K
    std::int64_t c_stem = 16;
    std::int64_t c_fpn = 32;
    std::int64_t c_mask = 16;
    std::int64_t theta = 1;
    std::int64_t num_classes = 5;      // q_c
    std::int64_t num_heads = 4;
    std::int64_t mlp_ratio = 4;
    bool use_transformer = true;
    bool use_attention = true;
    // optimizer / schedule
    double lr = 0.005;
    double momentum = 0.9;
    double weight_decay = 1e-5;
    std::int64_t warmup_iters = 100;
    std::vector<std::int64_t> milestones;  // empty = none
    double lambda_mask = 3.0;
    std::uint64_t seed = 1;
    // inference
    double score_thr = 0.1;
    double mask_thr = 0.5;
    double nms_sigma = 2.0;
    std::int64_t top_k = 100;

    void validate() const;

    InferenceConfig inference() const {
        InferenceConfig c;
        c.score_thr = score_thr;
        c.mask_thr = mask_thr;
        c.nms_sigma = nms_sigma;
        c.top_k = top_k;
        return c;
    }
};

RunConfig parse_run_config(const std::string& text);       // key=value lines
RunConfig load_run_config(const std::string& path);
std::string dump_run_config(const RunConfig& cfg);

/// Fixed-order scalar encoding used to embed the config in checkpoints.
std::vector<double> run_config_to_scalars(const RunConfig& cfg);
RunConfig run_config_from_scalars(const std::vector<double>& v);

}  // namespace docsegtr
