#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "docsegtr/ppm.hpp"
#include "docsegtr/tensor.hpp"
#include "docsegtr/training.hpp"

namespace docsegtr {

/// Synthetic document page: image in [0,1] plus disjoint instance masks.
struct LayoutSample {
    Tensor image;  // [3, H, W]
    std::vector<GtInstance> instances;
    std::int64_t seed = 0;
};

struct GenConfig {
    std::int64_t height = 128;
    std::int64_t width = 128;
    std::int64_t min_instances = 2;
    std::int64_t max_instances = 5;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Deterministic generator: same (cfg, index) always yields bit-identical
/// samples. Places non-overlapping textured rectangles on a white page;
/// classes are {text, title, list, table, figure}.
LayoutSample generate_sample(const GenConfig& cfg, std::int64_t index);

/// Dataset directory layout: meta.txt (key=value), sample_%05d.ppm,
/// annotations.txt (docsegtr-eval v1 gt records).
void write_dataset(const GenConfig& cfg, std::int64_t count, const std::string& dir);

struct Dataset {
    GenConfig cfg;
    std::vector<std::string> image_ids;
    std::vector<LayoutSample> samples;
};

Dataset read_dataset(const std::string& dir);

Image8 tensor_to_image(const Tensor& image);
Tensor image_to_tensor(const Image8& img);

std::string sample_image_id(std::int64_t index);

}  // namespace docsegtr
