#include <doctest.h>

#include "docsegtr/model.hpp"
#include "docsegtr/synthdoc.hpp"
#include "docsegtr/trainer.hpp"

using namespace docsegtr;

namespace {

RunConfig tiny_config() {
    RunConfig cfg;
    cfg.grid_size = 2;
    cfg.num_layers = 1;
    cfg.c_stem = 2;
    cfg.c_fpn = 4;
    cfg.c_mask = 2;
    cfg.num_heads = 2;
    cfg.mlp_ratio = 2;
    return cfg;
}

}  // namespace

TEST_CASE("model forward shapes") {
    RunConfig cfg = tiny_config();
    Model model = Model::init(cfg);
    Tensor image(Shape{3, 64, 64}, 0.5);
    std::int64_t scores = 0;
    auto out = model.forward(image, &scores);
    Tape::active().clear();
    CHECK(out.cate.shape() == Shape{2, 2, 5});
    CHECK(out.kernels.shape() == Shape{2, 2, 2});  // b = theta^2 * c_mask = 2
    CHECK(out.mask_features.f.shape() == Shape{16, 16, 2});
    CHECK(out.mask_logits.shape() == Shape{16, 16, 2, 2});
    // one twin-attention call per encoder layer on the 2x2 grid
    CHECK(scores == cfg.num_layers * attention_score_count(2, 2, AttentionMode::kTwin));
    for (auto v : out.cate.values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("init is deterministic in the seed") {
    RunConfig cfg = tiny_config();
    Model a = Model::init(cfg);
    Model b = Model::init(cfg);
    auto na = a.named_params(), nb = b.named_params();
    REQUIRE(na.size() == nb.size());
    for (std::size_t k = 0; k < na.size(); ++k) {
        CHECK(na[k].first == nb[k].first);
        CHECK(na[k].second.values() == nb[k].second.values());
    }
    RunConfig other = cfg;
    other.seed = cfg.seed + 1;
    Model c = Model::init(other);
    CHECK(c.named_params()[0].second.values() != na[0].second.values());
}

TEST_CASE("ablated model skips attention work") {
    RunConfig cfg = tiny_config();
    cfg.use_transformer = false;
    Model model = Model::init(cfg);
    Tensor image(Shape{3, 64, 64}, 0.5);
    std::int64_t scores = 0;
    auto out = model.forward(image, &scores);
    Tape::active().clear();
    CHECK(scores == 0);
    CHECK(out.cate.shape() == Shape{2, 2, 5});
}

TEST_CASE("predict is deterministic and grad-free") {
    RunConfig cfg = tiny_config();
    cfg.score_thr = 0.0;  // keep everything so the call exercises NMS
    Model model = Model::init(cfg);
    GenConfig gen;
    gen.height = gen.width = 64;
    gen.seed = 3;
    LayoutSample s = generate_sample(gen, 0);
    InstanceSet a = model.predict(s.image);
    InstanceSet b = model.predict(s.image);
    REQUIRE(a.items.size() == b.items.size());
    for (std::size_t k = 0; k < a.items.size(); ++k) {
        CHECK(a.items[k].score == b.items[k].score);
        CHECK(a.items[k].class_id == b.items[k].class_id);
        CHECK(a.items[k].soft_mask.values() == b.items[k].soft_mask.values());
    }
}

TEST_CASE("short training run halves the loss on one sample") {
    RunConfig cfg = tiny_config();
    cfg.lr = 0.03;
    cfg.warmup_iters = 5;
    Model model = Model::init(cfg);

    GenConfig gen;
    gen.height = gen.width = 64;
    gen.seed = 21;
    Dataset data;
    data.cfg = gen;
    data.image_ids.push_back(sample_image_id(0));
    data.samples.push_back(generate_sample(gen, 0));

    OptimizerState opt;
    opt.lr_base = cfg.lr;
    opt.momentum = cfg.momentum;
    opt.weight_decay = cfg.weight_decay;
    opt.warmup_iters = cfg.warmup_iters;

    TrainResult r = train_model(model, opt, data, 50, nullptr);
    CHECK_FALSE(r.diverged);
    CHECK(r.final_loss < 0.5 * r.initial_loss);
}
