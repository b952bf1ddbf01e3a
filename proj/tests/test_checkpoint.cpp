#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "docsegtr/checkpoint.hpp"
#include "docsegtr/evalkit.hpp"

using namespace docsegtr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("docsegtr_ckpt_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string file_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

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

TEST_CASE("run config text format") {
    SUBCASE("defaults roundtrip through dump/parse") {
        RunConfig cfg;
        cfg.milestones = {100, 200};
        RunConfig back = parse_run_config(dump_run_config(cfg));
        CHECK(back.grid_size == cfg.grid_size);
        CHECK(back.lr == cfg.lr);
        CHECK(back.milestones == cfg.milestones);
        CHECK(back.use_transformer == cfg.use_transformer);
    }
    SUBCASE("comments and blank lines are ignored") {
        RunConfig cfg = parse_run_config("# comment\n\ngrid_size=4\nlr=0.5\n");
        CHECK(cfg.grid_size == 4);
        CHECK(cfg.lr == 0.5);
    }
    SUBCASE("unknown keys raise") {
        CHECK_THROWS_AS(parse_run_config("grdsize=4\n"), ConfigError);
    }
    SUBCASE("constraint violations raise") {
        CHECK_THROWS_AS(parse_run_config("theta=2\n"), ConfigError);
        CHECK_THROWS_AS(parse_run_config("c_fpn=5\nnum_heads=2\n"), ConfigError);
    }
    SUBCASE("scalar encoding roundtrip") {
        RunConfig cfg;
        cfg.grid_size = 4;
        cfg.use_transformer = false;
        cfg.milestones = {10, 20, 30};
        cfg.lr = 0.125;
        RunConfig back = run_config_from_scalars(run_config_to_scalars(cfg));
        CHECK(back.grid_size == 4);
        CHECK(back.use_transformer == false);
        CHECK(back.milestones == cfg.milestones);
        CHECK(back.lr == 0.125);
    }
}

TEST_CASE("checkpoint binary format") {
    TempDir dir("fmt");
    Checkpoint ckpt;
    ckpt.entries.push_back({"w", {2, 2}, {1.0f, 2.0f, 3.0f, 4.0f}});
    ckpt.entries.push_back({"b", {2}, {0.5f, -0.5f}});
    const auto p = (dir.path / "a.dsgt").string();

    SUBCASE("save -> load -> save is byte-identical") {
        save_checkpoint(p, ckpt);
        Checkpoint back = load_checkpoint(p);
        REQUIRE(back.entries.size() == 2);
        CHECK(back.entries[0].name == "w");
        CHECK(back.entries[0].dims == std::vector<std::uint32_t>{2, 2});
        CHECK(back.entries[0].data == ckpt.entries[0].data);
        const auto p2 = (dir.path / "b.dsgt").string();
        save_checkpoint(p2, back);
        CHECK(file_bytes(p) == file_bytes(p2));
    }
    SUBCASE("magic is DSGT") {
        save_checkpoint(p, ckpt);
        CHECK(file_bytes(p).substr(0, 4) == "DSGT");
    }
    SUBCASE("bad magic raises") {
        std::ofstream(p, std::ios::binary) << "NOPE            ";
        CHECK_THROWS_AS(load_checkpoint(p), FormatError);
    }
    SUBCASE("truncated file raises") {
        save_checkpoint(p, ckpt);
        std::string bytes = file_bytes(p);
        std::ofstream(p, std::ios::binary) << bytes.substr(0, bytes.size() - 3);
        CHECK_THROWS_AS(load_checkpoint(p), FormatError);
    }
    SUBCASE("duplicate names raise") {
        ckpt.entries.push_back({"w", {1}, {0.0f}});
        CHECK_THROWS_AS(save_checkpoint(p, ckpt), FormatError);
    }
}

TEST_CASE("model checkpoints restore parameters exactly") {
    TempDir dir("model");
    RunConfig cfg = tiny_config();
    Model model = Model::init(cfg);
    const auto p = (dir.path / "m.dsgt").string();

    OptimizerState opt;
    opt.lr_base = cfg.lr;
    opt.warmup_iters = 0;
    {
        auto named = model.named_params();
        std::vector<Tensor> params;
        for (auto& [name, t] : named) params.push_back(t);
        opt.init_velocity(params);
        // make the velocity nontrivial
        opt.velocity[0][0] = 0.123456789123456789;
        opt.iter = 17;
    }
    save_checkpoint(p, checkpoint_from_model(model, &opt));

    SUBCASE("double-precision values roundtrip bit-for-bit") {
        Model other = Model::init(cfg);
        // perturb so we can tell restoration happened
        for (auto& [name, t] : other.named_params())
            for (auto& v : t.values()) v += 1.0;
        OptimizerState opt2;
        load_into_model(load_checkpoint(p), other, &opt2);
        auto a = model.named_params();
        auto b = other.named_params();
        REQUIRE(a.size() == b.size());
        for (std::size_t k = 0; k < a.size(); ++k) {
            CHECK(a[k].first == b[k].first);
            CHECK(a[k].second.values() == b[k].second.values());
        }
        CHECK(opt2.iter == 17);
        CHECK(opt2.velocity[0][0] == 0.123456789123456789);
    }
    SUBCASE("embedded config roundtrips") {
        RunConfig back = config_from_checkpoint(load_checkpoint(p));
        CHECK(back.grid_size == cfg.grid_size);
        CHECK(back.c_fpn == cfg.c_fpn);
        CHECK(back.num_layers == cfg.num_layers);
    }
    SUBCASE("architecture mismatch lists missing and extra names") {
        RunConfig bigger = cfg;
        bigger.num_layers = 2;
        Model other = Model::init(bigger);
        try {
            load_into_model(load_checkpoint(p), other);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("mismatch") != std::string::npos);
        }
    }
}
