// docsegtr command line: synthetic data generation, training, inference,
// COCO-style evaluation, and the twin-attention complexity benchmark.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "docsegtr/checkpoint.hpp"
#include "docsegtr/trainer.hpp"

namespace fs = std::filesystem;
using namespace docsegtr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

// fixed per-class overlay colors: text, title, list, table, figure
constexpr std::uint8_t kClassColors[5][3] = {
    {0, 0, 255}, {255, 0, 0}, {0, 160, 0}, {255, 140, 0}, {128, 0, 160}};

std::pair<std::int64_t, std::int64_t> parse_size(const std::string& s) {
    const auto x = s.find('x');
    if (x == std::string::npos) throw ConfigError("--size must look like 128x128");
    try {
        return {std::stoll(s.substr(0, x)), std::stoll(s.substr(x + 1))};  // HxW
    } catch (const std::logic_error&) {
        throw ConfigError("--size must look like 128x128");
    }
}

int cmd_gen_data(const std::string& out, std::int64_t num, const std::string& size,
                 std::uint64_t seed, std::int64_t min_inst, std::int64_t max_inst, bool force) {
    auto [h, w] = parse_size(size);
    GenConfig cfg;
    cfg.height = h;
    cfg.width = w;
    cfg.seed = seed;
    cfg.min_instances = min_inst;
    cfg.max_instances = max_inst;
    cfg.validate();
    if (fs::exists(fs::path(out) / "meta.txt") && !force) {
        std::cerr << "error: " << out << " already holds a dataset (use --force to overwrite)\n";
        return kExitUsage;
    }
    write_dataset(cfg, num, out);
    std::cout << "wrote " << num << " samples to " << out << "\n";
    return kExitOk;
}

int cmd_train(const std::string& data_dir, const std::string& config_path, std::int64_t iters,
              const std::string& out_ckpt, const std::string& log_path,
              const std::string& resume_path) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    cfg.validate();
    Dataset data = read_dataset(data_dir);

    Model model = Model::init(cfg);
    OptimizerState opt;
    opt.lr_base = cfg.lr;
    opt.momentum = cfg.momentum;
    opt.weight_decay = cfg.weight_decay;
    opt.warmup_iters = cfg.warmup_iters;
    opt.milestones = cfg.milestones;

    if (!resume_path.empty()) {
        load_into_model(load_checkpoint(resume_path), model, &opt);
    }

    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path, std::ios::binary);
        if (!log) throw FormatError("cannot open log file: " + log_path);
        log << "iter,total_loss,focal,dice,lr\n";
    }

    TrainResult result = train_model(model, opt, data, iters, log.is_open() ? &log : nullptr);
    if (result.diverged) {
        std::cerr << "error: non-finite loss at iteration " << result.diverged_iter << "\n";
        return kExitNumeric;
    }
    save_checkpoint(out_ckpt, checkpoint_from_model(model, &opt));
    std::cout << "trained " << iters << " iterations; loss " << result.initial_loss << " -> "
              << result.final_loss << "; checkpoint: " << out_ckpt << "\n";
    return kExitOk;
}

Image8 render_overlay(const Image8& base, const InstanceSet& instances, double mask_thr) {
    Image8 out = base;
    for (const auto& inst : instances.items) {
        const auto& color = kClassColors[inst.class_id % 5];
        BinaryMask m = binarize(inst.soft_mask, mask_thr);
        for (std::int64_t y = 0; y < out.h; ++y) {
            const std::int64_t my = (y * m.h) / out.h;
            for (std::int64_t x = 0; x < out.w; ++x) {
                const std::int64_t mx = (x * m.w) / out.w;
                if (!m.at(my, mx)) continue;
                std::uint8_t* px = out.px(y, x);
                for (int c = 0; c < 3; ++c) {
                    px[c] = static_cast<std::uint8_t>((px[c] + color[c]) / 2);  // 50% alpha
                }
            }
        }
    }
    return out;
}

int cmd_infer(const std::string& ckpt_path, const std::string& image_path,
              const std::string& overlay_path, const std::string& pred_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    RunConfig cfg = config_from_checkpoint(ckpt);
    Model model = Model::init(cfg);
    load_into_model(ckpt, model);

    Image8 img = read_ppm(image_path);
    Tensor image = image_to_tensor(img);
    InstanceSet instances = model.predict(image);

    ImageRecord rec;
    rec.image_id = fs::path(image_path).stem().string();
    rec.width = img.w;
    rec.height = img.h;
    for (const auto& inst : instances.items) {
        RecordInstance ri;
        ri.class_id = inst.class_id;
        ri.score = inst.score;
        // export masks at image resolution
        BinaryMask m = binarize(inst.soft_mask, cfg.mask_thr);
        BinaryMask full(img.h, img.w);
        for (std::int64_t y = 0; y < img.h; ++y) {
            const std::int64_t my = (y * m.h) / img.h;
            for (std::int64_t x = 0; x < img.w; ++x) {
                full.at(y, x) = m.at(my, (x * m.w) / img.w);
            }
        }
        ri.rle = rle_encode(full);
        rec.instances.push_back(std::move(ri));
    }
    write_records_file(pred_path, {rec}, RecordKind::kPrediction);
    write_ppm(overlay_path, render_overlay(img, instances, cfg.mask_thr));
    std::cout << "predicted " << instances.items.size() << " instances\n";
    return kExitOk;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_dir) {
    RecordKind kind;
    auto preds = read_records_file(pred_path, &kind);
    if (kind != RecordKind::kPrediction) throw FormatError("--pred file is not a prediction file");
    auto gts = read_records_file((fs::path(gt_dir) / "annotations.txt").string(), &kind);
    if (kind != RecordKind::kGroundTruth) throw FormatError("--gt annotations are not ground truth");

    EvalReport report = coco_map(preds, gts);
    const auto catalog = ClassCatalog::document_layout();
    std::cout.setf(std::ios::fixed);
    std::cout.precision(3);
    std::cout << "AP      " << report.ap << "\n"
              << "AP@0.5  " << report.ap50 << "\n"
              << "AP@0.75 " << report.ap75 << "\n";
    for (const auto& [cls, ap] : report.per_class_ap) {
        std::string name = cls >= 0 && cls < catalog.num_classes()
                               ? catalog.names[static_cast<std::size_t>(cls)]
                               : "class_" + std::to_string(cls);
        std::cout << "AP[" << name << "] " << ap << "\n";
    }
    return kExitOk;
}

int cmd_bench_attn(std::int64_t h, std::int64_t w, std::int64_t channels, std::int64_t heads) {
    detail::NoGradGuard no_grad;
    Rng rng(42);
    std::vector<double> vals(static_cast<std::size_t>(h * w * channels));
    for (auto& v : vals) v = rng.next_normal();
    Tensor grid(Shape{h, w, channels}, std::move(vals));
    MhaParams full_p = MhaParams::init(channels, heads, rng);
    AttentionParams twin_p = AttentionParams::init(channels, heads, rng);

    using clock = std::chrono::steady_clock;
    std::int64_t full_count = 0, twin_count = 0;

    auto t0 = clock::now();
    (void)full_attention(grid, full_p, &full_count);
    auto t1 = clock::now();
    (void)twin_attention(GridFeatures{grid}, twin_p, &twin_count);
    auto t2 = clock::now();

    const std::int64_t full_formula = attention_score_count(h, w, AttentionMode::kFull);
    const std::int64_t twin_formula = attention_score_count(h, w, AttentionMode::kTwin);
    const double full_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    const double twin_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();

    std::cout << "full attention: counted " << full_count << " score entries, formula (h*w)^2 = "
              << full_formula << ", " << full_ms << " ms\n";
    std::cout << "twin attention: counted " << twin_count << " score entries, formula h*w^2+w*h^2 = "
              << twin_formula << ", " << twin_ms << " ms\n";
    std::cout.setf(std::ios::fixed);
    std::cout.precision(2);
    std::cout << "ratio " << static_cast<double>(full_formula) / static_cast<double>(twin_formula)
              << "\n";
    if (full_count != full_formula || twin_count != twin_formula) {
        std::cerr << "error: instrumented counts diverge from the closed forms\n";
        return kExitNumeric;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DocSegTr-style document instance segmentation"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic layout dataset");
    std::string gen_out, gen_size = "128x128";
    std::int64_t gen_num = 8, gen_min = 2, gen_max = 5;
    std::uint64_t gen_seed = 0;
    bool gen_force = false;
    gen->add_option("--out", gen_out)->required();
    gen->add_option("--num", gen_num);
    gen->add_option("--size", gen_size);
    gen->add_option("--seed", gen_seed);
    gen->add_option("--min-inst", gen_min);
    gen->add_option("--max-inst", gen_max);
    gen->add_flag("--force", gen_force);

    // train
    auto* train = app.add_subcommand("train", "Train on a generated dataset");
    std::string tr_data, tr_config, tr_out, tr_log, tr_resume;
    std::int64_t tr_iters = 200;
    train->add_option("--data", tr_data)->required();
    train->add_option("--config", tr_config);
    train->add_option("--iters", tr_iters);
    train->add_option("--out", tr_out)->required();
    train->add_option("--log", tr_log);
    train->add_option("--resume", tr_resume);

    // infer
    auto* infer = app.add_subcommand("infer", "Run inference on one PPM image");
    std::string in_ckpt, in_image, in_overlay, in_pred;
    infer->add_option("--ckpt", in_ckpt)->required();
    infer->add_option("--image", in_image)->required();
    infer->add_option("--out-overlay", in_overlay)->required();
    infer->add_option("--out-pred", in_pred)->required();

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate predictions against a dataset");
    std::string ev_pred, ev_gt;
    eval->add_option("--pred", ev_pred)->required();
    eval->add_option("--gt", ev_gt)->required();

    // bench-attn
    auto* bench = app.add_subcommand("bench-attn", "Full vs twin attention cost");
    std::int64_t b_h = 32, b_w = 32, b_c = 32, b_heads = 4;
    bench->add_option("--height", b_h);
    bench->add_option("--width", b_w);
    bench->add_option("--channels", b_c);
    bench->add_option("--heads", b_heads);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_out, gen_num, gen_size, gen_seed, gen_min, gen_max, gen_force);
        if (train->parsed()) return cmd_train(tr_data, tr_config, tr_iters, tr_out, tr_log, tr_resume);
        if (infer->parsed()) return cmd_infer(in_ckpt, in_image, in_overlay, in_pred);
        if (eval->parsed()) return cmd_eval(ev_pred, ev_gt);
        if (bench->parsed()) return cmd_bench_attn(b_h, b_w, b_c, b_heads);
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
