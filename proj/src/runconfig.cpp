#include "docsegtr/runconfig.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "docsegtr/evalkit.hpp"

namespace docsegtr {

void RunConfig::validate() const {
    if (grid_size < 1) throw ConfigError("config: grid_size must be >= 1");
    if (num_layers < 0) throw ConfigError("config: num_layers must be >= 0");
    if (c_stem < 1 || c_fpn < 1 || c_mask < 1) throw ConfigError("config: channel counts must be >= 1");
    if (theta < 1 || theta % 2 == 0) throw ConfigError("config: theta must be odd and >= 1");
    if (num_classes < 1) throw ConfigError("config: num_classes must be >= 1");
    if (num_heads < 1 || c_fpn % num_heads != 0) {
        throw ConfigError("config: c_fpn must be divisible by num_heads");
    }
    if (mlp_ratio < 1) throw ConfigError("config: mlp_ratio must be >= 1");
    if (lr <= 0.0) throw ConfigError("config: lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("config: momentum must be in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("config: weight_decay must be >= 0");
    if (warmup_iters < 0) throw ConfigError("config: warmup_iters must be >= 0");
    if (lambda_mask < 0.0) throw ConfigError("config: lambda_mask must be >= 0");
    if (nms_sigma <= 0.0) throw ConfigError("config: nms_sigma must be > 0");
    if (top_k < 1) throw ConfigError("config: top_k must be >= 1");
    if (!(score_thr >= 0.0 && score_thr <= 1.0)) throw ConfigError("config: score_thr must be in [0,1]");
    if (!(mask_thr >= 0.0 && mask_thr <= 1.0)) throw ConfigError("config: mask_thr must be in [0,1]");
    for (auto m : milestones) {
        if (m < 0) throw ConfigError("config: milestones must be >= 0");
    }
}

static bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: bad boolean for " + key + ": " + v);
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config: expected key=value, got: " + line);
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        try {
            if (key == "grid_size") cfg.grid_size = std::stoll(val);
            else if (key == "num_layers") cfg.num_layers = std::stoll(val);
            else if (key == "c_stem") cfg.c_stem = std::stoll(val);
            else if (key == "c_fpn") cfg.c_fpn = std::stoll(val);
            else if (key == "c_mask") cfg.c_mask = std::stoll(val);
            else if (key == "theta") cfg.theta = std::stoll(val);
            else if (key == "num_classes") cfg.num_classes = std::stoll(val);
            else if (key == "num_heads") cfg.num_heads = std::stoll(val);
            else if (key == "mlp_ratio") cfg.mlp_ratio = std::stoll(val);
            else if (key == "use_transformer") cfg.use_transformer = parse_bool(val, key);
            else if (key == "use_attention") cfg.use_attention = parse_bool(val, key);
            else if (key == "lr") cfg.lr = std::stod(val);
            else if (key == "momentum") cfg.momentum = std::stod(val);
            else if (key == "weight_decay") cfg.weight_decay = std::stod(val);
            else if (key == "warmup_iters") cfg.warmup_iters = std::stoll(val);
            else if (key == "lambda_mask") cfg.lambda_mask = std::stod(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "score_thr") cfg.score_thr = std::stod(val);
            else if (key == "mask_thr") cfg.mask_thr = std::stod(val);
            else if (key == "nms_sigma") cfg.nms_sigma = std::stod(val);
            else if (key == "top_k") cfg.top_k = std::stoll(val);
            else if (key == "milestones") {
                cfg.milestones.clear();
                if (!val.empty()) {
                    std::istringstream ms(val);
                    std::string tok;
                    while (std::getline(ms, tok, ',')) cfg.milestones.push_back(std::stoll(tok));
                }
            } else {
                throw ConfigError("config: unknown key: " + key);
            }
        } catch (const std::logic_error&) {
            throw ConfigError("config: bad value for " + key + ": " + val);
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_run_config(buf.str());
}

std::string dump_run_config(const RunConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "grid_size=" << cfg.grid_size << "\n"
       << "num_layers=" << cfg.num_layers << "\n"
       << "c_stem=" << cfg.c_stem << "\n"
       << "c_fpn=" << cfg.c_fpn << "\n"
       << "c_mask=" << cfg.c_mask << "\n"
       << "theta=" << cfg.theta << "\n"
       << "num_classes=" << cfg.num_classes << "\n"
       << "num_heads=" << cfg.num_heads << "\n"
       << "mlp_ratio=" << cfg.mlp_ratio << "\n"
       << "use_transformer=" << (cfg.use_transformer ? "true" : "false") << "\n"
       << "use_attention=" << (cfg.use_attention ? "true" : "false") << "\n"
       << "lr=" << cfg.lr << "\n"
       << "momentum=" << cfg.momentum << "\n"
       << "weight_decay=" << cfg.weight_decay << "\n"
       << "warmup_iters=" << cfg.warmup_iters << "\n"
       << "milestones=";
    for (std::size_t i = 0; i < cfg.milestones.size(); ++i) {
        if (i) os << ",";
        os << cfg.milestones[i];
    }
    os << "\n"
       << "lambda_mask=" << cfg.lambda_mask << "\n"
       << "seed=" << cfg.seed << "\n"
       << "score_thr=" << cfg.score_thr << "\n"
       << "mask_thr=" << cfg.mask_thr << "\n"
       << "nms_sigma=" << cfg.nms_sigma << "\n"
       << "top_k=" << cfg.top_k << "\n";
    return os.str();
}

std::vector<double> run_config_to_scalars(const RunConfig& cfg) {
    std::vector<double> v = {
        1.0,  // encoding version
        static_cast<double>(cfg.grid_size),
        static_cast<double>(cfg.num_layers),
        static_cast<double>(cfg.c_stem),
        static_cast<double>(cfg.c_fpn),
        static_cast<double>(cfg.c_mask),
        static_cast<double>(cfg.theta),
        static_cast<double>(cfg.num_classes),
        static_cast<double>(cfg.num_heads),
        static_cast<double>(cfg.mlp_ratio),
        cfg.use_transformer ? 1.0 : 0.0,
        cfg.use_attention ? 1.0 : 0.0,
        cfg.lr,
        cfg.momentum,
        cfg.weight_decay,
        static_cast<double>(cfg.warmup_iters),
        cfg.lambda_mask,
        static_cast<double>(cfg.seed),
        cfg.score_thr,
        cfg.mask_thr,
        cfg.nms_sigma,
        static_cast<double>(cfg.top_k),
        static_cast<double>(cfg.milestones.size()),
    };
    for (auto m : cfg.milestones) v.push_back(static_cast<double>(m));
    return v;
}

RunConfig run_config_from_scalars(const std::vector<double>& v) {
    if (v.size() < 23 || v[0] != 1.0) throw FormatError("bad embedded config encoding");
    RunConfig cfg;
    cfg.grid_size = static_cast<std::int64_t>(v[1]);
    cfg.num_layers = static_cast<std::int64_t>(v[2]);
    cfg.c_stem = static_cast<std::int64_t>(v[3]);
    cfg.c_fpn = static_cast<std::int64_t>(v[4]);
    cfg.c_mask = static_cast<std::int64_t>(v[5]);
    cfg.theta = static_cast<std::int64_t>(v[6]);
    cfg.num_classes = static_cast<std::int64_t>(v[7]);
    cfg.num_heads = static_cast<std::int64_t>(v[8]);
    cfg.mlp_ratio = static_cast<std::int64_t>(v[9]);
    cfg.use_transformer = v[10] != 0.0;
    cfg.use_attention = v[11] != 0.0;
    cfg.lr = v[12];
    cfg.momentum = v[13];
    cfg.weight_decay = v[14];
    cfg.warmup_iters = static_cast<std::int64_t>(v[15]);
    cfg.lambda_mask = v[16];
    cfg.seed = static_cast<std::uint64_t>(v[17]);
    cfg.score_thr = v[18];
    cfg.mask_thr = v[19];
    cfg.nms_sigma = v[20];
    cfg.top_k = static_cast<std::int64_t>(v[21]);
    const auto nm = static_cast<std::size_t>(v[22]);
    if (v.size() != 23 + nm) throw FormatError("bad embedded config encoding (milestones)");
    for (std::size_t i = 0; i < nm; ++i) cfg.milestones.push_back(static_cast<std::int64_t>(v[23 + i]));
    cfg.validate();
    return cfg;
}

}  // namespace docsegtr
