#include "docsegtr/synthdoc.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "docsegtr/rng.hpp"

namespace fs = std::filesystem;

namespace docsegtr {

void GenConfig::validate() const {
    if (height % 64 != 0 || width % 64 != 0) {
        throw ConfigError("synthdoc: image dims must be divisible by 64, got " +
                          std::to_string(height) + "x" + std::to_string(width));
    }
    if (min_instances < 1 || min_instances > max_instances) {
        throw ConfigError("synthdoc: need 1 <= min_instances <= max_instances");
    }
}

namespace {

struct Rect {
    std::int64_t y0, x0, y1, x1;  // half-open

    bool overlaps(const Rect& o) const {
        return y0 < o.y1 && o.y0 < y1 && x0 < o.x1 && o.x0 < x1;
    }
};

void fill(Tensor& img, const Rect& r, double red, double green, double blue) {
    const std::int64_t h = img.dim(1), w = img.dim(2);
    const double rgb[3] = {red, green, blue};
    for (int c = 0; c < 3; ++c)
        for (std::int64_t y = r.y0; y < r.y1; ++y)
            for (std::int64_t x = r.x0; x < r.x1; ++x)
                img.at((c * h + y) * w + x) = rgb[c];
}

// Distinct deterministic texture per class, drawn inside the rect on the
// white page. Masks cover the whole rect regardless of texture.
void render_class(Tensor& img, const Rect& r, int class_id) {
    const std::int64_t rh = r.y1 - r.y0, rw = r.x1 - r.x0;
    switch (class_id) {
        case 0: {  // text: thin horizontal dark stripes
            fill(img, r, 0.97, 0.97, 0.97);
            for (std::int64_t y = r.y0 + 1; y + 1 < r.y1; y += 5) {
                fill(img, Rect{y, r.x0 + 1, std::min(y + 2, r.y1), r.x1 - 1}, 0.15, 0.15, 0.15);
            }
            break;
        }
        case 1: {  // title: one thick stripe
            fill(img, r, 0.95, 0.95, 0.95);
            const std::int64_t mid = r.y0 + rh / 2;
            const std::int64_t half = std::max<std::int64_t>(1, rh / 4);
            fill(img, Rect{mid - half, r.x0 + 1, mid + half, r.x1 - 1}, 0.05, 0.05, 0.05);
            break;
        }
        case 2: {  // list: stripes with left bullets
            fill(img, r, 0.97, 0.97, 0.97);
            for (std::int64_t y = r.y0 + 1; y + 2 < r.y1; y += 6) {
                fill(img, Rect{y, r.x0 + 1, y + 3, r.x0 + 4}, 0.0, 0.0, 0.0);  // bullet
                fill(img, Rect{y, r.x0 + 6, std::min(y + 2, r.y1), r.x1 - 1}, 0.2, 0.2, 0.2);
            }
            break;
        }
        case 3: {  // table: grid lines
            fill(img, r, 0.92, 0.92, 0.92);
            for (std::int64_t y = r.y0; y < r.y1; y += std::max<std::int64_t>(4, rh / 4)) {
                fill(img, Rect{y, r.x0, std::min(y + 1, r.y1), r.x1}, 0.1, 0.1, 0.1);
            }
            for (std::int64_t x = r.x0; x < r.x1; x += std::max<std::int64_t>(4, rw / 4)) {
                fill(img, Rect{r.y0, x, r.y1, std::min(x + 1, r.x1)}, 0.1, 0.1, 0.1);
            }
            break;
        }
        default: {  // figure: filled gray block with border
            fill(img, r, 0.05, 0.05, 0.05);
            if (rh > 4 && rw > 4) {
                fill(img, Rect{r.y0 + 2, r.x0 + 2, r.y1 - 2, r.x1 - 2}, 0.55, 0.55, 0.55);
            }
            break;
        }
    }
}

}  // namespace

LayoutSample generate_sample(const GenConfig& cfg, std::int64_t index) {
    cfg.validate();
    Rng rng(cfg.seed ^ static_cast<std::uint64_t>(index));
    const std::int64_t h = cfg.height, w = cfg.width;

    LayoutSample sample;
    sample.seed = static_cast<std::int64_t>(cfg.seed);
    sample.image = Tensor(Shape{3, h, w}, 1.0);  // white page

    const std::int64_t span = cfg.max_instances - cfg.min_instances + 1;
    const std::int64_t want = cfg.min_instances +
                              static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(span)));

    std::vector<Rect> placed;
    for (std::int64_t k = 0; k < want; ++k) {
        const int class_id = static_cast<int>(rng.next_below(5));
        bool ok = false;
        Rect r{};
        for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
            const std::int64_t rh = h / 8 + static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(h / 4)));
            const std::int64_t rw = w / 8 + static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(w / 3)));
            const std::int64_t y0 = 2 + static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(h - rh - 4)));
            const std::int64_t x0 = 2 + static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(w - rw - 4)));
            r = Rect{y0, x0, y0 + rh, x0 + rw};
            // 2px margin keeps neighboring masks clearly separated
            const Rect grown{r.y0 - 2, r.x0 - 2, r.y1 + 2, r.x1 + 2};
            ok = std::none_of(placed.begin(), placed.end(),
                              [&](const Rect& p) { return grown.overlaps(p); });
        }
        if (!ok) continue;  // placement failure: emit fewer instances
        placed.push_back(r);
        render_class(sample.image, r, class_id);

        GtInstance inst;
        inst.class_id = class_id;
        inst.mask = BinaryMask(h, w);
        for (std::int64_t y = r.y0; y < r.y1; ++y)
            for (std::int64_t x = r.x0; x < r.x1; ++x) inst.mask.at(y, x) = 1;
        sample.instances.push_back(std::move(inst));
    }
    return sample;
}

Image8 tensor_to_image(const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("tensor_to_image expects [3,H,W]");
    const std::int64_t h = image.dim(1), w = image.dim(2);
    Image8 img(h, w);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(image.at((c * h + y) * w + x), 0.0, 1.0);
                img.px(y, x)[c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
    return img;
}

Tensor image_to_tensor(const Image8& img) {
    Tensor t(Shape{3, img.h, img.w});
    for (std::int64_t y = 0; y < img.h; ++y)
        for (std::int64_t x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c)
                t.at((c * img.h + y) * img.w + x) = static_cast<double>(img.px(y, x)[c]) / 255.0;
    return t;
}

std::string sample_image_id(std::int64_t index) {
    std::ostringstream os;
    os << "sample_";
    os.width(5);
    os.fill('0');
    os << index;
    return os.str();
}

void write_dataset(const GenConfig& cfg, std::int64_t count, const std::string& dir) {
    cfg.validate();
    fs::create_directories(dir);
    std::vector<ImageRecord> records;
    for (std::int64_t i = 0; i < count; ++i) {
        LayoutSample s = generate_sample(cfg, i);
        const std::string id = sample_image_id(i);
        write_ppm((fs::path(dir) / (id + ".ppm")).string(), tensor_to_image(s.image));
        ImageRecord rec;
        rec.image_id = id;
        rec.width = cfg.width;
        rec.height = cfg.height;
        for (const auto& inst : s.instances) {
            RecordInstance ri;
            ri.class_id = inst.class_id;
            ri.rle = rle_encode(inst.mask);
            rec.instances.push_back(std::move(ri));
        }
        records.push_back(std::move(rec));
    }
    write_records_file((fs::path(dir) / "annotations.txt").string(), records,
                       RecordKind::kGroundTruth);
    std::ofstream meta((fs::path(dir) / "meta.txt").string(), std::ios::binary);
    if (!meta) throw FormatError("cannot write meta.txt in " + dir);
    meta << "format=docsegtr-dataset v1\n"
         << "height=" << cfg.height << "\n"
         << "width=" << cfg.width << "\n"
         << "min_instances=" << cfg.min_instances << "\n"
         << "max_instances=" << cfg.max_instances << "\n"
         << "seed=" << cfg.seed << "\n"
         << "count=" << count << "\n";
}

Dataset read_dataset(const std::string& dir) {
    const std::string meta_path = (fs::path(dir) / "meta.txt").string();
    std::ifstream meta(meta_path, std::ios::binary);
    if (!meta) throw FormatError("cannot open: " + meta_path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(meta, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (!line.empty()) throw FormatError("malformed meta line in " + meta_path + ": " + line);
            continue;
        }
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    std::int64_t count;
    Dataset ds;
    try {
        ds.cfg.height = std::stoll(kv.at("height"));
        ds.cfg.width = std::stoll(kv.at("width"));
        ds.cfg.min_instances = std::stoll(kv.at("min_instances"));
        ds.cfg.max_instances = std::stoll(kv.at("max_instances"));
        ds.cfg.seed = std::stoull(kv.at("seed"));
        count = std::stoll(kv.at("count"));
    } catch (const std::exception&) {
        throw FormatError("incomplete or malformed meta file: " + meta_path);
    }

    auto records = read_records_file((fs::path(dir) / "annotations.txt").string());
    if (static_cast<std::int64_t>(records.size()) != count) {
        throw FormatError("annotation count mismatch in " + dir);
    }
    std::map<std::string, const ImageRecord*> by_id;
    for (const auto& r : records) by_id[r.image_id] = &r;

    for (std::int64_t i = 0; i < count; ++i) {
        const std::string id = sample_image_id(i);
        auto it = by_id.find(id);
        if (it == by_id.end()) throw FormatError("missing annotation record for " + id + " in " + dir);
        LayoutSample s;
        s.seed = static_cast<std::int64_t>(ds.cfg.seed);
        s.image = image_to_tensor(read_ppm((fs::path(dir) / (id + ".ppm")).string()));
        for (const auto& ri : it->second->instances) {
            GtInstance gi;
            gi.class_id = ri.class_id;
            gi.mask = rle_decode(ri.rle);
            s.instances.push_back(std::move(gi));
        }
        ds.image_ids.push_back(id);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace docsegtr
