#include "docsegtr/evalkit.hpp"

#include "docsegtr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace docsegtr {

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
    if (a.h != b.h || a.w != b.w) {
        throw ShapeError("mask_iou: shape mismatch " + std::to_string(a.h) + "x" +
                         std::to_string(a.w) + " vs " + std::to_string(b.h) + "x" +
                         std::to_string(b.w));
    }
    std::int64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool av = a.data[i] != 0, bv = b.data[i] != 0;
        inter += (av && bv) ? 1 : 0;
        uni += (av || bv) ? 1 : 0;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

RleMask rle_encode(const BinaryMask& mask) {
    RleMask r;
    r.height = mask.h;
    r.width = mask.w;
    std::uint8_t cur = 0;  // runs start with zeros
    std::int64_t run = 0;
    for (auto v : mask.data) {
        const std::uint8_t bit = v ? 1 : 0;
        if (bit == cur) {
            ++run;
        } else {
            r.counts.push_back(run);
            cur = bit;
            run = 1;
        }
    }
    r.counts.push_back(run);
    return r;
}

BinaryMask rle_decode(const RleMask& rle) {
    std::int64_t total = 0;
    for (auto c : rle.counts) {
        if (c < 0) throw FormatError("rle_decode: negative run length");
        total += c;
    }
    if (total != rle.height * rle.width) {
        throw FormatError("rle_decode: counts sum " + std::to_string(total) + " != " +
                          std::to_string(rle.height) + "x" + std::to_string(rle.width));
    }
    BinaryMask m(rle.height, rle.width);
    std::size_t pos = 0;
    std::uint8_t cur = 0;
    for (auto c : rle.counts) {
        for (std::int64_t i = 0; i < c; ++i) m.data[pos++] = cur;
        cur ^= 1;
    }
    return m;
}

// ---- record IO ----

void write_records(std::ostream& os, const std::vector<ImageRecord>& records, RecordKind kind) {
    os << "docsegtr-eval v1 " << (kind == RecordKind::kGroundTruth ? "gt" : "pred") << "\n";
    for (const auto& rec : records) {
        os << rec.image_id << " " << rec.width << " " << rec.height << " " << rec.instances.size();
        for (const auto& inst : rec.instances) {
            os << " ; " << inst.class_id;
            if (kind == RecordKind::kPrediction) {
                std::ostringstream s;
                s.precision(17);
                s << inst.score;
                os << " " << s.str();
            }
            for (auto c : inst.rle.counts) os << " " << c;
        }
        os << "\n";
    }
}

std::vector<ImageRecord> read_records(std::istream& is, RecordKind* kind_out) {
    std::string header;
    if (!std::getline(is, header)) throw FormatError("eval records: empty stream");
    RecordKind kind;
    if (header == "docsegtr-eval v1 gt") {
        kind = RecordKind::kGroundTruth;
    } else if (header == "docsegtr-eval v1 pred") {
        kind = RecordKind::kPrediction;
    } else {
        throw FormatError("eval records: bad header '" + header + "'");
    }
    if (kind_out) *kind_out = kind;

    std::vector<ImageRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        ImageRecord rec;
        std::size_t k = 0;
        if (!(ls >> rec.image_id >> rec.width >> rec.height >> k)) {
            throw FormatError("eval records: malformed line '" + line + "'");
        }
        for (std::size_t i = 0; i < k; ++i) {
            std::string sep;
            if (!(ls >> sep) || sep != ";") throw FormatError("eval records: missing ';' in '" + line + "'");
            RecordInstance inst;
            if (!(ls >> inst.class_id)) throw FormatError("eval records: missing class id");
            if (kind == RecordKind::kPrediction) {
                if (!(ls >> inst.score)) throw FormatError("eval records: missing score");
            }
            inst.rle.height = rec.height;
            inst.rle.width = rec.width;
            // counts run until the next ';' or end of line
            std::int64_t c;
            while (ls >> std::ws, ls.peek() != ';' && (ls >> c)) inst.rle.counts.push_back(c);
            ls.clear();
            std::int64_t total = 0;
            for (auto v : inst.rle.counts) total += v;
            if (total != rec.width * rec.height) {
                throw FormatError("eval records: rle counts do not cover " + rec.image_id);
            }
            rec.instances.push_back(std::move(inst));
        }
        out.push_back(std::move(rec));
    }
    return out;
}

void write_records_file(const std::string& path, const std::vector<ImageRecord>& records,
                        RecordKind kind) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for writing: " + path);
    write_records(os, records, kind);
}

std::vector<ImageRecord> read_records_file(const std::string& path, RecordKind* kind_out) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path);
    try {
        return read_records(is, kind_out);
    } catch (const FormatError& e) {
        throw FormatError(std::string(e.what()) + " (file: " + path + ")");
    }
}

// ---- AP ----

namespace {

struct FlatPred {
    std::size_t image = 0;
    double score = 0.0;
    std::size_t order = 0;  // input order, stabilizes the sort
    BinaryMask mask;
};

struct FlatGt {
    std::size_t image = 0;
    BinaryMask mask;
};

}  // namespace

double average_precision(const std::vector<ImageRecord>& preds,
                         const std::vector<ImageRecord>& gts,
                         int class_id, double iou_thr) {
    // index gt by image id
    std::map<std::string, std::size_t> gt_index;
    for (std::size_t i = 0; i < gts.size(); ++i) gt_index[gts[i].image_id] = i;

    std::vector<std::vector<FlatGt>> gt_per_image(gts.size());
    std::size_t total_gt = 0;
    for (std::size_t i = 0; i < gts.size(); ++i) {
        for (const auto& inst : gts[i].instances) {
            if (inst.class_id != class_id) continue;
            gt_per_image[i].push_back(FlatGt{i, rle_decode(inst.rle)});
            ++total_gt;
        }
    }
    if (total_gt == 0) return 0.0;

    std::vector<FlatPred> flat;
    std::size_t order = 0;
    for (const auto& rec : preds) {
        auto it = gt_index.find(rec.image_id);
        for (const auto& inst : rec.instances) {
            if (inst.class_id != class_id) continue;
            FlatPred fp;
            fp.image = (it == gt_index.end()) ? SIZE_MAX : it->second;
            fp.score = inst.score;
            fp.order = order++;
            fp.mask = rle_decode(inst.rle);
            flat.push_back(std::move(fp));
        }
    }
    std::sort(flat.begin(), flat.end(), [](const FlatPred& a, const FlatPred& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.order < b.order;
    });

    std::vector<std::vector<bool>> matched(gts.size());
    for (std::size_t i = 0; i < gts.size(); ++i) matched[i].assign(gt_per_image[i].size(), false);

    std::vector<int> tp(flat.size(), 0);
    for (std::size_t k = 0; k < flat.size(); ++k) {
        const auto& fp = flat[k];
        if (fp.image == SIZE_MAX) continue;  // no gt for this image: FP
        double best_iou = -1.0;
        std::size_t best = SIZE_MAX;
        const auto& candidates = gt_per_image[fp.image];
        for (std::size_t g = 0; g < candidates.size(); ++g) {
            if (matched[fp.image][g]) continue;
            const double iou = mask_iou(fp.mask, candidates[g].mask);
            if (iou >= iou_thr && iou > best_iou) {  // strict >: ties keep the earlier gt
                best_iou = iou;
                best = g;
            }
        }
        if (best != SIZE_MAX) {
            matched[fp.image][best] = true;
            tp[k] = 1;
        }
    }

    // precision-recall curve, 101-point interpolation
    std::vector<double> precision(flat.size()), recall(flat.size());
    std::int64_t cum_tp = 0;
    for (std::size_t k = 0; k < flat.size(); ++k) {
        cum_tp += tp[k];
        precision[k] = static_cast<double>(cum_tp) / static_cast<double>(k + 1);
        recall[k] = static_cast<double>(cum_tp) / static_cast<double>(total_gt);
    }
    double ap = 0.0;
    for (int r = 0; r <= 100; ++r) {
        const double rr = static_cast<double>(r) / 100.0;
        // max precision at recall >= rr; zero when recall never reaches rr
        double best = 0.0;
        for (std::size_t k = 0; k < flat.size(); ++k) {
            if (recall[k] + 1e-12 >= rr) best = std::max(best, precision[k]);
        }
        ap += best;
    }
    return ap / 101.0;
}

EvalReport coco_map(const std::vector<ImageRecord>& preds, const std::vector<ImageRecord>& gts) {
    std::set<int> classes;
    for (const auto& rec : gts) {
        for (const auto& inst : rec.instances) classes.insert(inst.class_id);
    }
    EvalReport report;
    if (classes.empty()) return report;

    std::vector<double> thresholds;
    for (int t = 0; t < 10; ++t) thresholds.push_back(static_cast<double>(50 + 5 * t) / 100.0);

    double total = 0.0, total50 = 0.0, total75 = 0.0;
    for (int cls : classes) {
        double cls_sum = 0.0;
        for (double thr : thresholds) {
            const double ap = average_precision(preds, gts, cls, thr);
            cls_sum += ap;
        }
        report.per_class_ap[cls] = cls_sum / static_cast<double>(thresholds.size());
        total += cls_sum / static_cast<double>(thresholds.size());
        total50 += average_precision(preds, gts, cls, 0.50);
        total75 += average_precision(preds, gts, cls, 0.75);
    }
    const double nc = static_cast<double>(classes.size());
    report.ap = total / nc;
    report.ap50 = total50 / nc;
    report.ap75 = total75 / nc;
    return report;
}

}  // namespace docsegtr
