#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "docsegtr/mask.hpp"

namespace docsegtr {

class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Row-major RLE, alternating zero-runs and one-runs starting with the
/// zero-run (possibly 0).
struct RleMask {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<std::int64_t> counts;
};

double mask_iou(const BinaryMask& a, const BinaryMask& b);

RleMask rle_encode(const BinaryMask& mask);
BinaryMask rle_decode(const RleMask& rle);

/// One scored instance as it appears in an eval record.
struct RecordInstance {
    int class_id = 0;
    double score = 1.0;  // meaningful for predictions only
    RleMask rle;
};

struct ImageRecord {
    std::string image_id;
    std::int64_t width = 0;
    std::int64_t height = 0;
    std::vector<RecordInstance> instances;
};

enum class RecordKind { kGroundTruth, kPrediction };

/// "docsegtr-eval v1" line-delimited format. Header:
///   docsegtr-eval v1 <gt|pred>
/// then one image per line:
///   <image_id> <width> <height> <k> [; <class_id> [<score>] <counts...>]*k
/// (score present only in prediction files).
void write_records(std::ostream& os, const std::vector<ImageRecord>& records, RecordKind kind);
std::vector<ImageRecord> read_records(std::istream& is, RecordKind* kind_out = nullptr);
void write_records_file(const std::string& path, const std::vector<ImageRecord>& records, RecordKind kind);
std::vector<ImageRecord> read_records_file(const std::string& path, RecordKind* kind_out = nullptr);

struct EvalReport {
    std::map<int, double> per_class_ap;  // averaged over IoU thresholds
    double ap = 0.0;
    double ap50 = 0.0;
    double ap75 = 0.0;
};

/// AP for one class at one IoU threshold: greedy score-descending
/// matching across the dataset, 101-point interpolated precision-recall.
double average_precision(const std::vector<ImageRecord>& preds,
                         const std::vector<ImageRecord>& gts,
                         int class_id, double iou_thr);

/// COCO-style mask mAP over thresholds 0.50:0.05:0.95. Classes absent
/// from the ground truth are excluded from the means.
EvalReport coco_map(const std::vector<ImageRecord>& preds, const std::vector<ImageRecord>& gts);

}  // namespace docsegtr
