#include "docsegtr/maskgen.hpp"

#include <algorithm>
#include <cmath>

namespace docsegtr {

namespace {

double mask_iou_binary(const BinaryMask& a, const BinaryMask& b) {
    std::int64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool av = a.data[i] != 0, bv = b.data[i] != 0;
        inter += (av && bv) ? 1 : 0;
        uni += (av || bv) ? 1 : 0;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

bool score_order(const Instance& a, const Instance& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.cell_row != b.cell_row) return a.cell_row < b.cell_row;
    if (a.cell_col != b.cell_col) return a.cell_col < b.cell_col;
    return a.class_id < b.class_id;
}

}  // namespace

Tensor dynamic_conv(const MaskFeatureMap& f, const Tensor& kernels, const KernelSpec& spec) {
    spec.validate();
    if (f.f.rank() != 3 || kernels.rank() != 3) {
        throw ShapeError("dynamic_conv: expected f[H,W,c_mask] and kernels[n,n,b]");
    }
    const std::int64_t h = f.f.dim(0), w = f.f.dim(1), cm = f.f.dim(2);
    const std::int64_t n1 = kernels.dim(0), n2 = kernels.dim(1), b = kernels.dim(2);
    if (cm != spec.c_mask || b != spec.kernel_params()) {
        throw ConfigError("dynamic_conv: kernel spec mismatch (c_mask=" + std::to_string(cm) +
                          ", b=" + std::to_string(b) + ", expected b=" +
                          std::to_string(spec.kernel_params()) + ")");
    }
    const std::int64_t theta = spec.theta;
    const std::int64_t pad = (theta - 1) / 2;

    Tensor out(Shape{h, w, n1, n2});
    const auto& vf = f.f.values();
    const auto& vk = kernels.values();
    auto& vo = out.values();
    const std::int64_t cells = n1 * n2;
    for (std::int64_t cell = 0; cell < cells; ++cell) {
        const double* K = vk.data() + cell * b;
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                double acc = 0.0;
                if (theta == 1) {
                    const double* F = vf.data() + (y * w + x) * cm;
                    for (std::int64_t c = 0; c < cm; ++c) acc += K[c] * F[c];
                } else {
                    for (std::int64_t dy = 0; dy < theta; ++dy) {
                        const std::int64_t iy = y + dy - pad;
                        if (iy < 0 || iy >= h) continue;
                        for (std::int64_t dx = 0; dx < theta; ++dx) {
                            const std::int64_t ix = x + dx - pad;
                            if (ix < 0 || ix >= w) continue;
                            const double* Kk = K + (dy * theta + dx) * cm;
                            const double* F = vf.data() + (iy * w + ix) * cm;
                            for (std::int64_t c = 0; c < cm; ++c) acc += Kk[c] * F[c];
                        }
                    }
                }
                vo[(y * w + x) * cells + cell] = acc;
            }
        }
    }

    const bool gf = detail::grad_enabled() && f.f.requires_grad();
    const bool gk = detail::grad_enabled() && kernels.requires_grad();
    if (gf || gk) {
        out.set_requires_grad(true);
        auto pf = f.f.ptr();
        auto pk = kernels.ptr();
        auto po = out.ptr();
        auto& tape = Tape::active();
        po->tape_epoch = tape.epoch();
        po->node = tape.record([pf, pk, po, gf, gk, h, w, cm, cells, theta, pad, b]() {
            if (po->grad.empty()) return;
            if (gf) detail::ensure_grad(*pf);
            if (gk) detail::ensure_grad(*pk);
            const auto& g = po->grad;
            for (std::int64_t cell = 0; cell < cells; ++cell) {
                const double* K = pk->values.data() + cell * b;
                double* dK = gk ? pk->grad.data() + cell * b : nullptr;
                for (std::int64_t y = 0; y < h; ++y) {
                    for (std::int64_t x = 0; x < w; ++x) {
                        const double gv = g[(y * w + x) * cells + cell];
                        if (gv == 0.0) continue;
                        for (std::int64_t dy = 0; dy < theta; ++dy) {
                            const std::int64_t iy = y + dy - pad;
                            if (iy < 0 || iy >= h) continue;
                            for (std::int64_t dx = 0; dx < theta; ++dx) {
                                const std::int64_t ix = x + dx - pad;
                                if (ix < 0 || ix >= w) continue;
                                const std::int64_t koff = (dy * theta + dx) * cm;
                                const double* F = pf->values.data() + (iy * w + ix) * cm;
                                double* dF = gf ? pf->grad.data() + (iy * w + ix) * cm : nullptr;
                                for (std::int64_t c = 0; c < cm; ++c) {
                                    if (gk) dK[koff + c] += gv * F[c];
                                    if (gf) dF[c] += gv * K[koff + c];
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor select_cell(const Tensor& mask_logits, std::int64_t i, std::int64_t j) {
    if (mask_logits.rank() != 4) throw ShapeError("select_cell expects [H,W,n,n]");
    const std::int64_t h = mask_logits.dim(0), w = mask_logits.dim(1);
    const std::int64_t n1 = mask_logits.dim(2), n2 = mask_logits.dim(3);
    if (i < 0 || i >= n1 || j < 0 || j >= n2) throw ShapeError("select_cell: cell index out of range");
    const std::int64_t cells = n1 * n2;
    const std::int64_t off = i * n2 + j;
    Tensor out(Shape{h, w});
    for (std::int64_t p = 0; p < h * w; ++p) out.at(p) = mask_logits.at(p * cells + off);
    if (detail::grad_enabled() && mask_logits.requires_grad()) {
        out.set_requires_grad(true);
        auto pin = mask_logits.ptr();
        auto po = out.ptr();
        auto& tape = Tape::active();
        po->tape_epoch = tape.epoch();
        po->node = tape.record([pin, po, h, w, cells, off]() {
            if (po->grad.empty()) return;
            detail::ensure_grad(*pin);
            for (std::int64_t p = 0; p < h * w; ++p) pin->grad[p * cells + off] += po->grad[p];
        });
    }
    return out;
}

BinaryMask binarize(const Tensor& soft_mask, double thr) {
    if (soft_mask.rank() != 2) throw ShapeError("binarize expects a [H,W] mask");
    BinaryMask m(soft_mask.dim(0), soft_mask.dim(1));
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        m.data[i] = soft_mask.values()[i] >= thr ? 1 : 0;
    }
    return m;
}

InstanceSet matrix_nms(const InstanceSet& items, double sigma, NmsMethod method) {
    if (sigma <= 0.0) throw ConfigError("matrix_nms: sigma must be > 0");
    InstanceSet sorted = items;
    std::stable_sort(sorted.items.begin(), sorted.items.end(), score_order);
    const std::size_t n = sorted.items.size();
    if (n == 0) return sorted;

    std::vector<BinaryMask> bin;
    bin.reserve(n);
    for (const auto& it : sorted.items) bin.push_back(binarize(it.soft_mask, 0.5));

    // pairwise IoUs among higher/lower ranked items
    std::vector<std::vector<double>> iou(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) iou[i][j] = iou[j][i] = mask_iou_binary(bin[i], bin[j]);

    std::vector<double> iou_max(n, 0.0);  // max IoU of i with anything ranked above it
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t t = 0; t < i; ++t) iou_max[i] = std::max(iou_max[i], iou[t][i]);

    auto decay_fn = [sigma, method](double x) {
        return method == NmsMethod::kGaussian ? std::exp(-x * x / sigma) : 1.0 - x;
    };

    for (std::size_t j = 0; j < n; ++j) {
        double decay = 1.0;
        for (std::size_t i = 0; i < j; ++i) {
            decay = std::min(decay, decay_fn(iou[i][j]) / decay_fn(iou_max[i]));
        }
        sorted.items[j].score *= decay;
    }
    std::stable_sort(sorted.items.begin(), sorted.items.end(), score_order);
    return sorted;
}

InstanceSet predict_instances(const Tensor& cate, const Tensor& kernels,
                              const MaskFeatureMap& f, const KernelSpec& spec,
                              const InferenceConfig& cfg) {
    if (cate.rank() != 3 || kernels.rank() != 3 || cate.dim(0) != kernels.dim(0) ||
        cate.dim(1) != kernels.dim(1)) {
        throw ShapeError("predict_instances: cate " + shape_str(cate.shape()) +
                         " and kernels " + shape_str(kernels.shape()) + " disagree");
    }
    detail::NoGradGuard no_grad;
    const std::int64_t n1 = cate.dim(0), n2 = cate.dim(1), qc = cate.dim(2);

    struct Candidate { std::int64_t i, j; int cls; double score; };
    std::vector<Candidate> cands;
    for (std::int64_t i = 0; i < n1; ++i) {
        for (std::int64_t j = 0; j < n2; ++j) {
            const double* p = cate.values().data() + (i * n2 + j) * qc;
            int best = 0;
            for (std::int64_t c = 1; c < qc; ++c) {
                if (p[c] > p[best]) best = static_cast<int>(c);
            }
            if (p[best] >= cfg.score_thr) cands.push_back({i, j, best, p[best]});
        }
    }
    InstanceSet set;
    if (cands.empty()) return set;

    Tensor logits = dynamic_conv(f, kernels, spec);
    for (const auto& c : cands) {
        Instance inst;
        inst.class_id = c.cls;
        inst.score = c.score;
        inst.cell_row = c.i;
        inst.cell_col = c.j;
        inst.soft_mask = sigmoid(select_cell(logits, c.i, c.j));
        set.items.push_back(std::move(inst));
    }
    set = matrix_nms(set, cfg.nms_sigma, cfg.nms_method);

    InstanceSet out;
    for (auto& it : set.items) {
        if (it.score >= cfg.score_thr) out.items.push_back(std::move(it));
        if (static_cast<std::int64_t>(out.items.size()) >= cfg.top_k) break;
    }
    return out;
}

}  // namespace docsegtr
