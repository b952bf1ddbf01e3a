// pybind11 bindings for the docsegtr core library.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "docsegtr/checkpoint.hpp"
#include "docsegtr/trainer.hpp"

namespace py = pybind11;
using namespace docsegtr;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    Shape shape;
    for (py::ssize_t d = 0; d < a.ndim(); ++d) shape.push_back(a.shape(d));
    std::vector<double> vals(a.data(), a.data() + a.size());
    return Tensor(std::move(shape), std::move(vals));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

BinaryMask mask_from_array(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw py::value_error("mask must be a 2-D uint8 array");
    BinaryMask m(a.shape(0), a.shape(1));
    std::copy(a.data(), a.data() + a.size(), m.data.begin());
    return m;
}

py::array_t<std::uint8_t> array_from_mask(const BinaryMask& m) {
    py::array_t<std::uint8_t> out({static_cast<py::ssize_t>(m.h), static_cast<py::ssize_t>(m.w)});
    std::copy(m.data.begin(), m.data.end(), out.mutable_data());
    return out;
}

AttentionMode mode_from_string(const std::string& mode) {
    if (mode == "full") return AttentionMode::kFull;
    if (mode == "twin") return AttentionMode::kTwin;
    throw py::value_error("mode must be 'full' or 'twin'");
}

std::vector<ImageRecord> records_from_py(const py::list& images) {
    std::vector<ImageRecord> out;
    for (const auto& item : images) {
        const py::dict d = item.cast<py::dict>();
        ImageRecord rec;
        rec.image_id = d["image_id"].cast<std::string>();
        for (const auto& inst : d["instances"].cast<py::list>()) {
            const py::dict id = inst.cast<py::dict>();
            RecordInstance ri;
            ri.class_id = id["class_id"].cast<int>();
            ri.score = id.contains("score") ? id["score"].cast<double>() : 1.0;
            ri.rle = rle_encode(mask_from_array(
                id["mask"].cast<py::array_t<std::uint8_t,
                                            py::array::c_style | py::array::forcecast>>()));
            rec.width = ri.rle.width;
            rec.height = ri.rle.height;
            rec.instances.push_back(std::move(ri));
        }
        out.push_back(std::move(rec));
    }
    return out;
}

py::list instances_to_py(const InstanceSet& set) {
    py::list out;
    for (const auto& inst : set.items) {
        py::dict d;
        d["class_id"] = inst.class_id;
        d["score"] = inst.score;
        d["cell"] = py::make_tuple(inst.cell_row, inst.cell_col);
        d["soft_mask"] = array_from_tensor(inst.soft_mask);
        out.append(d);
    }
    return out;
}

/// Thin inference-oriented wrapper around Model + RunConfig.
struct PyModel {
    Model model;

    explicit PyModel(const std::string& config_text)
        : model(Model::init(config_text.empty() ? RunConfig{} : parse_run_config(config_text))) {}

    explicit PyModel(Model m) : model(std::move(m)) {}

    static PyModel load(const std::string& path) {
        Checkpoint ckpt = load_checkpoint(path);
        Model m = Model::init(config_from_checkpoint(ckpt));
        load_into_model(ckpt, m);
        return PyModel(std::move(m));
    }

    void save(const std::string& path) {
        save_checkpoint(path, checkpoint_from_model(model));
    }

    std::string config() const { return dump_run_config(model.cfg); }

    py::list predict(const py::array_t<double, py::array::c_style | py::array::forcecast>& image) {
        if (image.ndim() != 3 || image.shape(0) != 3) {
            throw py::value_error("image must be a [3, H, W] array");
        }
        return instances_to_py(model.predict(tensor_from_array(image)));
    }

    py::dict named_params() {
        py::dict out;
        for (auto& [name, t] : model.named_params()) out[py::str(name)] = array_from_tensor(t);
        return out;
    }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "document instance segmentation core (twin attention, dynamic masks)";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<FormatError>(m, "FormatError");
    py::register_exception<NumericError>(m, "NumericError");

    m.def("attention_score_count",
          [](std::int64_t h, std::int64_t w, const std::string& mode) {
              return attention_score_count(h, w, mode_from_string(mode));
          },
          py::arg("h"), py::arg("w"), py::arg("mode"),
          "Closed-form attention score-entry count: (h*w)^2 for 'full', h*w^2 + w*h^2 for 'twin'.");

    m.def("mask_iou",
          [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a,
             const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& b) {
              return mask_iou(mask_from_array(a), mask_from_array(b));
          },
          py::arg("a"), py::arg("b"));

    m.def("rle_encode",
          [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& mask) {
              return rle_encode(mask_from_array(mask)).counts;
          },
          py::arg("mask"), "Row-major run-length counts, starting with a zero run.");

    m.def("rle_decode",
          [](const std::vector<std::int64_t>& counts, std::int64_t height, std::int64_t width) {
              RleMask rle;
              rle.height = height;
              rle.width = width;
              rle.counts = counts;
              return array_from_mask(rle_decode(rle));
          },
          py::arg("counts"), py::arg("height"), py::arg("width"));

    m.def("dynamic_conv",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& features,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& kernels,
             std::int64_t theta) {
              Tensor f = tensor_from_array(features);
              if (f.rank() != 3) throw py::value_error("features must be [H, W, c_mask]");
              KernelSpec spec{theta, f.dim(2)};
              return array_from_tensor(
                  dynamic_conv(MaskFeatureMap{f}, tensor_from_array(kernels), spec));
          },
          py::arg("features"), py::arg("kernels"), py::arg("theta") = 1);

    m.def("matrix_nms",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& soft_masks,
             const std::vector<double>& scores, const std::vector<int>& classes, double sigma,
             const std::string& method) {
              if (soft_masks.ndim() != 3) throw py::value_error("soft_masks must be [m, H, W]");
              const py::ssize_t mcount = soft_masks.shape(0);
              if (static_cast<py::ssize_t>(scores.size()) != mcount ||
                  static_cast<py::ssize_t>(classes.size()) != mcount) {
                  throw py::value_error("scores/classes must match the mask count");
              }
              NmsMethod nm;
              if (method == "gaussian") nm = NmsMethod::kGaussian;
              else if (method == "linear") nm = NmsMethod::kLinear;
              else throw py::value_error("method must be 'gaussian' or 'linear'");
              InstanceSet set;
              const std::int64_t h = soft_masks.shape(1), w = soft_masks.shape(2);
              for (py::ssize_t k = 0; k < mcount; ++k) {
                  Instance inst;
                  inst.class_id = classes[static_cast<std::size_t>(k)];
                  inst.score = scores[static_cast<std::size_t>(k)];
                  inst.cell_row = k;  // keeps the tie-break order stable
                  std::vector<double> vals(soft_masks.data() + k * h * w,
                                           soft_masks.data() + (k + 1) * h * w);
                  inst.soft_mask = Tensor(Shape{h, w}, std::move(vals));
                  set.items.push_back(std::move(inst));
              }
              return instances_to_py(matrix_nms(set, sigma, nm));
          },
          py::arg("soft_masks"), py::arg("scores"), py::arg("classes"), py::arg("sigma") = 2.0,
          py::arg("method") = "gaussian");

    m.def("focal_loss",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& p,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& targets,
             double alpha, double gamma) {
              detail::NoGradGuard no_grad;
              return focal_loss(tensor_from_array(p), tensor_from_array(targets), alpha, gamma)
                  .item();
          },
          py::arg("p"), py::arg("targets"), py::arg("alpha") = 0.25, py::arg("gamma") = 2.0);

    m.def("dice_loss",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& p,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& q) {
              detail::NoGradGuard no_grad;
              return dice_loss(tensor_from_array(p), tensor_from_array(q)).item();
          },
          py::arg("p"), py::arg("q"));

    m.def("lr_at",
          [](std::int64_t iter, double lr_base, std::int64_t warmup_iters,
             const std::vector<std::int64_t>& milestones) {
              OptimizerState st;
              st.lr_base = lr_base;
              st.warmup_iters = warmup_iters;
              st.milestones = milestones;
              return lr_at(iter, st);
          },
          py::arg("iter"), py::arg("lr_base"), py::arg("warmup_iters") = 100,
          py::arg("milestones") = std::vector<std::int64_t>{});

    m.def("coco_map",
          [](const py::list& preds, const py::list& gts) {
              EvalReport rep = coco_map(records_from_py(preds), records_from_py(gts));
              py::dict out;
              out["ap"] = rep.ap;
              out["ap50"] = rep.ap50;
              out["ap75"] = rep.ap75;
              py::dict per_class;
              for (const auto& [cls, ap] : rep.per_class_ap) per_class[py::int_(cls)] = ap;
              out["per_class"] = per_class;
              return out;
          },
          py::arg("predictions"), py::arg("ground_truth"));

    m.def("generate_sample",
          [](std::int64_t height, std::int64_t width, std::int64_t min_instances,
             std::int64_t max_instances, std::uint64_t seed, std::int64_t index) {
              GenConfig cfg;
              cfg.height = height;
              cfg.width = width;
              cfg.min_instances = min_instances;
              cfg.max_instances = max_instances;
              cfg.seed = seed;
              LayoutSample s = generate_sample(cfg, index);
              py::dict out;
              out["image"] = array_from_tensor(s.image);
              out["seed"] = s.seed;
              py::list insts;
              for (const auto& inst : s.instances) {
                  py::dict d;
                  d["class_id"] = inst.class_id;
                  d["mask"] = array_from_mask(inst.mask);
                  insts.append(d);
              }
              out["instances"] = insts;
              return out;
          },
          py::arg("height") = 128, py::arg("width") = 128, py::arg("min_instances") = 2,
          py::arg("max_instances") = 5, py::arg("seed") = 0, py::arg("index") = 0);

    m.def("class_names", [] { return ClassCatalog::document_layout().names; });

    py::class_<PyModel>(m, "Model")
        .def(py::init<const std::string&>(), py::arg("config") = "",
             "Build a freshly initialized model from key=value config text.")
        .def_static("load", &PyModel::load, py::arg("path"), "Load a DSGT checkpoint.")
        .def("save", &PyModel::save, py::arg("path"))
        .def("predict", &PyModel::predict, py::arg("image"))
        .def("named_params", &PyModel::named_params)
        .def_property_readonly("config", &PyModel::config);
}
