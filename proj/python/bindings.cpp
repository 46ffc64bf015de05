// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#include "gsloc/error.hpp"
#include "gsloc/harness.hpp"
#include "gsloc/io.hpp"
#include "gsloc/mapper.hpp"
#include "gsloc/rasterizer.hpp"
#include "gsloc/splitter.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace gsloc;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const Image& img) {
    Array out({static_cast<py::ssize_t>(img.height()), static_cast<py::ssize_t>(img.width()),
               static_cast<py::ssize_t>(img.channels())});
    std::copy(img.data().begin(), img.data().end(), out.mutable_data());
    return out;
}

const double* rows(const Array& a, py::ssize_t n, py::ssize_t cols, const char* name) {
    if (a.ndim() != 2 || a.shape(0) != n || a.shape(1) != cols) {
        throw DataError(std::string(name) + ": expected shape (" + std::to_string(n) + ", " + std::to_string(cols) + ")");
    }
    return a.data();
}

GaussianScene make_scene(const Array& means, const Array& rotations, const Array& scales, const Array& opacities,
                         std::optional<Array> colors, std::optional<Array> features) {
    if (means.ndim() != 2) {
        throw DataError("means: expected shape (N, 3)");
    }
    const py::ssize_t n = means.shape(0);
    const double* m = rows(means, n, 3, "means");
    const double* q = rows(rotations, n, 4, "rotations");
    const double* s = rows(scales, n, 3, "scales");
    if (opacities.ndim() != 1 || opacities.shape(0) != n) {
        throw DataError("opacities: expected shape (N,)");
    }
    const double* c = colors ? rows(*colors, n, 3, "colors") : nullptr;
    std::vector<Gaussian> gs(static_cast<std::size_t>(n));
    for (py::ssize_t i = 0; i < n; ++i) {
        Gaussian& g = gs[static_cast<std::size_t>(i)];
        g.mean = {m[3 * i], m[3 * i + 1], m[3 * i + 2]};
        g.rotation = Eigen::Quaterniond(q[4 * i], q[4 * i + 1], q[4 * i + 2], q[4 * i + 3]).normalized();
        g.scale = {s[3 * i], s[3 * i + 1], s[3 * i + 2]};
        g.opacity = opacities.data()[i];
        if (c) {
            g.color = {c[3 * i], c[3 * i + 1], c[3 * i + 2]};
        }
    }
    if (!features) {
        return GaussianScene(std::move(gs));
    }
    if (features->ndim() != 2 || features->shape(0) != n) {
        throw DataError("features: expected shape (N, D)");
    }
    const auto dim = static_cast<std::size_t>(features->shape(1));
    return GaussianScene(std::move(gs), dim, std::vector<double>(features->data(), features->data() + n * features->shape(1)));
}

Array column_block(const GaussianScene& scene, int cols, auto&& fill) {
    Array out({static_cast<py::ssize_t>(scene.size()), static_cast<py::ssize_t>(cols)});
    double* p = out.mutable_data();
    for (std::size_t i = 0; i < scene.size(); ++i) {
        fill(scene[i], p + i * static_cast<std::size_t>(cols));
    }
    return out;
}

py::dict report_dict(const EvalReport& r) {
    py::dict d;
    d["median_translation_cm"] = r.median_translation_cm;
    d["median_rotation_deg"] = r.median_rotation_deg;
    d["median_inliers"] = r.median_inliers;
    d["median_many_to_one"] = r.median_many_to_one;
    d["recall_25cm_2deg"] = r.recall_25cm_2deg;
    d["recall_50cm_5deg"] = r.recall_50cm_5deg;
    d["failures"] = r.failures;
    d["queries"] = r.queries.size();
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Gaussian splat feature maps for visual localization";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<LocalizationFailure>(m, "LocalizationFailure", base.ptr());

    py::class_<SplitParams>(m, "SplitParams")
        .def_readonly("beta", &SplitParams::beta)
        .def_readonly("lambda_side", &SplitParams::lambda_side)
        .def_readonly("lambda_center", &SplitParams::lambda_center)
        .def_readonly("sigma_ratio_sq", &SplitParams::sigma_ratio_sq);
    m.def("split_parameters", &split_parameters, py::arg("beta") = kDefaultBeta);
    m.def(
        "mixture_moment", [](int order, double s, double beta) { return mixture_moment(order, s, split_parameters(beta)); },
        py::arg("order"), py::arg("s"), py::arg("beta") = kDefaultBeta);

    py::class_<GaussianScene>(m, "Scene")
        .def(py::init(&make_scene), py::arg("means"), py::arg("rotations"), py::arg("scales"), py::arg("opacities"),
             py::arg("colors") = std::nullopt, py::arg("features") = std::nullopt)
        .def("__len__", &GaussianScene::size)
        .def_property_readonly("feature_dim", &GaussianScene::feature_dim)
        .def_property_readonly("means", [](const GaussianScene& s) {
            return column_block(s, 3, [](const Gaussian& g, double* p) { std::copy(g.mean.data(), g.mean.data() + 3, p); });
        })
        .def_property_readonly("rotations", [](const GaussianScene& s) {
            return column_block(s, 4, [](const Gaussian& g, double* p) {
                p[0] = g.rotation.w();
                p[1] = g.rotation.x();
                p[2] = g.rotation.y();
                p[3] = g.rotation.z();
            });
        })
        .def_property_readonly("scales", [](const GaussianScene& s) {
            return column_block(s, 3, [](const Gaussian& g, double* p) { std::copy(g.scale.data(), g.scale.data() + 3, p); });
        })
        .def_property_readonly("opacities", [](const GaussianScene& s) {
            std::vector<double> v;
            for (const Gaussian& g : s.gaussians()) {
                v.push_back(g.opacity);
            }
            return Array(static_cast<py::ssize_t>(v.size()), v.data());
        })
        .def_property_readonly("parent_ids", [](const GaussianScene& s) {
            std::vector<std::optional<std::int64_t>> v;
            for (const Gaussian& g : s.gaussians()) {
                v.push_back(g.parent_id);
            }
            return v;
        })
        .def_property_readonly("extent", [](const GaussianScene& s) { return s.extent().largest_side(); });

    m.def("split_scene", &split_scene, py::arg("scene"), py::arg("beta") = kDefaultBeta);
    m.def("load_ply", &load_splat_ply, py::arg("path"));
    m.def("save_ply", &save_splat_ply, py::arg("scene"), py::arg("path"));

    py::class_<CameraView>(m, "Camera")
        .def(py::init([](double fx, double fy, double cx, double cy, int width, int height, const Eigen::Vector4d& q,
                         const Eigen::Vector3d& t, int view_id) {
                 CameraView c;
                 c.intrinsics = {fx, fy, cx, cy, width, height};
                 c.pose.rotation_wc = Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized();
                 c.pose.translation_wc = t;
                 c.view_id = view_id;
                 validate(c);
                 return c;
             }),
             py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width"), py::arg("height"),
             py::arg("q_wc") = Eigen::Vector4d(1, 0, 0, 0), py::arg("t_wc") = Eigen::Vector3d::Zero(),
             py::arg("view_id") = 0)
        .def_static(
            "look_at",
            [](const Eigen::Vector3d& eye, const Eigen::Vector3d& target, double f, int width, int height, int view_id) {
                CameraView c;
                c.intrinsics = {f, f, 0.5 * width, 0.5 * height, width, height};
                c.pose = look_at(eye, target);
                c.view_id = view_id;
                return c;
            },
            py::arg("eye"), py::arg("target"), py::arg("focal"), py::arg("width"), py::arg("height"),
            py::arg("view_id") = 0)
        .def_property_readonly("view_id", [](const CameraView& c) { return c.view_id; })
        .def_property_readonly("center", [](const CameraView& c) { return Eigen::Vector3d(c.pose.center()); });

    m.def(
        "render",
        [](const GaussianScene& scene, const CameraView& cam, bool features) -> py::object {
            RenderOutput out = rasterize(scene, cam, 0.01, {}, features && scene.feature_dim() > 0);
            if (features) {
                return py::make_tuple(to_array(out.color), to_array(out.features));
            }
            return to_array(out.color);
        },
        py::arg("scene"), py::arg("camera"), py::arg("features") = false);
    m.def("psnr", [](const Array& a, const Array& b) {
        if (a.ndim() != 3 || b.ndim() != 3) {
            throw DataError("psnr: expected (H, W, 3) arrays");
        }
        ColorImage ia(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<std::size_t>(a.shape(2)));
        ColorImage ib(static_cast<int>(b.shape(0)), static_cast<int>(b.shape(1)), static_cast<std::size_t>(b.shape(2)));
        std::copy(a.data(), a.data() + a.size(), ia.data().begin());
        std::copy(b.data(), b.data() + b.size(), ib.data().begin());
        return psnr(ia, ib);
    });

    m.def(
        "synthesize",
        [](const std::filesystem::path& spec_path, const std::filesystem::path& out) {
            const SceneSpec spec = load_scene_spec(spec_path);
            save_synthetic(generate_synthetic_scene(spec), spec, out);
        },
        py::arg("spec"), py::arg("out"));
    m.def(
        "build_map",
        [](const std::filesystem::path& scene_dir, const std::filesystem::path& out, double tau,
           std::optional<std::size_t> anchors, std::size_t k, bool split, double beta, std::uint64_t seed,
           const std::string& mode) {
            const SyntheticData data = load_synthetic(scene_dir);
            MapConfig cfg;
            cfg.tau = tau;
            cfg.anchors = anchors;
            cfg.k = k;
            cfg.split = split;
            cfg.beta = beta;
            cfg.seed = seed;
            cfg.mode = parse_map_mode(mode);
            const LocalizationMap map = build_map(data.scene, data.train_cameras, data.train_features, cfg);
            write_map(map, out);
            return map.points.size();
        },
        py::arg("scene_dir"), py::arg("out"), py::arg("tau") = kDefaultTau, py::arg("anchors") = std::nullopt,
        py::arg("k") = kDefaultRegionK, py::arg("split") = false, py::arg("beta") = kDefaultBeta,
        py::arg("seed") = 0, py::arg("mode") = "pluggs");
    m.def(
        "evaluate",
        [](const std::filesystem::path& map_path, const std::filesystem::path& scene_dir,
           std::optional<std::filesystem::path> out, const std::string& preset, bool mutual) {
            EvalConfig cfg;
            cfg.record_timing = false;
            cfg.localize.ransac = RansacConfig::preset(preset);
            cfg.localize.matching.mutual = mutual;
            const EvalReport r = run_eval(read_map(map_path), load_queries(scene_dir / "queries.json"), cfg);
            if (out) {
                write_report(r, *out);
            }
            return report_dict(r);
        },
        py::arg("map"), py::arg("scene_dir"), py::arg("out") = std::nullopt, py::arg("preset") = "default",
        py::arg("mutual") = true);
}
