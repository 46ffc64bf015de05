// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#include "gsloc/io.hpp"

#include "gsloc/error.hpp"
#include "gsloc/log.hpp"

#include <nlohmann/json.hpp>
#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace gsloc {

namespace {

struct PlyProperty {
    std::string name;
    int size = 0;
    char kind = 'f'; // 'f' float, 'i' signed, 'u' unsigned
    std::size_t offset = 0;
};

PlyProperty make_property(const std::string& type, const std::string& name) {
    static const std::map<std::string, std::pair<int, char>> types = {
        {"char", {1, 'i'}},   {"int8", {1, 'i'}},     {"uchar", {1, 'u'}},  {"uint8", {1, 'u'}},
        {"short", {2, 'i'}},  {"int16", {2, 'i'}},    {"ushort", {2, 'u'}}, {"uint16", {2, 'u'}},
        {"int", {4, 'i'}},    {"int32", {4, 'i'}},    {"uint", {4, 'u'}},   {"uint32", {4, 'u'}},
        {"float", {4, 'f'}},  {"float32", {4, 'f'}},  {"double", {8, 'f'}}, {"float64", {8, 'f'}},
    };
    const auto it = types.find(type);
    if (it == types.end()) {
        throw SchemaError("unsupported PLY property type '" + type + "' for '" + name + "'");
    }
    return {name, it->second.first, it->second.second, 0};
}

double read_scalar(const unsigned char* p, const PlyProperty& prop) {
    switch (prop.kind) {
    case 'f':
        if (prop.size == 4) {
            float v;
            std::memcpy(&v, p, 4);
            return v;
        } else {
            double v;
            std::memcpy(&v, p, 8);
            return v;
        }
    case 'i': {
        std::int64_t v = 0;
        if (prop.size == 1) { std::int8_t x; std::memcpy(&x, p, 1); v = x; }
        if (prop.size == 2) { std::int16_t x; std::memcpy(&x, p, 2); v = x; }
        if (prop.size == 4) { std::int32_t x; std::memcpy(&x, p, 4); v = x; }
        return static_cast<double>(v);
    }
    default: {
        std::uint64_t v = 0;
        std::memcpy(&v, p, static_cast<std::size_t>(prop.size));
        return static_cast<double>(v);
    }
    }
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::filesystem::path parents_sidecar(const std::filesystem::path& path) {
    std::filesystem::path p = path;
    p += ".parents";
    return p;
}

} // namespace

GaussianScene load_splat_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw SchemaError("cannot open PLY file " + path.string());
    }
    std::string line;
    std::getline(in, line);
    if (line.rfind("ply", 0) != 0) {
        throw SchemaError("not a PLY file: " + path.string());
    }

    std::vector<PlyProperty> props;
    std::size_t vertex_count = 0;
    bool in_vertex = false;
    bool seen_vertex = false;
    bool binary_le = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (word == "end_header") {
            break;
        }
        if (word == "format") {
            std::string fmt;
            ss >> fmt;
            binary_le = fmt == "binary_little_endian";
        } else if (word == "element") {
            std::string name;
            std::size_t count = 0;
            ss >> name >> count;
            if (name == "vertex") {
                if (seen_vertex) {
                    throw SchemaError("duplicate vertex element");
                }
                vertex_count = count;
                in_vertex = seen_vertex = true;
            } else {
                if (!seen_vertex) {
                    throw SchemaError("vertex must be the first PLY element");
                }
                in_vertex = false;
            }
        } else if (word == "property" && in_vertex) {
            std::string type, name;
            ss >> type;
            if (type == "list") {
                throw SchemaError("list properties are not supported on vertices");
            }
            ss >> name;
            props.push_back(make_property(type, name));
        }
    }
    if (!binary_le) {
        throw SchemaError("PLY must be binary_little_endian");
    }
    if (!seen_vertex) {
        throw SchemaError("PLY has no vertex element");
    }

    std::size_t stride = 0;
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < props.size(); ++i) {
        props[i].offset = stride;
        stride += static_cast<std::size_t>(props[i].size);
        index[props[i].name] = i;
    }
    auto require = [&](const std::string& name) -> const PlyProperty& {
        const auto it = index.find(name);
        if (it == index.end()) {
            throw SchemaError("PLY is missing required vertex property '" + name + "'");
        }
        return props[it->second];
    };
    const std::array<std::string, 14> required = {"x",       "y",       "z",       "opacity", "scale_0",
                                                  "scale_1", "scale_2", "rot_0",   "rot_1",   "rot_2",
                                                  "rot_3",   "f_dc_0",  "f_dc_1",  "f_dc_2"};
    std::array<const PlyProperty*, 14> req{};
    for (std::size_t i = 0; i < required.size(); ++i) {
        req[i] = &require(required[i]);
    }
    std::vector<const PlyProperty*> feats;
    while (index.count("feat_" + std::to_string(feats.size())) != 0) {
        feats.push_back(&props[index["feat_" + std::to_string(feats.size())]]);
    }

    std::vector<unsigned char> buffer(stride * vertex_count);
    in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
    if (static_cast<std::size_t>(in.gcount()) != buffer.size()) {
        throw SchemaError("PLY vertex data is truncated");
    }

    std::vector<Gaussian> gaussians(vertex_count);
    std::vector<double> features(vertex_count * feats.size());
    std::size_t clamped = 0;
    for (std::size_t v = 0; v < vertex_count; ++v) {
        const unsigned char* row = buffer.data() + v * stride;
        std::array<double, 14> raw{};
        for (std::size_t i = 0; i < raw.size(); ++i) {
            raw[i] = read_scalar(row + req[i]->offset, *req[i]);
        }
        Gaussian& g = gaussians[v];
        g.mean = {raw[0], raw[1], raw[2]};
        g.opacity = logistic(raw[3]);
        g.scale = {std::exp(raw[4]), std::exp(raw[5]), std::exp(raw[6])};
        Eigen::Quaterniond q(raw[7], raw[8], raw[9], raw[10]);
        g.color = (Eigen::Vector3d(raw[11], raw[12], raw[13]) * kShC0).array() + 0.5;
        g.color = g.color.cwiseMax(0.0).cwiseMin(1.0);
        const double qn = q.norm();
        if (!std::isfinite(qn) || qn == 0.0 || !g.mean.allFinite() || !std::isfinite(g.opacity) ||
            !g.scale.allFinite() || !g.color.allFinite()) {
            throw DataError("non-finite decoded value at vertex " + std::to_string(v));
        }
        g.rotation = Eigen::Quaterniond(q.coeffs() / qn);
        if (g.opacity <= 0.0) {
            throw DataError("opacity decodes to zero at vertex " + std::to_string(v));
        }
        for (int a = 0; a < 3; ++a) {
            if (g.scale[a] < kMinScale) {
                g.scale[a] = kMinScale;
                ++clamped;
            }
        }
        for (std::size_t f = 0; f < feats.size(); ++f) {
            const double x = read_scalar(row + feats[f]->offset, *feats[f]);
            if (!std::isfinite(x)) {
                throw DataError("non-finite feature value at vertex " + std::to_string(v));
            }
            features[v * feats.size() + f] = x;
        }
    }
    if (clamped > 0) {
        warn("clamped " + std::to_string(clamped) + " degenerate scale components to 1e-8 m");
    }

    const auto sidecar = parents_sidecar(path);
    if (std::filesystem::exists(sidecar)) {
        std::ifstream pin(sidecar);
        for (std::size_t v = 0; v < vertex_count; ++v) {
            std::int64_t id = 0;
            if (!(pin >> id)) {
                throw SchemaError("parent-id sidecar has fewer entries than vertices");
            }
            if (id >= 0) {
                gaussians[v].parent_id = id;
            }
        }
    }
    return GaussianScene(std::move(gaussians), feats.size(), std::move(features));
}

void save_splat_ply(const GaussianScene& scene, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    const std::size_t dim = scene.feature_dim();
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << scene.size() << '\n';
    for (const char* name : {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1",
                             "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
        out << "property float " << name << '\n';
    }
    for (std::size_t f = 0; f < dim; ++f) {
        out << "property float feat_" << f << '\n';
    }
    out << "end_header\n";

    std::vector<float> row(14 + dim);
    bool any_parent = false;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const Gaussian& g = scene[i];
        any_parent = any_parent || g.parent_id.has_value();
        // Keep the logit finite for alpha == 1.
        const double a = std::min(g.opacity, 1.0 - 1e-7);
        const Eigen::Vector3d dc = (g.color.array() - 0.5) / kShC0;
        const double vals[14] = {g.mean.x(),          g.mean.y(),          g.mean.z(),
                                 dc.x(),              dc.y(),              dc.z(),
                                 std::log(a / (1.0 - a)), std::log(g.scale.x()), std::log(g.scale.y()),
                                 std::log(g.scale.z()), g.rotation.w(),      g.rotation.x(),
                                 g.rotation.y(),      g.rotation.z()};
        for (int k = 0; k < 14; ++k) {
            row[static_cast<std::size_t>(k)] = static_cast<float>(vals[k]);
        }
        const auto feat = scene.feature(i);
        for (std::size_t f = 0; f < dim; ++f) {
            row[14 + f] = static_cast<float>(feat[f]);
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
    }
    if (!out) {
        throw DataError("failed writing " + path.string());
    }

    const auto sidecar = parents_sidecar(path);
    if (any_parent) {
        std::ofstream pout(sidecar);
        for (const Gaussian& g : scene.gaussians()) {
            pout << g.parent_id.value_or(-1) << '\n';
        }
    } else if (std::filesystem::exists(sidecar)) {
        std::filesystem::remove(sidecar);
    }
}

std::vector<CameraView> load_cameras(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw SchemaError("cannot open camera file " + path.string());
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("camera file is not valid JSON: " + std::string(e.what()));
    }
    const nlohmann::json& list = doc.is_array() ? doc : doc.value("cameras", nlohmann::json::array());
    if (!list.is_array()) {
        throw SchemaError("camera file has no 'cameras' array");
    }
    std::vector<CameraView> cams;
    std::set<int> ids;
    for (const auto& rec : list) {
        CameraView cam;
        try {
            cam.view_id = rec.at("view_id").get<int>();
            cam.intrinsics.fx = rec.at("fx").get<double>();
            cam.intrinsics.fy = rec.at("fy").get<double>();
            cam.intrinsics.cx = rec.at("cx").get<double>();
            cam.intrinsics.cy = rec.at("cy").get<double>();
            cam.intrinsics.width = rec.at("width").get<int>();
            cam.intrinsics.height = rec.at("height").get<int>();
            const auto q = rec.at("q_wc").get<std::array<double, 4>>();
            const auto t = rec.at("t_wc").get<std::array<double, 3>>();
            cam.pose.rotation_wc = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
            cam.pose.translation_wc = {t[0], t[1], t[2]};
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError("malformed camera record: " + std::string(e.what()));
        }
        const double n = cam.pose.rotation_wc.norm();
        if (!std::isfinite(n) || n < 1e-6) {
            throw DataError("camera " + std::to_string(cam.view_id) + " has a degenerate quaternion");
        }
        if (std::abs(n - 1.0) > 1e-9) {
            warn("camera " + std::to_string(cam.view_id) + " quaternion normalized (norm " + std::to_string(n) + ")");
        }
        cam.pose.rotation_wc.normalize();
        if (!ids.insert(cam.view_id).second) {
            throw DataError("duplicate view_id " + std::to_string(cam.view_id));
        }
        validate(cam);
        cams.push_back(cam);
    }
    return cams;
}

void save_cameras(std::span<const CameraView> cameras, const std::filesystem::path& path) {
    nlohmann::json list = nlohmann::json::array();
    for (const CameraView& c : cameras) {
        const auto& q = c.pose.rotation_wc;
        const auto& t = c.pose.translation_wc;
        list.push_back({{"view_id", c.view_id},
                        {"fx", c.intrinsics.fx},
                        {"fy", c.intrinsics.fy},
                        {"cx", c.intrinsics.cx},
                        {"cy", c.intrinsics.cy},
                        {"width", c.intrinsics.width},
                        {"height", c.intrinsics.height},
                        {"q_wc", {q.w(), q.x(), q.y(), q.z()}},
                        {"t_wc", {t.x(), t.y(), t.z()}}});
    }
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << nlohmann::json{{"cameras", list}}.dump(2) << '\n';
}

FeatureImage read_feature_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw SchemaError("cannot open feature image " + path.string());
    }
    char magic[4];
    std::uint32_t dims[3];
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in || std::memcmp(magic, "GSFM", 4) != 0) {
        throw SchemaError("not a GSFM feature image: " + path.string());
    }
    FeatureImage img(static_cast<int>(dims[0]), static_cast<int>(dims[1]), dims[2]);
    std::vector<float> raw(img.data().size());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
    if (static_cast<std::size_t>(in.gcount()) != raw.size() * 4) {
        throw SchemaError("feature image payload is truncated: " + path.string());
    }
    std::copy(raw.begin(), raw.end(), img.data().begin());
    return img;
}

void write_feature_image(const FeatureImage& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    const std::uint32_t dims[3] = {static_cast<std::uint32_t>(image.height()),
                                   static_cast<std::uint32_t>(image.width()),
                                   static_cast<std::uint32_t>(image.channels())};
    out.write("GSFM", 4);
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    std::vector<float> raw(image.data().begin(), image.data().end());
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
}

void write_png(const ColorImage& image, const std::filesystem::path& path) {
    if (image.channels() != 3) {
        throw DataError("PNG output expects a 3-channel image");
    }
    std::FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (fp == nullptr) {
        throw DataError("cannot write " + path.string());
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw DataError("libpng failed writing " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()), static_cast<png_uint_32>(image.height()), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(image.width()) * 3);
    for (int r = 0; r < image.height(); ++r) {
        for (int c = 0; c < image.width(); ++c) {
            const auto px = image.at(r, c);
            for (int k = 0; k < 3; ++k) {
                const double v = std::clamp(px[static_cast<std::size_t>(k)], 0.0, 1.0);
                row[static_cast<std::size_t>(c) * 3 + static_cast<std::size_t>(k)] =
                    static_cast<png_byte>(std::lround(v * 255.0));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

} // namespace gsloc
