// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowmotion/guidance.hpp"
#include "flowmotion/io.hpp"
#include "flowmotion/pipeline.hpp"
#include "flowmotion/sampler.hpp"
#include "flowmotion/toy_world.hpp"

namespace flowmotion {

using nlohmann::json;

inline constexpr int kManifestVersion = 1;

// --------------------------------------------------------------------------
// Scene pieces
// --------------------------------------------------------------------------

inline json to_json(const Trajectory& t) {
    return json{{"kind", t.kind_name()}, {"x0", t.x0},     {"y0", t.y0},
                {"vx", t.vx},            {"vy", t.vy},     {"path_radius", t.path_radius},
                {"omega", t.omega},      {"phase", t.phase}, {"frames", t.frames}};
}

inline Trajectory trajectory_from_json(const json& j) {
    Trajectory t;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "linear") t.kind = Trajectory::Kind::Linear;
    else if (kind == "circular") t.kind = Trajectory::Kind::Circular;
    else if (kind == "sinusoidal") t.kind = Trajectory::Kind::Sinusoidal;
    else throw format_error("manifest: unknown trajectory kind " + kind);
    t.x0 = j.at("x0").get<double>();
    t.y0 = j.at("y0").get<double>();
    t.vx = j.at("vx").get<double>();
    t.vy = j.at("vy").get<double>();
    t.path_radius = j.at("path_radius").get<double>();
    t.omega = j.at("omega").get<double>();
    t.phase = j.at("phase").get<double>();
    t.frames = j.at("frames").get<int>();
    return t;
}

inline json to_json(const AppearanceClass& c) {
    return json{{"id", c.id},
                {"shape", c.shape_name()},
                {"radius", c.radius},
                {"intensity", c.intensity}};
}

inline AppearanceClass appearance_from_json(const json& j) {
    AppearanceClass c;
    c.id = j.at("id").get<int>();
    const std::string shape = j.at("shape").get<std::string>();
    if (shape == "disk") c.shape = AppearanceClass::Shape::Disk;
    else if (shape == "square") c.shape = AppearanceClass::Shape::Square;
    else if (shape == "ring") c.shape = AppearanceClass::Shape::Ring;
    else throw format_error("manifest: unknown shape " + shape);
    c.radius = j.at("radius").get<double>();
    c.intensity = j.at("intensity").get<double>();
    return c;
}

inline json to_json(const SceneObject& obj) {
    return json{{"appearance", to_json(obj.appearance)},
                {"trajectory", to_json(obj.trajectory)}};
}

inline SceneObject scene_object_from_json(const json& j) {
    return SceneObject{appearance_from_json(j.at("appearance")),
                       trajectory_from_json(j.at("trajectory"))};
}

// --------------------------------------------------------------------------
// Dataset directory: item_%04d.fmlt + preview PGMs + manifest.json
// --------------------------------------------------------------------------

struct DatasetDirInfo {
    int frames = 0, height = 0, width = 0;
    Codec codec{Codec::Kind::Identity};
};

inline void save_dataset(const Dataset& dataset, const DatasetDirInfo& info,
                         const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format_version"] = kManifestVersion;
    manifest["fmlt_version"] = kFmltVersion;
    manifest["frames"] = info.frames;
    manifest["height"] = info.height;
    manifest["width"] = info.width;
    manifest["codec"] = info.codec.name();
    manifest["classes"] = json::array();
    for (const auto& c : dataset.classes) manifest["classes"].push_back(to_json(c));
    manifest["items"] = json::array();
    char name[64];
    for (std::size_t i = 0; i < dataset.items.size(); ++i) {
        const DatasetItem& item = dataset.items[i];
        std::snprintf(name, sizeof(name), "item_%04zu.fmlt", i);
        save_tensor(dir / name, item.latent);
        json entry;
        entry["file"] = name;
        entry["class_id"] = item.label;
        if (item.scene.size() == 1) {
            entry["trajectory"] = to_json(item.scene.front().trajectory);
        } else {
            json trajs = json::array();
            for (const auto& o : item.scene) trajs.push_back(to_json(o.trajectory));
            entry["trajectory"] = trajs;
        }
        json scene = json::array();
        for (const auto& o : item.scene) scene.push_back(to_json(o));
        entry["scene"] = scene;
        manifest["items"].push_back(entry);

        std::snprintf(name, sizeof(name), "item_%04zu_preview.pgm", i);
        ToyVideo preview = info.codec.decode(item.latent);
        Image row(preview.h, preview.f * preview.w + (preview.f - 1), 255);
        for (int k = 0; k < preview.f; ++k) {
            for (int y = 0; y < preview.h; ++y) {
                for (int x = 0; x < preview.w; ++x) {
                    row.at(y, k * (preview.w + 1) + x) = quantize01(preview.at(k, y, x));
                }
            }
        }
        save_pgm(dir / name, row);
    }
    if (!dataset.warnings.empty()) manifest["warnings"] = dataset.warnings;
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline Dataset load_dataset(const std::filesystem::path& manifest_path,
                            DatasetDirInfo* info_out = nullptr) {
    auto raw = read_file(manifest_path);
    json manifest = json::parse(raw.begin(), raw.end());
    if (manifest.at("format_version").get<int>() != kManifestVersion) {
        throw format_error("dataset manifest: unsupported version");
    }
    const auto dir = manifest_path.parent_path();
    Dataset ds;
    for (const auto& cj : manifest.at("classes")) {
        ds.classes.push_back(appearance_from_json(cj));
    }
    for (const auto& ij : manifest.at("items")) {
        DatasetItem item;
        item.latent = load_tensor(dir / ij.at("file").get<std::string>());
        item.label = ij.at("class_id").get<int>();
        if (ij.contains("scene")) {
            for (const auto& oj : ij.at("scene")) {
                item.scene.push_back(scene_object_from_json(oj));
            }
        }
        ds.items.push_back(std::move(item));
    }
    if (ds.items.empty()) throw format_error("dataset manifest: no items");
    if (info_out) {
        info_out->frames = manifest.at("frames").get<int>();
        info_out->height = manifest.at("height").get<int>();
        info_out->width = manifest.at("width").get<int>();
        info_out->codec = Codec(manifest.at("codec").get<std::string>() == "pooled"
                                    ? Codec::Kind::Pooled
                                    : Codec::Kind::Identity);
    }
    return ds;
}

// --------------------------------------------------------------------------
// Run config echo (the reproduction contract for transfer/sample runs)
// --------------------------------------------------------------------------

inline json to_json(const GuidanceConfig& g) {
    return json{{"alpha", g.alpha},
                {"beta", g.beta},
                {"lr", g.lr},
                {"k_opt", g.k_opt},
                {"t_opt", g.t_opt},
                {"source_rep", to_string(g.source_rep)},
                {"diff_mode", to_string(g.diff_mode)},
                {"gamma", g.gamma},
                {"epsilon_norm", g.epsilon_norm},
                {"per_frame_reg", g.per_frame_reg},
                {"vavg_through_grad", g.vavg_through_grad}};
}

inline GuidanceConfig guidance_from_json(const json& j) {
    GuidanceConfig g;
    g.alpha = j.at("alpha").get<double>();
    g.beta = j.at("beta").get<double>();
    g.lr = j.at("lr").get<double>();
    g.k_opt = j.at("k_opt").get<int>();
    g.t_opt = j.at("t_opt").get<int>();
    g.source_rep = source_rep_from_string(j.at("source_rep").get<std::string>());
    g.diff_mode = diff_mode_from_string(j.at("diff_mode").get<std::string>());
    g.gamma = j.at("gamma").get<double>();
    g.epsilon_norm = j.at("epsilon_norm").get<double>();
    g.per_frame_reg = j.at("per_frame_reg").get<bool>();
    g.vavg_through_grad = j.at("vavg_through_grad").get<bool>();
    return g;
}

inline json to_json(const SamplerParams& s) {
    json j{{"steps", s.steps}};
    if (s.cfg_scale.has_value()) j["cfg_scale"] = *s.cfg_scale;
    else j["cfg_scale"] = nullptr;
    return j;
}

inline SamplerParams sampler_from_json(const json& j) {
    SamplerParams s;
    s.steps = j.at("steps").get<int>();
    if (j.contains("cfg_scale") && !j.at("cfg_scale").is_null()) {
        s.cfg_scale = j.at("cfg_scale").get<double>();
    } else {
        s.cfg_scale.reset();
    }
    return s;
}

}  // namespace flowmotion
