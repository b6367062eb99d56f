// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flowmotion/io.hpp"
#include "flowmotion/tensor.hpp"

namespace flowmotion {

struct geometry_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --------------------------------------------------------------------------
// Trajectories
// --------------------------------------------------------------------------

/// Ground-truth motion of a rendered blob, in pixel units.
///   Linear:     pos(k) = (x0 + vx*k, y0 + vy*k)
///   Circular:   pos(k) = (x0, y0) + path_radius * (cos, sin)(phase + omega*k)
///   Sinusoidal: pos(k) = (x0 + vx*k, y0 + path_radius * sin(phase + omega*k))
struct Trajectory {
    enum class Kind { Linear, Circular, Sinusoidal };

    Kind kind = Kind::Linear;
    double x0 = 0.0, y0 = 0.0;
    double vx = 0.0, vy = 0.0;
    double path_radius = 0.0;
    double omega = 0.0;
    double phase = 0.0;
    int frames = 1;

    static Trajectory linear(double x0, double y0, double vx, double vy, int frames) {
        Trajectory t;
        t.kind = Kind::Linear;
        t.x0 = x0; t.y0 = y0; t.vx = vx; t.vy = vy; t.frames = frames;
        return t;
    }
    static Trajectory circular(double cx, double cy, double radius, double omega,
                               double phase, int frames) {
        Trajectory t;
        t.kind = Kind::Circular;
        t.x0 = cx; t.y0 = cy; t.path_radius = radius; t.omega = omega;
        t.phase = phase; t.frames = frames;
        return t;
    }
    static Trajectory sinusoidal(double x0, double y0, double vx, double amplitude,
                                 double omega, double phase, int frames) {
        Trajectory t;
        t.kind = Kind::Sinusoidal;
        t.x0 = x0; t.y0 = y0; t.vx = vx; t.path_radius = amplitude;
        t.omega = omega; t.phase = phase; t.frames = frames;
        return t;
    }

    /// (x, y) center at frame k.
    std::pair<double, double> position(int k) const {
        switch (kind) {
            case Kind::Linear:
                return {x0 + vx * k, y0 + vy * k};
            case Kind::Circular:
                return {x0 + path_radius * std::cos(phase + omega * k),
                        y0 + path_radius * std::sin(phase + omega * k)};
            case Kind::Sinusoidal:
                return {x0 + vx * k, y0 + path_radius * std::sin(phase + omega * k)};
        }
        return {x0, y0};
    }

    const char* kind_name() const {
        switch (kind) {
            case Kind::Linear: return "linear";
            case Kind::Circular: return "circular";
            case Kind::Sinusoidal: return "sinusoidal";
        }
        return "?";
    }
};

// --------------------------------------------------------------------------
// Appearance
// --------------------------------------------------------------------------

/// What the moving blob looks like; the label is the conditioning unit, so
/// two instances may share an id (appearance variants of one class) as long
/// as instances with distinct ids differ somewhere.
struct AppearanceClass {
    enum class Shape { Disk, Square, Ring };

    int id = 0;
    Shape shape = Shape::Disk;
    double radius = 5.0;   // disk radius / square half-side / ring outer radius
    double intensity = 1.0;

    const char* shape_name() const {
        switch (shape) {
            case Shape::Disk: return "disk";
            case Shape::Square: return "square";
            case Shape::Ring: return "ring";
        }
        return "?";
    }
};

// --------------------------------------------------------------------------
// Videos
// --------------------------------------------------------------------------

/// F grayscale frames, H x W, values clamped to [0,1].
struct ToyVideo {
    int f = 0, h = 0, w = 0;
    std::vector<float> px;  // row-major (f, y, x)

    ToyVideo() = default;
    ToyVideo(int f_, int h_, int w_)
        : f(f_), h(h_), w(w_), px(static_cast<std::size_t>(f_) * h_ * w_, 0.0f) {}

    float& at(int k, int y, int x) {
        return px[(static_cast<std::size_t>(k) * h + y) * w + x];
    }
    float at(int k, int y, int x) const {
        return px[(static_cast<std::size_t>(k) * h + y) * w + x];
    }
    bool operator==(const ToyVideo&) const = default;

    Image frame_image(int k) const {
        Image img(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) img.at(y, x) = quantize01(at(k, y, x));
        return img;
    }
};

namespace detail {

// Subpixel disk coverage: 1 inside, 0 outside, linear ramp across the rim.
inline double disk_coverage(double dx, double dy, double r) {
    double d = std::hypot(dx, dy);
    return std::clamp(r - d + 0.5, 0.0, 1.0);
}

// Exact area overlap of [c-r, c+r] with the unit pixel cell around 0.
inline double overlap1d(double c, double r) {
    return std::clamp(std::min(c + r, 0.5) - std::max(c - r, -0.5), 0.0, 1.0);
}

inline double coverage(const AppearanceClass& cls, double dx, double dy) {
    switch (cls.shape) {
        case AppearanceClass::Shape::Disk:
            return disk_coverage(dx, dy, cls.radius);
        case AppearanceClass::Shape::Square:
            return overlap1d(dx, cls.radius) * overlap1d(dy, cls.radius);
        case AppearanceClass::Shape::Ring:
            return disk_coverage(dx, dy, cls.radius) -
                   disk_coverage(dx, dy, cls.radius * 0.5);
    }
    return 0.0;
}

}  // namespace detail

/// Rasterizes one blob at (cx, cy) into frame k; additive, clamped to [0,1].
inline void splat(ToyVideo& video, int k, const AppearanceClass& cls, double cx,
                  double cy) {
    const double pad = cls.radius + 1.0;
    const int x_lo = std::max(0, static_cast<int>(std::floor(cx - pad)));
    const int x_hi = std::min(video.w - 1, static_cast<int>(std::ceil(cx + pad)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(cy - pad)));
    const int y_hi = std::min(video.h - 1, static_cast<int>(std::ceil(cy + pad)));
    for (int y = y_lo; y <= y_hi; ++y) {
        for (int x = x_lo; x <= x_hi; ++x) {
            double cov = detail::coverage(cls, x - cx, y - cy);
            if (cov <= 0.0) continue;
            float& p = video.at(k, y, x);
            p = std::min(1.0f, p + static_cast<float>(cls.intensity * cov));
        }
    }
}

struct SceneObject {
    AppearanceClass appearance;
    Trajectory trajectory;
};

inline void check_in_canvas(const AppearanceClass& cls, const Trajectory& traj,
                            int frames, int h, int w) {
    if (2.0 * cls.radius + 1.0 > std::min(h, w)) {
        throw geometry_error("shape larger than canvas");
    }
    for (int k = 0; k < frames; ++k) {
        auto [cx, cy] = traj.position(k);
        double r = cls.radius + 0.5;
        if (cx - r < -0.5 || cx + r > w - 0.5 || cy - r < -0.5 || cy + r > h - 0.5) {
            throw geometry_error("trajectory leaves canvas at frame " +
                                 std::to_string(k));
        }
    }
}

/// Multi-object scenes are sums of per-object renders, clamped to [0,1].
/// Pixels are snapped to the 1/256 grid so that the identity codec's
/// affine map (2p - 1 and back) is bit-exact on rendered videos.
inline ToyVideo render_scene(const std::vector<SceneObject>& objects, int frames,
                             int h, int w) {
    if (frames < 2) throw geometry_error("render: need F >= 2 frames");
    for (const auto& obj : objects) {
        check_in_canvas(obj.appearance, obj.trajectory, frames, h, w);
    }
    ToyVideo video(frames, h, w);
    for (int k = 0; k < frames; ++k) {
        for (const auto& obj : objects) {
            auto [cx, cy] = obj.trajectory.position(k);
            splat(video, k, obj.appearance, cx, cy);
        }
    }
    for (float& p : video.px) {
        p = static_cast<float>(std::lround(p * 256.0f)) / 256.0f;
    }
    return video;
}

inline ToyVideo render_video(const AppearanceClass& appearance,
                             const Trajectory& trajectory, int frames, int h, int w) {
    return render_scene({{appearance, trajectory}}, frames, h, w);
}

// --------------------------------------------------------------------------
// Codec: the autoencoder stand-in. Identity maps pixel p to latent 2p-1 and
// back exactly; Pooled averages 2x2 blocks (decode replicates), so it is a
// genuine non-identity codec for tests.
// --------------------------------------------------------------------------

class Codec {
public:
    enum class Kind { Identity, Pooled };

    explicit Codec(Kind kind = Kind::Identity) : kind_(kind) {}
    Kind kind() const { return kind_; }
    const char* name() const {
        return kind_ == Kind::Identity ? "identity" : "pooled";
    }

    Shape4 latent_shape(int f, int h, int w) const {
        if (kind_ == Kind::Identity) return Shape4{f, h, w, 1};
        if (h % 2 != 0 || w % 2 != 0) {
            throw geometry_error("pooled codec needs even H and W");
        }
        return Shape4{f, h / 2, w / 2, 1};
    }

    LatentTensor encode(const ToyVideo& v) const {
        Shape4 s = latent_shape(v.f, v.h, v.w);
        LatentTensor z(s);
        if (kind_ == Kind::Identity) {
            for (std::size_t i = 0; i < z.numel(); ++i) z[i] = 2.0f * v.px[i] - 1.0f;
            return z;
        }
        for (int k = 0; k < v.f; ++k) {
            for (int y = 0; y < s.h; ++y) {
                for (int x = 0; x < s.w; ++x) {
                    float m = 0.25f * (v.at(k, 2 * y, 2 * x) + v.at(k, 2 * y, 2 * x + 1) +
                                       v.at(k, 2 * y + 1, 2 * x) +
                                       v.at(k, 2 * y + 1, 2 * x + 1));
                    z.at(k, y, x, 0) = 2.0f * m - 1.0f;
                }
            }
        }
        return z;
    }

    ToyVideo decode(const LatentTensor& z) const {
        const Shape4& s = z.shape();
        auto to_pixel = [](float v) {
            return std::clamp(0.5f * (v + 1.0f), 0.0f, 1.0f);
        };
        if (kind_ == Kind::Identity) {
            ToyVideo out(s.f, s.h, s.w);
            for (std::size_t i = 0; i < z.numel(); ++i) out.px[i] = to_pixel(z[i]);
            return out;
        }
        ToyVideo out(s.f, s.h * 2, s.w * 2);
        for (int k = 0; k < s.f; ++k) {
            for (int y = 0; y < s.h; ++y) {
                for (int x = 0; x < s.w; ++x) {
                    float p = to_pixel(z.at(k, y, x, 0));
                    out.at(k, 2 * y, 2 * x) = p;
                    out.at(k, 2 * y, 2 * x + 1) = p;
                    out.at(k, 2 * y + 1, 2 * x) = p;
                    out.at(k, 2 * y + 1, 2 * x + 1) = p;
                }
            }
        }
        return out;
    }

private:
    Kind kind_;
};

// --------------------------------------------------------------------------
// Dataset
// --------------------------------------------------------------------------

struct DatasetItem {
    LatentTensor latent;
    int label = 0;
    std::vector<SceneObject> scene;  // provenance, kept for manifests
};

/// The empirical data distribution the oracle field minimizes over.
struct Dataset {
    std::vector<DatasetItem> items;
    std::vector<AppearanceClass> classes;  // canonical class table (one per id)
    std::vector<std::string> warnings;

    Shape4 latent_shape() const {
        if (items.empty()) throw std::runtime_error("dataset is empty");
        return items.front().latent.shape();
    }

    std::vector<int> labels() const {
        std::vector<int> out;
        for (const auto& it : items) {
            if (std::find(out.begin(), out.end(), it.label) == out.end()) {
                out.push_back(it.label);
            }
        }
        return out;
    }
};

struct DatasetSpec {
    std::vector<std::vector<SceneObject>> scenes;  // one scene per item
    std::vector<AppearanceClass> classes;          // canonical table
    int frames = 8, height = 32, width = 32;
    Codec codec = Codec(Codec::Kind::Identity);
};

inline Dataset build_dataset(const DatasetSpec& spec) {
    if (spec.scenes.empty()) throw std::runtime_error("build_dataset: no items");
    Dataset ds;
    ds.classes = spec.classes;
    for (const auto& scene : spec.scenes) {
        if (scene.empty()) throw std::runtime_error("build_dataset: empty scene");
        ToyVideo video = render_scene(scene, spec.frames, spec.height, spec.width);
        DatasetItem item{spec.codec.encode(video), scene.front().appearance.id, scene};
        for (std::size_t j = 0; j < ds.items.size(); ++j) {
            if (ds.items[j].label == item.label &&
                ds.items[j].latent.values().size() == item.latent.values().size() &&
                std::equal(item.latent.values().begin(), item.latent.values().end(),
                           ds.items[j].latent.values().begin())) {
                ds.warnings.push_back("duplicate item (matches item " +
                                      std::to_string(j) + "); kept");
                break;
            }
        }
        ds.items.push_back(std::move(item));
    }
    bool label_known = true;
    for (const auto& it : ds.items) {
        label_known = false;
        for (const auto& c : ds.classes) label_known |= (c.id == it.label);
        if (!label_known) {
            throw std::runtime_error("build_dataset: label " +
                                     std::to_string(it.label) + " not in class table");
        }
    }
    return ds;
}

/// Convenience for the common single-object case.
inline Dataset build_dataset(const std::vector<std::pair<AppearanceClass, Trajectory>>& specs,
                             int frames, int h, int w,
                             Codec codec = Codec(Codec::Kind::Identity)) {
    DatasetSpec ds;
    ds.frames = frames;
    ds.height = h;
    ds.width = w;
    ds.codec = codec;
    for (const auto& [cls, traj] : specs) {
        ds.scenes.push_back({SceneObject{cls, traj}});
        bool seen = false;
        for (const auto& c : ds.classes) seen |= (c.id == cls.id);
        if (!seen) ds.classes.push_back(cls);
    }
    return build_dataset(ds);
}

/// One PGM per frame, zero-padded frame index in the filename.
inline std::vector<std::filesystem::path> export_video_pgm(
    const ToyVideo& video, const std::filesystem::path& dir,
    const std::string& stem = "frame") {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> paths;
    for (int k = 0; k < video.f; ++k) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%04d.pgm", stem.c_str(), k);
        auto p = dir / name;
        save_pgm(p, video.frame_image(k));
        paths.push_back(p);
    }
    return paths;
}

}  // namespace flowmotion
