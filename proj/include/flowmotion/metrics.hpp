// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "flowmotion/tensor.hpp"
#include "flowmotion/toy_world.hpp"

namespace flowmotion {

struct mass_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Per-frame intensity-weighted centroid, in pixel units.
struct CentroidTrack {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> mass;

    std::size_t size() const { return x.size(); }
};

inline CentroidTrack centroid_track(const ToyVideo& video) {
    CentroidTrack track;
    for (int k = 0; k < video.f; ++k) {
        double m = 0.0, mx = 0.0, my = 0.0;
        for (int y = 0; y < video.h; ++y) {
            for (int x = 0; x < video.w; ++x) {
                const double p = video.at(k, y, x);
                m += p;
                mx += p * x;
                my += p * y;
            }
        }
        if (m <= 0.0) {
            throw mass_error("centroid_track: zero-mass frame " + std::to_string(k));
        }
        track.x.push_back(mx / m);
        track.y.push_back(my / m);
        track.mass.push_back(m);
    }
    return track;
}

/// Root-mean-square distance between two tracks after mean-centering each
/// (absolute placement is not motion).
inline double track_rmse(const CentroidTrack& a, const CentroidTrack& b) {
    if (a.size() != b.size() || a.size() == 0) {
        throw shape_error("track_rmse: track length mismatch");
    }
    const std::size_t n = a.size();
    double ax = 0, ay = 0, bx = 0, by = 0;
    for (std::size_t k = 0; k < n; ++k) {
        ax += a.x[k]; ay += a.y[k]; bx += b.x[k]; by += b.y[k];
    }
    ax /= n; ay /= n; bx /= n; by /= n;
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double dx = (a.x[k] - ax) - (b.x[k] - bx);
        const double dy = (a.y[k] - ay) - (b.y[k] - by);
        acc += dx * dx + dy * dy;
    }
    return std::sqrt(acc / n);
}

/// 1 / (1 + RMSE) of the mean-centered tracks; 1.0 means identical motion
/// shape, offsets ignored.
inline double motion_fidelity(const CentroidTrack& src, const CentroidTrack& gen) {
    return 1.0 / (1.0 + track_rmse(src, gen));
}

/// Mean cosine similarity between corresponding consecutive-frame
/// differences; emphasizes temporal change, suppresses static appearance.
/// Zero-norm differences contribute 0.
inline double diff_field_similarity(const ToyVideo& src, const ToyVideo& gen) {
    if (src.f != gen.f || src.h != gen.h || src.w != gen.w) {
        throw shape_error("diff_field_similarity: shape mismatch");
    }
    const std::size_t fn = static_cast<std::size_t>(src.h) * src.w;
    double total = 0.0;
    for (int k = 0; k + 1 < src.f; ++k) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t i = 0; i < fn; ++i) {
            const std::size_t o0 = static_cast<std::size_t>(k) * fn + i;
            const std::size_t o1 = o0 + fn;
            const double da = static_cast<double>(src.px[o1]) - src.px[o0];
            const double db = static_cast<double>(gen.px[o1]) - gen.px[o0];
            dot += da * db;
            na += da * da;
            nb += db * db;
        }
        if (na > 0.0 && nb > 0.0) total += dot / (std::sqrt(na) * std::sqrt(nb));
    }
    return total / (src.f - 1);
}

/// Mean cosine similarity between consecutive frames in the zero-centered
/// (2p - 1) value range, so an intensity-inverted pair scores -1.
inline double temporal_consistency(const ToyVideo& video) {
    if (video.f < 2) throw shape_error("temporal_consistency: need F >= 2");
    const std::size_t fn = static_cast<std::size_t>(video.h) * video.w;
    double total = 0.0;
    for (int k = 0; k + 1 < video.f; ++k) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t i = 0; i < fn; ++i) {
            const double a = 2.0 * video.px[static_cast<std::size_t>(k) * fn + i] - 1.0;
            const double b = 2.0 * video.px[(static_cast<std::size_t>(k) + 1) * fn + i] - 1.0;
            dot += a * b;
            na += a * a;
            nb += b * b;
        }
        if (na > 0.0 && nb > 0.0) total += dot / (std::sqrt(na) * std::sqrt(nb));
    }
    return total / (video.f - 1);
}

namespace detail {

/// Canonical template patch for a class: the shape rendered at the patch
/// center. Odd side so the center lands on a pixel.
inline std::vector<float> class_template(const AppearanceClass& cls, int& side) {
    side = 2 * static_cast<int>(std::ceil(cls.radius)) + 5;
    if (side % 2 == 0) ++side;
    const double c = (side - 1) / 2.0;
    std::vector<float> tpl(static_cast<std::size_t>(side) * side, 0.0f);
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            double cov = coverage(cls, x - c, y - c);
            tpl[static_cast<std::size_t>(y) * side + x] =
                static_cast<float>(std::clamp(cls.intensity * cov, 0.0, 1.0));
        }
    }
    return tpl;
}

}  // namespace detail

/// Mean over frames of the maximum normalized cross-correlation between the
/// frame and the class's template patch, over all placements. NCC is
/// mean/std normalized, so it is invariant to affine intensity changes but
/// sensitive to shape and size. Flat windows (e.g. a blank video) score 0.
inline double appearance_score(const ToyVideo& video, const AppearanceClass& cls) {
    int side = 0;
    std::vector<float> tpl = detail::class_template(cls, side);
    if (side > video.h || side > video.w) {
        throw geometry_error("appearance_score: template larger than frame");
    }
    const std::size_t tn = tpl.size();
    double t_mean = 0.0;
    for (float v : tpl) t_mean += v;
    t_mean /= tn;
    double t_var = 0.0;
    for (float v : tpl) t_var += (v - t_mean) * (v - t_mean);
    const double t_std = std::sqrt(t_var);
    if (t_std <= 0.0) throw geometry_error("appearance_score: flat template");

    double total = 0.0;
    for (int k = 0; k < video.f; ++k) {
        double best = 0.0;
        for (int y0 = 0; y0 + side <= video.h; ++y0) {
            for (int x0 = 0; x0 + side <= video.w; ++x0) {
                double w_sum = 0.0, w_sq = 0.0, cross = 0.0;
                for (int y = 0; y < side; ++y) {
                    for (int x = 0; x < side; ++x) {
                        const double p = video.at(k, y0 + y, x0 + x);
                        const double tv = tpl[static_cast<std::size_t>(y) * side + x];
                        w_sum += p;
                        w_sq += p * p;
                        cross += p * tv;
                    }
                }
                const double w_mean = w_sum / tn;
                const double w_var = w_sq - w_sum * w_mean;
                if (w_var <= 1e-12) continue;
                const double ncc =
                    (cross - t_mean * w_sum) / (t_std * std::sqrt(w_var));
                best = std::max(best, ncc);
            }
        }
        total += std::clamp(best, 0.0, 1.0);
    }
    return total / video.f;
}

}  // namespace flowmotion
