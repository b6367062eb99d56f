// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <numbers>
#include <string>
#include <vector>

#include "flowmotion/pipeline.hpp"
#include "flowmotion/toy_world.hpp"

namespace flowmotion {

/// A dataset plus the source jobs that get transferred onto it.
struct Benchmark {
    Dataset dataset;
    Codec codec;
    std::vector<AblationJob> jobs;  // sources paired with target classes
};

namespace bench_detail {

constexpr int kFrames = 8;
constexpr int kCanvas = 32;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline AppearanceClass disk(double r, double intensity = 1.0) {
    return AppearanceClass{0, AppearanceClass::Shape::Disk, r, intensity};
}
inline AppearanceClass square(double r, double intensity = 1.0) {
    return AppearanceClass{1, AppearanceClass::Shape::Square, r, intensity};
}
inline AppearanceClass ring(double r, double intensity = 1.0) {
    return AppearanceClass{2, AppearanceClass::Shape::Ring, r, intensity};
}

/// Trajectories carried by the small (source-sized) appearance variants.
inline std::vector<Trajectory> small_trajectories() {
    const int F = kFrames;
    return {
        Trajectory::linear(8.0, 16.0, 2.2, 0.0, F),
        Trajectory::linear(16.0, 8.0, 0.0, 2.2, F),
        Trajectory::circular(16.0, 16.0, 6.0, kTwoPi / F, 0.0, F),
        Trajectory::sinusoidal(8.0, 16.0, 2.0, 5.0, kTwoPi / 7.0, 0.0, F),
        Trajectory::linear(23.4, 16.0, -2.2, 0.0, F),
        Trajectory::linear(16.0, 23.4, 0.0, -2.2, F),
        Trajectory::circular(16.0, 16.0, 6.0, -kTwoPi / F, std::numbers::pi / 2, F),
        Trajectory::sinusoidal(22.0, 16.0, -2.0, 5.0, kTwoPi / 7.0, std::numbers::pi, F),
    };
}

/// Trajectories carried by the canonical-size variants; deliberately
/// disjoint from the small set so motion choice and appearance choice move
/// together under guidance.
inline std::vector<Trajectory> canonical_trajectories() {
    const int F = kFrames;
    return {
        Trajectory::linear(8.5, 8.5, 2.0, 2.0, F),
        Trajectory::linear(8.5, 23.5, 2.0, -2.0, F),
        Trajectory::linear(23.5, 23.5, -2.0, -2.0, F),
        Trajectory::linear(23.5, 8.5, -2.0, 2.0, F),
        Trajectory::circular(16.0, 16.0, 4.5, kTwoPi / F, std::numbers::pi / 4, F),
        Trajectory::circular(16.0, 16.0, 4.5, -kTwoPi / F, 3 * std::numbers::pi / 4, F),
        Trajectory::sinusoidal(9.0, 16.0, 1.8, 4.0, 3.0 * kTwoPi / F, 0.3, F),
        Trajectory::linear(12.0, 20.0, 1.1, -1.1, F),
    };
}

}  // namespace bench_detail

/// The 8-item starter dataset: {disk, square} x 4 trajectories.
inline DatasetSpec default_dataset_spec(int frames = 8, int h = 32, int w = 32,
                                        Codec codec = Codec(Codec::Kind::Identity)) {
    using namespace bench_detail;
    DatasetSpec spec;
    spec.frames = frames;
    spec.height = h;
    spec.width = w;
    spec.codec = codec;
    spec.classes = {disk(5.0), square(5.0)};
    auto trajs = small_trajectories();
    trajs.resize(4);
    for (const auto& cls : spec.classes) {
        for (const auto& traj : trajs) {
            spec.scenes.push_back({SceneObject{cls, traj}});
        }
    }
    return spec;
}

/// Standard transfer benchmark. Each class carries 16 items: 8 small-radius
/// variants on one trajectory set and 8 canonical-radius variants on a
/// disjoint set. Sources are rings (an appearance no target class owns)
/// moving on the first four small trajectories, so a motion-matched
/// selection exists in every class and carries the small appearance.
inline Benchmark standard_benchmark() {
    using namespace bench_detail;
    DatasetSpec spec;
    spec.frames = kFrames;
    spec.height = kCanvas;
    spec.width = kCanvas;
    spec.classes = {disk(5.0), square(5.0)};

    const double small_r = 3.0;
    for (const AppearanceClass& canonical : spec.classes) {
        AppearanceClass small = canonical;
        small.radius = small_r;
        for (const auto& traj : small_trajectories()) {
            spec.scenes.push_back({SceneObject{small, traj}});
        }
        for (const auto& traj : canonical_trajectories()) {
            spec.scenes.push_back({SceneObject{canonical, traj}});
        }
    }

    Benchmark b;
    b.codec = spec.codec;
    b.dataset = build_dataset(spec);

    const AppearanceClass src_look = ring(3.2, 0.9);
    auto source_trajs = small_trajectories();
    source_trajs.resize(4);
    int idx = 0;
    for (const auto& traj : source_trajs) {
        ToyVideo video = render_video(src_look, traj, kFrames, kCanvas, kCanvas);
        for (int target = 0; target <= 1; ++target) {
            AblationJob job;
            job.job_id = "src" + std::to_string(idx) + "_to_c" + std::to_string(target);
            job.source = video;
            job.target_class = target;
            b.jobs.push_back(std::move(job));
        }
        ++idx;
    }
    return b;
}

/// Hard benchmark: direction-reversing sinusoids in confusable phase pairs
/// plus two-object scenes, each present in both the small and the canonical
/// appearance variant (same trajectories), so motion and appearance are
/// separate selection axes.
inline Benchmark hard_benchmark() {
    using namespace bench_detail;
    const int F = kFrames;
    DatasetSpec spec;
    spec.frames = F;
    spec.height = kCanvas;
    spec.width = kCanvas;
    spec.classes = {disk(5.0), square(5.0)};

    auto sin_a = Trajectory::sinusoidal(9.0, 16.0, 1.9, 5.5, kTwoPi / 7.0, 0.0, F);
    auto sin_b = Trajectory::sinusoidal(9.0, 16.0, 1.9, 5.5, kTwoPi / 7.0,
                                        std::numbers::pi, F);
    // two-object scenes: opposite-phase orbit pair and a crossing pair
    auto orbit_a = Trajectory::circular(16.0, 16.0, 7.0, kTwoPi / F, 0.0, F);
    auto orbit_b = Trajectory::circular(16.0, 16.0, 7.0, kTwoPi / F, std::numbers::pi, F);
    auto cross_a = Trajectory::linear(8.0, 9.0, 2.2, 0.0, F);
    auto cross_b = Trajectory::linear(23.4, 23.0, -2.2, 0.0, F);

    const double small_r = 3.0;
    for (const AppearanceClass& canonical : spec.classes) {
        AppearanceClass big = canonical;
        big.radius = 4.2;  // two-object scenes need slack for two blobs
        AppearanceClass small = canonical;
        small.radius = small_r;
        for (const AppearanceClass* cls : {&small, &big}) {
            spec.scenes.push_back({SceneObject{*cls, sin_a}});
            spec.scenes.push_back({SceneObject{*cls, sin_b}});
            spec.scenes.push_back(
                {SceneObject{*cls, orbit_a}, SceneObject{*cls, orbit_b}});
            spec.scenes.push_back(
                {SceneObject{*cls, cross_a}, SceneObject{*cls, cross_b}});
        }
    }

    Benchmark b;
    b.codec = spec.codec;
    b.dataset = build_dataset(spec);

    const AppearanceClass src_look = ring(3.2, 0.9);
    std::vector<std::vector<SceneObject>> source_scenes = {
        {SceneObject{src_look, sin_a}},
        {SceneObject{src_look, sin_b}},
        {SceneObject{src_look, orbit_a}, SceneObject{src_look, orbit_b}},
        {SceneObject{src_look, cross_a}, SceneObject{src_look, cross_b}},
    };
    int idx = 0;
    for (const auto& scene : source_scenes) {
        ToyVideo video = render_scene(scene, F, kCanvas, kCanvas);
        for (int target = 0; target <= 1; ++target) {
            AblationJob job;
            job.job_id = "hard" + std::to_string(idx) + "_to_c" + std::to_string(target);
            job.source = video;
            job.target_class = target;
            b.jobs.push_back(std::move(job));
        }
        ++idx;
    }
    return b;
}

}  // namespace flowmotion
