// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "flowmotion/io.hpp"
#include "flowmotion/toy_world.hpp"

using namespace flowmotion;

namespace {

// Test-local centroid (kept independent of the metrics module).
std::pair<double, double> frame_centroid(const ToyVideo& v, int k) {
    double m = 0, mx = 0, my = 0;
    for (int y = 0; y < v.h; ++y) {
        for (int x = 0; x < v.w; ++x) {
            const double p = v.at(k, y, x);
            m += p;
            mx += p * x;
            my += p * y;
        }
    }
    REQUIRE(m > 0.0);
    return {mx / m, my / m};
}

}  // namespace

TEST_CASE("static disk renders identical frames") {
    AppearanceClass disk{0, AppearanceClass::Shape::Disk, 4.0, 1.0};
    auto traj = Trajectory::linear(16.0, 16.0, 0.0, 0.0, 6);
    auto video = render_video(disk, traj, 6, 32, 32);
    for (int k = 1; k < video.f; ++k) {
        for (int y = 0; y < video.h; ++y) {
            for (int x = 0; x < video.w; ++x) {
                REQUIRE(video.at(k, y, x) == video.at(0, y, x));
            }
        }
    }
}

TEST_CASE("rendered values stay in [0,1]") {
    AppearanceClass disk{0, AppearanceClass::Shape::Disk, 5.0, 1.0};
    AppearanceClass square{1, AppearanceClass::Shape::Square, 5.0, 0.8};
    auto t1 = Trajectory::linear(14.0, 14.0, 0.5, 0.5, 4);
    auto t2 = Trajectory::linear(17.0, 17.0, -0.5, -0.5, 4);
    auto video = render_scene({{disk, t1}, {square, t2}}, 4, 32, 32);
    for (float p : video.px) {
        CHECK(p >= 0.0f);
        CHECK(p <= 1.0f);
    }
}

TEST_CASE("rasterization centroid bias below 0.5 px on a subpixel grid") {
    // The measurement that justifies trusting centroid tracks: sweep shapes
    // over sub-pixel offsets and record the worst centroid error.
    const int F = 2, H = 32, W = 32;
    double worst = 0.0;
    for (auto shape : {AppearanceClass::Shape::Disk, AppearanceClass::Shape::Square,
                       AppearanceClass::Shape::Ring}) {
        AppearanceClass cls{0, shape, 4.0, 1.0};
        for (int i = 0; i < 5; ++i) {
            for (int j = 0; j < 5; ++j) {
                const double cx = 14.0 + i * 0.2 + 0.013;
                const double cy = 13.0 + j * 0.2 + 0.007;
                auto video =
                    render_video(cls, Trajectory::linear(cx, cy, 0, 0, F), F, H, W);
                auto [gx, gy] = frame_centroid(video, 0);
                worst = std::max(worst, std::hypot(gx - cx, gy - cy));
            }
        }
    }
    INFO("worst centroid bias " << worst << " px");
    CHECK(worst < 0.5);
    CHECK(worst < 0.1);  // measured: the AA rasterizer is much tighter
}

TEST_CASE("trajectory centroids track positions frame by frame") {
    AppearanceClass disk{0, AppearanceClass::Shape::Disk, 3.0, 1.0};
    auto traj = Trajectory::sinusoidal(8.0, 16.0, 2.0, 5.0, 0.7, 0.2, 8);
    auto video = render_video(disk, traj, 8, 32, 32);
    for (int k = 0; k < 8; ++k) {
        auto [cx, cy] = traj.position(k);
        auto [gx, gy] = frame_centroid(video, k);
        CHECK(std::hypot(gx - cx, gy - cy) < 0.5);
    }
}

TEST_CASE("identical inputs render bitwise-equal videos") {
    AppearanceClass ring{2, AppearanceClass::Shape::Ring, 4.5, 0.7};
    auto traj = Trajectory::circular(16, 16, 5, 0.8, 0.1, 8);
    auto a = render_video(ring, traj, 8, 32, 32);
    auto b = render_video(ring, traj, 8, 32, 32);
    CHECK(a == b);
}

TEST_CASE("geometry violations throw") {
    AppearanceClass huge{0, AppearanceClass::Shape::Disk, 40.0, 1.0};
    CHECK_THROWS_AS(
        render_video(huge, Trajectory::linear(16, 16, 0, 0, 4), 4, 32, 32),
        geometry_error);

    AppearanceClass disk{0, AppearanceClass::Shape::Disk, 5.0, 1.0};
    CHECK_THROWS_AS(
        render_video(disk, Trajectory::linear(2.0, 16, 0, 0, 4), 4, 32, 32),
        geometry_error);
    CHECK_THROWS_AS(
        render_video(disk, Trajectory::linear(16, 16, 3.0, 0, 8), 8, 32, 32),
        geometry_error);
}

TEST_CASE("identity codec round-trips rendered videos exactly") {
    AppearanceClass disk{0, AppearanceClass::Shape::Disk, 4.0, 0.9};
    auto video = render_video(disk, Trajectory::linear(10, 10, 1.5, 1.5, 8), 8, 32, 32);
    Codec codec(Codec::Kind::Identity);
    auto back = codec.decode(codec.encode(video));
    CHECK(back == video);
}

TEST_CASE("all-0.5 video encodes to the zero latent") {
    ToyVideo video(2, 4, 4);
    for (float& p : video.px) p = 0.5f;
    Codec codec(Codec::Kind::Identity);
    auto z = codec.encode(video);
    for (std::size_t i = 0; i < z.numel(); ++i) CHECK(z[i] == 0.0f);
}

TEST_CASE("pooled codec equals brute-force block average") {
    AppearanceClass square{1, AppearanceClass::Shape::Square, 4.0, 1.0};
    auto video = render_video(square, Trajectory::linear(9, 9, 1.7, 1.3, 6), 6, 32, 32);
    Codec pooled(Codec::Kind::Pooled);
    auto round = pooled.decode(pooled.encode(video));
    REQUIRE(round.h == video.h);
    REQUIRE(round.w == video.w);
    for (int k = 0; k < video.f; ++k) {
        for (int y = 0; y < video.h; ++y) {
            for (int x = 0; x < video.w; ++x) {
                const int by = y / 2 * 2, bx = x / 2 * 2;
                const float avg = 0.25f * (video.at(k, by, bx) + video.at(k, by, bx + 1) +
                                           video.at(k, by + 1, bx) +
                                           video.at(k, by + 1, bx + 1));
                REQUIRE(round.at(k, y, x) == Catch::Approx(avg).margin(1e-7));
            }
        }
    }
}

TEST_CASE("pooled codec: encode . decode . encode = encode") {
    AppearanceClass disk{0, AppearanceClass::Shape::Disk, 5.0, 0.6};
    auto video = render_video(disk, Trajectory::circular(16, 16, 4, 0.9, 0, 6), 6, 32, 32);
    Codec pooled(Codec::Kind::Pooled);
    auto z1 = pooled.encode(video);
    auto z2 = pooled.encode(pooled.decode(z1));
    REQUIRE(z1.shape() == z2.shape());
    for (std::size_t i = 0; i < z1.numel(); ++i) REQUIRE(z1[i] == z2[i]);
}

TEST_CASE("build_dataset sizes, labels and shapes") {
    AppearanceClass disk{0, AppearanceClass::Shape::Disk, 5.0, 1.0};
    AppearanceClass square{1, AppearanceClass::Shape::Square, 5.0, 1.0};

    auto one = build_dataset({{disk, Trajectory::linear(16, 16, 0.5, 0, 8)}}, 8, 32, 32);
    CHECK(one.items.size() == 1);

    std::vector<std::pair<AppearanceClass, Trajectory>> specs;
    std::vector<Trajectory> trajs = {
        Trajectory::linear(8, 16, 2.0, 0, 8),
        Trajectory::linear(16, 8, 0, 2.0, 8),
        Trajectory::circular(16, 16, 5, 0.7854, 0, 8),
        Trajectory::sinusoidal(8, 16, 2.0, 4, 0.9, 0, 8),
    };
    for (const auto& cls : {disk, square})
        for (const auto& t : trajs) specs.push_back({cls, t});
    auto ds = build_dataset(specs, 8, 32, 32);
    REQUIRE(ds.items.size() == 8);
    for (std::size_t i = 0; i < 4; ++i) CHECK(ds.items[i].label == 0);
    for (std::size_t i = 4; i < 8; ++i) CHECK(ds.items[i].label == 1);
    for (const auto& item : ds.items) {
        CHECK(item.latent.shape() == Shape4{8, 32, 32, 1});
    }
    CHECK(ds.warnings.empty());
    CHECK(ds.labels() == std::vector<int>{0, 1});
}

TEST_CASE("duplicate items are kept with a warning") {
    AppearanceClass disk{0, AppearanceClass::Shape::Disk, 5.0, 1.0};
    auto traj = Trajectory::linear(16, 16, 0.5, 0, 8);
    auto ds = build_dataset({{disk, traj}, {disk, traj}}, 8, 32, 32);
    CHECK(ds.items.size() == 2);
    REQUIRE(ds.warnings.size() == 1);
    CHECK_THAT(ds.warnings.front(), Catch::Matchers::ContainsSubstring("duplicate"));
}

TEST_CASE("PGM export writes zero-padded frame files") {
    AppearanceClass disk{0, AppearanceClass::Shape::Disk, 3.0, 1.0};
    auto video = render_video(disk, Trajectory::linear(10, 10, 1, 1, 3), 3, 24, 24);
    auto dir = std::filesystem::temp_directory_path() / "fm_toy_pgm";
    std::filesystem::remove_all(dir);
    auto paths = export_video_pgm(video, dir, "frame");
    REQUIRE(paths.size() == 3);
    CHECK(paths[0].filename() == "frame_0000.pgm");
    CHECK(paths[2].filename() == "frame_0002.pgm");
    auto img = load_pgm(paths[1]);
    CHECK(img == video.frame_image(1));
}
