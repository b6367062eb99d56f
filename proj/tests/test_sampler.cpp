// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "flowmotion/rng.hpp"
#include "flowmotion/sampler.hpp"
#include "flowmotion/toy_world.hpp"
#include "flowmotion/velocity_field.hpp"

using namespace flowmotion;

namespace {

Dataset make_dataset(std::vector<LatentTensor> latents) {
    Dataset ds;
    int label = 0;
    for (auto& z : latents) {
        DatasetItem item;
        item.latent = std::move(z);
        item.label = label++ % 2;
        ds.items.push_back(std::move(item));
    }
    ds.classes.push_back(AppearanceClass{0, AppearanceClass::Shape::Disk, 1.0, 1.0});
    ds.classes.push_back(AppearanceClass{1, AppearanceClass::Shape::Square, 1.0, 1.0});
    return ds;
}

double max_abs_diff(const LatentTensor& a, const LatentTensor& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    }
    return m;
}

}  // namespace

TEST_CASE("latent prediction basics and golden chain") {
    SeededRng rng(5);
    const Shape4 shape{1, 2, 2, 1};
    auto z = sample_gaussian(shape, rng);
    auto zero = LatentTensor(shape, 0.0f);
    auto same = latent_prediction(z, zero, 0.7);
    for (std::size_t i = 0; i < z.numel(); ++i) CHECK(same[i] == z[i]);

    // chained from the oracle golden number: items {0,2}, z=0.4, t=0.5
    LatentTensor zt(Shape4{1, 1, 1, 1}, {0.4f});
    LatentTensor v(Shape4{1, 1, 1, 1}, {-0.805249360f});
    auto zhat = latent_prediction(zt, v, 0.5);
    CHECK(zhat[0] == Catch::Approx(0.802624680).margin(1e-6));

    CHECK_THROWS_AS(latent_prediction(z, zero, 1.5), std::domain_error);
}

TEST_CASE("single-item oracle: latent prediction recovers the item") {
    SeededRng rng(6);
    const Shape4 shape{2, 3, 3, 1};
    auto x = sample_gaussian(shape, rng);
    auto ds = make_dataset({x});
    OracleField field(ds);
    for (int rep = 0; rep < 30; ++rep) {
        auto z = sample_gaussian(shape, rng);
        const double t = 0.001 + 0.999 * rng.uniform();
        auto v = field.eval(z, t, std::nullopt);
        auto zhat = latent_prediction(z, v, t);
        CHECK(max_abs_diff(zhat, x) < 1e-5);
    }
}

TEST_CASE("euler step basics") {
    SeededRng rng(7);
    const Shape4 shape{1, 2, 2, 1};
    auto z = sample_gaussian(shape, rng);
    auto zero = LatentTensor(shape, 0.0f);
    auto same = euler_step(z, zero, 0.02);
    for (std::size_t i = 0; i < z.numel(); ++i) CHECK(same[i] == z[i]);
    CHECK_THROWS_AS(euler_step(z, zero, 0.0), std::domain_error);
}

TEST_CASE("Euler is exact on the single-item linear flow") {
    SeededRng rng(8);
    const Shape4 shape{1, 2, 2, 1};
    auto x = sample_gaussian(shape, rng);
    auto ds = make_dataset({x});
    OracleField field(ds);

    for (int T : {1, 2, 50}) {
        auto z1 = sample_gaussian(shape, rng);
        auto res = sample(field, z1, TimeGrid(T), std::nullopt);
        INFO("T = " << T);
        CHECK(max_abs_diff(res.z0, x) < 1e-6);
    }
}

TEST_CASE("unguided eval count is exactly T (2T with CFG)") {
    SeededRng rng(9);
    const Shape4 shape{1, 2, 2, 1};
    auto ds = make_dataset({sample_gaussian(shape, rng), sample_gaussian(shape, rng)});
    {
        OracleField field(ds);
        auto z1 = sample_gaussian(shape, rng);
        (void)sample(field, z1, TimeGrid(13), 0);
        CHECK(field.eval_count() == 13);
    }
    {
        OracleField field(ds);
        auto z1 = sample_gaussian(shape, rng);
        (void)sample(field, z1, TimeGrid(13), 0, 6.0);
        CHECK(field.eval_count() == 26);
    }
}

TEST_CASE("terminal state lands on a data item for nearly all seeds") {
    SeededRng init(10);
    const Shape4 shape{1, 2, 2, 1};
    auto x1 = sample_gaussian(shape, init);
    auto x2 = sample_gaussian(shape, init);
    auto ds = make_dataset({x1, x2});
    OracleField field(ds);

    const int n_seeds = 200;
    int hits = 0;
    for (int s = 0; s < n_seeds; ++s) {
        SeededRng rng(1000 + s);
        auto z1 = sample_gaussian(shape, rng);
        auto res = sample(field, z1, TimeGrid(50), std::nullopt);
        const double d1 = max_abs_diff(res.z0, x1);
        const double d2 = max_abs_diff(res.z0, x2);
        if (std::min(d1, d2) < 1e-2) ++hits;
    }
    INFO("hits " << hits << "/" << n_seeds);
    CHECK(hits >= static_cast<int>(0.95 * n_seeds));
}

TEST_CASE("latent-prediction telescoping on exact linear paths") {
    SeededRng rng(11);
    const Shape4 shape{2, 4, 4, 1};
    for (int rep = 0; rep < 100; ++rep) {
        auto z0 = sample_gaussian(shape, rng);
        auto z1 = sample_gaussian(shape, rng);
        const double t = rng.uniform();
        auto z_t = lerp_path(z0, z1, t);
        auto v = sub(z1, z0);
        auto pred = latent_prediction(z_t, v, t);
        CHECK(max_abs_diff(pred, z0) < 1e-6);
    }
}

TEST_CASE("sample is deterministic given (seed, config)") {
    SeededRng init(12);
    const Shape4 shape{2, 3, 3, 1};
    auto ds = make_dataset({sample_gaussian(shape, init), sample_gaussian(shape, init)});
    OracleField field(ds);

    SeededRng a(77), b(77);
    auto za = sample_gaussian(shape, a);
    auto zb = sample_gaussian(shape, b);
    auto ra = sample(field, za, TimeGrid(20), 1, 6.0);
    auto rb = sample(field, zb, TimeGrid(20), 1, 6.0);
    for (std::size_t i = 0; i < ra.z0.numel(); ++i) REQUIRE(ra.z0[i] == rb.z0[i]);
}

TEST_CASE("trace records, eval accounting and terminal entry") {
    SeededRng rng(13);
    const Shape4 shape{2, 3, 3, 1};
    auto ds = make_dataset({sample_gaussian(shape, rng), sample_gaussian(shape, rng)});
    OracleField field(ds);
    auto z1 = sample_gaussian(shape, rng);
    const int T = 9;
    auto res = sample(field, z1, TimeGrid(T), 0, 6.0, true);
    REQUIRE(res.trace.size() == static_cast<std::size_t>(T) + 1);
    std::uint64_t prev = 0;
    for (std::size_t i = 0; i < res.trace.records.size(); ++i) {
        const auto& rec = res.trace.records[i];
        CHECK(rec.cum_evals >= prev);
        prev = rec.cum_evals;
    }
    CHECK(res.trace.records[T - 1].cum_evals == static_cast<std::uint64_t>(2 * T));
    CHECK(res.trace.records.back().t == 0.0);
    CHECK(max_abs_diff(res.trace.records.back().zhat, res.z0) == 0.0);
}

TEST_CASE("trace montage layout and terminal content") {
    AppearanceClass disk{0, AppearanceClass::Shape::Disk, 3.0, 1.0};
    auto video = render_video(disk, Trajectory::linear(8, 8, 1.0, 1.0, 4), 4, 24, 24);
    Codec codec;
    auto x = codec.encode(video);
    auto ds = make_dataset({x});
    OracleField field(ds);

    SeededRng rng(14);
    auto z1 = sample_gaussian(x.shape(), rng);
    const int T = 6;
    auto res = sample(field, z1, TimeGrid(T), std::nullopt, std::nullopt, true);
    auto montage = visualize_trace(res.trace, codec);

    REQUIRE(montage.per_step.size() == res.trace.size());
    const int F = 4, H = 24, W = 24;
    CHECK(montage.evolution.h == (T + 1) * H + T);
    CHECK(montage.evolution.w == F * W + (F - 1));

    // final montage row equals the decoded terminal frames
    auto final_video = codec.decode(res.z0);
    const Image& last = montage.per_step.back();
    for (int k = 0; k < F; ++k) {
        Image frame = final_video.frame_image(k);
        for (int y = 0; y < H; ++y) {
            for (int x2 = 0; x2 < W; ++x2) {
                REQUIRE(last.at(y, k * (W + 1) + x2) == frame.at(y, x2));
            }
        }
    }
}

TEST_CASE("a one-record trace yields one montage") {
    SeededRng rng(15);
    const Shape4 shape{2, 4, 4, 1};
    DenoiseTrace trace;
    StepRecord rec;
    rec.step = 0;
    rec.t = 1.0;
    rec.z = sample_gaussian(shape, rng);
    rec.v = LatentTensor(shape, 0.0f);
    rec.zhat = rec.z;
    trace.records.push_back(std::move(rec));
    auto montage = visualize_trace(trace, Codec());
    CHECK(montage.per_step.size() == 1);
    CHECK(montage.evolution.h == 4);
    CHECK(montage.evolution.w == 2 * 4 + 1);
}
