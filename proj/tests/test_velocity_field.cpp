// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

#include "flowmotion/mlp_field.hpp"
#include "flowmotion/rng.hpp"
#include "flowmotion/toy_world.hpp"
#include "flowmotion/velocity_field.hpp"

using namespace flowmotion;

namespace {

Dataset scalar_dataset(const std::vector<float>& values,
                       const std::vector<int>& labels) {
    Dataset ds;
    for (std::size_t i = 0; i < values.size(); ++i) {
        DatasetItem item;
        item.latent = LatentTensor(Shape4{1, 1, 1, 1}, {values[i]});
        item.label = labels.empty() ? 0 : labels[i];
        ds.items.push_back(std::move(item));
    }
    ds.classes.push_back(AppearanceClass{0, AppearanceClass::Shape::Disk, 1.0, 1.0});
    ds.classes.push_back(AppearanceClass{1, AppearanceClass::Shape::Square, 1.0, 1.0});
    return ds;
}

Dataset tensor_dataset(Shape4 shape, int n, SeededRng& rng) {
    Dataset ds;
    for (int i = 0; i < n; ++i) {
        DatasetItem item;
        item.latent = sample_gaussian(shape, rng);
        item.label = i % 2;
        ds.items.push_back(std::move(item));
    }
    ds.classes.push_back(AppearanceClass{0, AppearanceClass::Shape::Disk, 1.0, 1.0});
    ds.classes.push_back(AppearanceClass{1, AppearanceClass::Shape::Square, 1.0, 1.0});
    return ds;
}

// Independent double-precision mixture velocity (naive softmax). This is the
// reference the float implementation is checked against.
std::vector<double> oracle_ref(const Dataset& ds, const std::vector<double>& z,
                               double t, const Condition& cond,
                               std::vector<double>* weights_out = nullptr) {
    std::vector<std::size_t> subset;
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
        if (!cond.has_value() || ds.items[i].label == *cond) subset.push_back(i);
    }
    std::vector<double> a(subset.size());
    double a_max = -1e300;
    for (std::size_t i = 0; i < subset.size(); ++i) {
        const auto x = ds.items[subset[i]].latent.values();
        double d2 = 0;
        for (std::size_t e = 0; e < z.size(); ++e) {
            const double diff = z[e] - (1.0 - t) * x[e];
            d2 += diff * diff;
        }
        a[i] = -d2 / (2.0 * t * t);
        a_max = std::max(a_max, a[i]);
    }
    double denom = 0;
    for (double& v : a) {
        v = std::exp(v - a_max);
        denom += v;
    }
    for (double& v : a) v /= denom;
    if (weights_out) *weights_out = a;
    std::vector<double> out(z.size(), 0.0);
    for (std::size_t i = 0; i < subset.size(); ++i) {
        const auto x = ds.items[subset[i]].latent.values();
        for (std::size_t e = 0; e < z.size(); ++e) {
            out[e] += a[i] * (z[e] - x[e]) / t;
        }
    }
    return out;
}

std::vector<double> to_doubles(const LatentTensor& t) {
    return std::vector<double>(t.values().begin(), t.values().end());
}

}  // namespace

TEST_CASE("single-item oracle is the conditional straight-line velocity") {
    auto ds = scalar_dataset({1.5f}, {0});
    OracleField field(ds);
    SeededRng rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        const double z = rng.normal() * 2.0;
        const double t = 0.01 + 0.99 * rng.uniform();
        LatentTensor zt(Shape4{1, 1, 1, 1}, {static_cast<float>(z)});
        auto v = field.eval(zt, t, std::nullopt);
        CHECK(v[0] == Catch::Approx((z - 1.5) / t).margin(1e-5));
    }
}

TEST_CASE("symmetric two-item oracle vanishes at the midpoint") {
    auto ds = scalar_dataset({-1.0f, 1.0f}, {0, 0});
    OracleField field(ds);
    LatentTensor zt(Shape4{1, 1, 1, 1}, {0.0f});
    auto v = field.eval(zt, 0.7, std::nullopt);
    CHECK(std::abs(v[0]) < 1e-7);
}

TEST_CASE("golden number: items {0,2}, z=0.4, t=0.5") {
    auto ds = scalar_dataset({0.0f, 2.0f}, {0, 0});
    OracleField field(ds);
    LatentTensor zt(Shape4{1, 1, 1, 1}, {0.4f});
    auto v = field.eval(zt, 0.5, std::nullopt);
    // Brute-force softmax over a = (-0.32, -0.72):
    // w = (0.598687660, 0.401312340), v = w0*0.8 + w1*(-3.2)
    CHECK(v[0] == Catch::Approx(-0.805249360).margin(1e-6));

    // cross-check against the in-test double oracle
    auto ref = oracle_ref(ds, {0.4}, 0.5, std::nullopt);
    CHECK(v[0] == Catch::Approx(ref[0]).margin(1e-6));
}

TEST_CASE("oracle matches the double reference on random instances") {
    SeededRng rng(17);
    auto ds = tensor_dataset(Shape4{2, 3, 3, 1}, 6, rng);
    OracleField field(ds);
    for (int rep = 0; rep < 25; ++rep) {
        auto z = sample_gaussian(Shape4{2, 3, 3, 1}, rng);
        const double t = 0.05 + 0.95 * rng.uniform();
        Condition cond;
        if (rep % 3 == 1) cond = 0;
        if (rep % 3 == 2) cond = 1;
        auto v = field.eval(z, t, cond);
        auto ref = oracle_ref(ds, to_doubles(z), t, cond);
        double num = 0, den = 0;
        for (std::size_t e = 0; e < ref.size(); ++e) {
            num += (v[e] - ref[e]) * (v[e] - ref[e]);
            den += ref[e] * ref[e];
        }
        CHECK(std::sqrt(num) <= 1e-5 * std::max(1.0, std::sqrt(den)));
    }
}

TEST_CASE("latent-prediction consistency: z - t*v equals the weighted mean") {
    SeededRng rng(23);
    auto ds = tensor_dataset(Shape4{1, 4, 4, 1}, 5, rng);
    OracleField field(ds);
    for (int rep = 0; rep < 25; ++rep) {
        auto z = sample_gaussian(Shape4{1, 4, 4, 1}, rng);
        const double t = 0.05 + 0.9 * rng.uniform();
        auto v = field.eval(z, t, std::nullopt);
        std::vector<double> w;
        oracle_ref(ds, to_doubles(z), t, std::nullopt, &w);
        for (std::size_t e = 0; e < z.numel(); ++e) {
            double mean = 0;
            for (std::size_t i = 0; i < ds.items.size(); ++i) {
                mean += w[i] * ds.items[i].latent[e];
            }
            const double zhat = z[e] - t * v[e];
            CHECK(zhat == Catch::Approx(mean).margin(2e-5));
        }
    }
}

TEST_CASE("softmax survives ||z|| up to 1e3 without overflow") {
    Dataset ds;
    DatasetItem a, b;
    a.latent = LatentTensor(Shape4{1, 10, 10, 1}, 0.0f);
    a.label = 0;
    b.latent = LatentTensor(Shape4{1, 10, 10, 1}, 1.0f);
    b.label = 0;
    ds.items.push_back(std::move(a));
    ds.items.push_back(std::move(b));
    ds.classes.push_back(AppearanceClass{0, AppearanceClass::Shape::Disk, 1.0, 1.0});
    OracleField field(ds);

    LatentTensor z(Shape4{1, 10, 10, 1}, 100.0f);  // ||z|| = 1000
    std::vector<double> w;
    const std::vector<std::size_t>* subset = nullptr;
    field.weights(z, 0.05, std::nullopt, w, subset);
    double sum = 0;
    for (double wi : w) {
        REQUIRE(std::isfinite(wi));
        sum += wi;
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-6));
    auto v = field.eval(z, 0.05, std::nullopt);
    CHECK(v.all_finite());
}

TEST_CASE("t below t_min extrapolates with the nearest item") {
    auto ds = scalar_dataset({0.0f, 2.0f}, {0, 0});
    OracleField field(ds);  // t_min = 1e-3
    LatentTensor zt(Shape4{1, 1, 1, 1}, {1.9f});
    auto v = field.eval(zt, 1e-4, std::nullopt);
    // nearest item is 2.0; velocity clamped to t_min
    CHECK(v[0] == Catch::Approx((1.9 - 2.0) / 1e-3).margin(1e-4));
}

TEST_CASE("conditioning selects label subsets; unknown labels throw") {
    auto ds = scalar_dataset({-1.0f, 1.0f}, {0, 1});
    OracleField field(ds);
    LatentTensor zt(Shape4{1, 1, 1, 1}, {0.0f});
    auto v0 = field.eval(zt, 0.5, 0);
    auto v1 = field.eval(zt, 0.5, 1);
    CHECK(v0[0] == Catch::Approx((0.0 + 1.0) / 0.5));
    CHECK(v1[0] == Catch::Approx((0.0 - 1.0) / 0.5));
    CHECK_THROWS_AS(field.eval(zt, 0.5, 7), condition_error);
    CHECK_THROWS_AS(field.eval(zt, 0.0, std::nullopt), std::domain_error);
}

TEST_CASE("eval_count increments once per eval, twice per cfg call") {
    auto ds = scalar_dataset({-1.0f, 1.0f}, {0, 1});
    OracleField field(ds);
    LatentTensor zt(Shape4{1, 1, 1, 1}, {0.3f});
    CHECK(field.eval_count() == 0);
    (void)field.eval(zt, 0.5, std::nullopt);
    CHECK(field.eval_count() == 1);
    (void)cfg_velocity(field, zt, 0.5, 0, 6.0);
    CHECK(field.eval_count() == 3);

    CfgField cfg(field, 6.0, 0);
    (void)cfg.eval(zt, 0.5, std::nullopt);
    CHECK(cfg.eval_count() == 1);
    CHECK(field.eval_count() == 5);
}

TEST_CASE("cfg arithmetic") {
    auto ds = scalar_dataset({0.0f, 1.0f}, {0, 1});
    OracleField field(ds);
    LatentTensor zt(Shape4{1, 1, 1, 1}, {0.5f});
    const double t = 0.5;

    auto v_cond = field.eval(zt, t, 1);
    auto v_empty = field.eval(zt, t, std::nullopt);
    auto s1 = cfg_velocity(field, zt, t, 1, 1.0);
    CHECK(s1[0] == Catch::Approx(v_cond[0]).margin(1e-6));
    auto s0 = cfg_velocity(field, zt, t, 1, 0.0);
    CHECK(s0[0] == Catch::Approx(v_empty[0]).margin(1e-6));
    auto s6 = cfg_velocity(field, zt, t, 1, 6.0);
    CHECK(s6[0] ==
          Catch::Approx(v_empty[0] + 6.0 * (v_cond[0] - v_empty[0])).margin(1e-5));
    CHECK_THROWS_AS(cfg_velocity(field, zt, t, 1, -0.5), std::domain_error);

    // scalar sanity: v_empty = 0, v_cond = 1 at scale 6 gives 6
    CHECK(0.0 + 6.0 * (1.0 - 0.0) == 6.0);
}

TEST_CASE("eval preserves shape and leaves the input untouched") {
    SeededRng rng(31);
    auto ds = tensor_dataset(Shape4{2, 4, 4, 1}, 4, rng);
    OracleField field(ds);
    auto z = sample_gaussian(Shape4{2, 4, 4, 1}, rng);
    auto z_copy = z;
    auto v = field.eval(z, 0.37, std::nullopt);
    CHECK(v.shape() == z.shape());
    for (std::size_t i = 0; i < z.numel(); ++i) REQUIRE(z[i] == z_copy[i]);
}

// ---------------------------------------------------------------------------
// VJP
// ---------------------------------------------------------------------------

TEST_CASE("vjp: single-item subset gives u/t; u = 0 gives 0") {
    auto ds = scalar_dataset({1.0f}, {0});
    OracleField field(ds);
    LatentTensor z(Shape4{1, 1, 1, 1}, {0.2f});
    LatentTensor u(Shape4{1, 1, 1, 1}, {0.8f});
    auto out = field.vjp(z, 0.4, std::nullopt, u);
    CHECK(out[0] == Catch::Approx(0.8 / 0.4).margin(1e-6));

    LatentTensor zero(Shape4{1, 1, 1, 1}, {0.0f});
    auto out0 = field.vjp(z, 0.4, std::nullopt, zero);
    CHECK(out0[0] == 0.0f);
}

TEST_CASE("vjp matches finite differences of the double oracle") {
    SeededRng rng(57);
    const Shape4 shape{1, 3, 3, 1};
    auto ds = tensor_dataset(shape, 4, rng);
    OracleField field(ds);
    const double h = 1e-5;
    for (int rep = 0; rep < 12; ++rep) {
        auto z = sample_gaussian(shape, rng);
        auto u = sample_gaussian(shape, rng);
        const double t = 0.15 + 0.8 * rng.uniform();
        auto analytic = field.vjp(z, t, std::nullopt, u);

        auto zd = to_doubles(z);
        auto ud = to_doubles(u);
        double num = 0, den = 0;
        for (std::size_t k = 0; k < zd.size(); ++k) {
            auto zp = zd, zm = zd;
            zp[k] += h;
            zm[k] -= h;
            auto vp = oracle_ref(ds, zp, t, std::nullopt);
            auto vm = oracle_ref(ds, zm, t, std::nullopt);
            double dir = 0;
            for (std::size_t e = 0; e < ud.size(); ++e) {
                dir += (vp[e] - vm[e]) * ud[e];
            }
            const double fd = dir / (2 * h);
            num += (analytic[k] - fd) * (analytic[k] - fd);
            den += fd * fd;
        }
        const double rel = std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
        INFO("rep " << rep << " rel err " << rel);
        CHECK(rel <= 1e-4);
    }
    CHECK(field.vjp_count() == 12);
}

// ---------------------------------------------------------------------------
// Trainable field
// ---------------------------------------------------------------------------

TEST_CASE("fm_train_step with lr 0 leaves the field unchanged") {
    SeededRng rng(71);
    const Shape4 shape{1, 2, 2, 1};
    auto ds = tensor_dataset(shape, 1, rng);
    MlpField field(shape, ds.labels(), 16, 5);
    auto probe = sample_gaussian(shape, rng);
    auto before = field.eval(probe, 0.6, std::nullopt);
    SeededRng train_rng(8);
    (void)fm_train_step(field, ds, train_rng, 0.0);
    auto after = field.eval(probe, 0.6, std::nullopt);
    for (std::size_t i = 0; i < before.numel(); ++i) REQUIRE(before[i] == after[i]);
}

TEST_CASE("fm training loss decreases on a one-item dataset") {
    SeededRng rng(72);
    const Shape4 shape{1, 2, 2, 1};
    auto ds = tensor_dataset(shape, 1, rng);
    MlpField field(shape, ds.labels(), 32, 9);
    SeededRng train_rng(10);
    const int n = 500;
    double first = 0, second = 0;
    for (int i = 0; i < n; ++i) first += fm_train_step(field, ds, train_rng, 2e-3);
    for (int i = 0; i < n; ++i) second += fm_train_step(field, ds, train_rng, 2e-3);
    INFO("mean loss " << first / n << " -> " << second / n);
    CHECK(second < first);
}

TEST_CASE("mlp serialization round-trips the evaluation exactly") {
    SeededRng rng(73);
    const Shape4 shape{1, 2, 2, 1};
    auto ds = tensor_dataset(shape, 2, rng);
    MlpField field(shape, ds.labels(), 16, 21);
    SeededRng train_rng(11);
    for (int i = 0; i < 50; ++i) (void)fm_train_step(field, ds, train_rng, 1e-3);

    auto dir = std::filesystem::temp_directory_path() / "fm_mlp_io";
    std::filesystem::remove_all(dir);
    save_mlp(field, dir);
    auto loaded = load_mlp(dir);
    CHECK(loaded.parameter_count() == field.parameter_count());

    auto probe = sample_gaussian(shape, rng);
    auto a = field.eval(probe, 0.4, 0);
    auto b = loaded.eval(probe, 0.4, 0);
    for (std::size_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
}
