// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "flowmotion/tensor.hpp"
#include "flowmotion/toy_world.hpp"

namespace flowmotion {

/// Class label, or empty for the unconditional branch.
using Condition = std::optional<int>;

struct condition_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct capability_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// v(z_t, t, condition). Evaluation is the ONLY channel the interface
/// exposes — there is deliberately no gradient through it, which is what
/// lets guidance treat velocities as constants. eval_count tallies
/// invocations (atomically; eval itself is reentrant).
class VelocityField {
public:
    VelocityField() = default;
    VelocityField(const VelocityField& other) : eval_count_(other.eval_count()) {}
    VelocityField& operator=(const VelocityField& other) {
        eval_count_.store(other.eval_count(), std::memory_order_relaxed);
        return *this;
    }
    virtual ~VelocityField() = default;

    LatentTensor eval(const LatentTensor& z_t, double t, const Condition& cond) const {
        eval_count_.fetch_add(1, std::memory_order_relaxed);
        return do_eval(z_t, t, cond);
    }

    std::uint64_t eval_count() const {
        return eval_count_.load(std::memory_order_relaxed);
    }

protected:
    virtual LatentTensor do_eval(const LatentTensor& z_t, double t,
                                 const Condition& cond) const = 0;

private:
    mutable std::atomic<std::uint64_t> eval_count_{0};
};

/// Exact minimizer of the flow-matching objective for an empirical dataset
/// with a uniform prior over items: a softmax-weighted mixture velocity.
/// Conditioning is hard subset selection by class label (empty = all items).
///
/// For t below t_min the softmax sharpens into a singularity; we fall back to
/// the nearest-item conditional velocity with the time clamped to t_min.
class OracleField final : public VelocityField {
public:
    explicit OracleField(const Dataset& dataset, double t_min = 1e-3)
        : dataset_(dataset), t_min_(t_min) {
        if (dataset.items.empty()) throw condition_error("oracle: empty dataset");
        if (!(t_min > 0.0)) throw std::domain_error("oracle: t_min must be > 0");
        for (std::size_t i = 0; i < dataset.items.size(); ++i) {
            by_label_[dataset.items[i].label].push_back(i);
            all_.push_back(i);
        }
    }

    double t_min() const { return t_min_; }
    const Dataset& dataset() const { return dataset_; }

    std::uint64_t vjp_count() const {
        return vjp_count_.load(std::memory_order_relaxed);
    }

    /// Posterior weights over the conditioned subset at (z_t, t), via
    /// log-sum-exp; also returns the subset indices.
    void weights(const LatentTensor& z_t, double t, const Condition& cond,
                 std::vector<double>& w, const std::vector<std::size_t>*& subset) const {
        subset = &select(cond);
        const double omt = 1.0 - t;
        const double inv2t2 = 1.0 / (2.0 * t * t);
        w.resize(subset->size());
        double a_max = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < subset->size(); ++i) {
            const LatentTensor& x = dataset_.items[(*subset)[i]].latent;
            double d2 = 0.0;
            const auto vz = z_t.values();
            const auto vx = x.values();
            for (std::size_t e = 0; e < vz.size(); ++e) {
                double diff = static_cast<double>(vz[e]) - omt * vx[e];
                d2 += diff * diff;
            }
            w[i] = -d2 * inv2t2;
            a_max = std::max(a_max, w[i]);
        }
        double denom = 0.0;
        for (double& a : w) {
            a = std::exp(a - a_max);
            denom += a;
        }
        for (double& a : w) a /= denom;
    }

    /// Vector-Jacobian product u -> (d oracle_velocity / d z_t)^T u, computed
    /// analytically from the softmax weights. Needed only by the
    /// velocity-as-motion-representation guidance mode.
    LatentTensor vjp(const LatentTensor& z_t, double t, const Condition& cond,
                     const LatentTensor& u) const {
        vjp_count_.fetch_add(1, std::memory_order_relaxed);
        require_same_shape(z_t, u, "oracle vjp");
        if (t < t_min_) throw std::domain_error("oracle vjp: t below t_min");
        std::vector<double> w;
        const std::vector<std::size_t>* subset = nullptr;
        weights(z_t, t, cond, w, subset);

        const std::size_t n = z_t.numel();
        const double omt = 1.0 - t;
        const double inv_t2 = 1.0 / (t * t);
        // grad a_i = -(z - (1-t) x_i) / t^2;  s_i = <x_i, u>
        // J^T u = (u - sum_i s_i grad w_i) / t with
        // grad w_i = w_i (grad a_i - sum_j w_j grad a_j).
        std::vector<double> s(w.size());
        double ws_sum = 0.0;  // sum_i w_i s_i
        for (std::size_t i = 0; i < w.size(); ++i) {
            const auto vx = dataset_.items[(*subset)[i]].latent.values();
            double si = 0.0;
            for (std::size_t e = 0; e < n; ++e) {
                si += static_cast<double>(vx[e]) * u[e];
            }
            s[i] = si;
            ws_sum += w[i] * si;
        }
        // accum = sum_i w_i (s_i - ws_sum) grad a_i
        std::vector<double> accum(n, 0.0);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double coef = w[i] * (s[i] - ws_sum);
            if (coef == 0.0) continue;
            const auto vx = dataset_.items[(*subset)[i]].latent.values();
            for (std::size_t e = 0; e < n; ++e) {
                double grad_a = -(static_cast<double>(z_t[e]) - omt * vx[e]) * inv_t2;
                accum[e] += coef * grad_a;
            }
        }
        LatentTensor out(z_t.shape());
        for (std::size_t e = 0; e < n; ++e) {
            out[e] = static_cast<float>((static_cast<double>(u[e]) - accum[e]) / t);
        }
        return out;
    }

protected:
    LatentTensor do_eval(const LatentTensor& z_t, double t,
                         const Condition& cond) const override {
        if (!(t > 0.0 && t <= 1.0)) {
            throw std::domain_error("oracle: t must be in (0,1]");
        }
        const std::vector<std::size_t>& subset = select(cond);
        if (!dataset_.items.empty()) {
            require_same_shape(z_t, dataset_.items.front().latent, "oracle eval");
        }

        if (t < t_min_) {
            // Guarded extrapolation: nearest-item conditional velocity.
            std::size_t best = subset.front();
            double best_a = -std::numeric_limits<double>::infinity();
            const double omt = 1.0 - t;
            for (std::size_t idx : subset) {
                const auto vx = dataset_.items[idx].latent.values();
                double d2 = 0.0;
                for (std::size_t e = 0; e < z_t.numel(); ++e) {
                    double diff = static_cast<double>(z_t[e]) - omt * vx[e];
                    d2 += diff * diff;
                }
                if (-d2 > best_a) {
                    best_a = -d2;
                    best = idx;
                }
            }
            const auto vx = dataset_.items[best].latent.values();
            LatentTensor out(z_t.shape());
            const double inv_t = 1.0 / std::max(t, t_min_);
            for (std::size_t e = 0; e < z_t.numel(); ++e) {
                out[e] = static_cast<float>((z_t[e] - vx[e]) * inv_t);
            }
            return out;
        }

        std::vector<double> w;
        const std::vector<std::size_t>* sel = nullptr;
        weights(z_t, t, cond, w, sel);

        // v = (z - sum_i w_i x_i) / t, accumulated in double.
        std::vector<double> mean(z_t.numel(), 0.0);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const auto vx = dataset_.items[(*sel)[i]].latent.values();
            const double wi = w[i];
            for (std::size_t e = 0; e < mean.size(); ++e) {
                mean[e] += wi * vx[e];
            }
        }
        LatentTensor out(z_t.shape());
        const double inv_t = 1.0 / t;
        for (std::size_t e = 0; e < mean.size(); ++e) {
            out[e] = static_cast<float>((static_cast<double>(z_t[e]) - mean[e]) * inv_t);
        }
        return out;
    }

private:
    const std::vector<std::size_t>& select(const Condition& cond) const {
        if (!cond.has_value()) return all_;
        auto it = by_label_.find(*cond);
        if (it == by_label_.end() || it->second.empty()) {
            throw condition_error("oracle: no items with label " +
                                  std::to_string(*cond));
        }
        return it->second;
    }

    const Dataset& dataset_;
    double t_min_;
    std::map<int, std::vector<std::size_t>> by_label_;
    std::vector<std::size_t> all_;
    mutable std::atomic<std::uint64_t> vjp_count_{0};
};

/// v_empty + s * (v_cond - v_empty); two base-field evaluations per call.
inline LatentTensor cfg_velocity(const VelocityField& field, const LatentTensor& z_t,
                                 double t, const Condition& cond, double scale) {
    if (scale < 0.0) throw std::domain_error("cfg: scale must be >= 0");
    LatentTensor v_empty = field.eval(z_t, t, std::nullopt);
    LatentTensor v_cond = field.eval(z_t, t, cond);
    LatentTensor out(z_t.shape());
    const float s = static_cast<float>(scale);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] = v_empty[i] + s * (v_cond[i] - v_empty[i]);
    }
    return out;
}

/// VelocityField wrapper fixing a condition and guidance scale.
class CfgField final : public VelocityField {
public:
    CfgField(const VelocityField& base, double scale, Condition cond)
        : base_(base), scale_(scale), cond_(std::move(cond)) {
        if (scale < 0.0) throw std::domain_error("cfg: scale must be >= 0");
    }

protected:
    LatentTensor do_eval(const LatentTensor& z_t, double t,
                         const Condition&) const override {
        return cfg_velocity(base_, z_t, t, cond_, scale_);
    }

private:
    const VelocityField& base_;
    double scale_;
    Condition cond_;
};

/// How the guided pipeline evaluates the target branch: plain conditional
/// eval, or CFG-combined when a scale is set.
struct TargetEvaluator {
    const VelocityField& field;
    Condition condition;
    std::optional<double> cfg_scale;

    LatentTensor velocity(const LatentTensor& z_t, double t) const {
        if (cfg_scale.has_value()) {
            return cfg_velocity(field, z_t, t, condition, *cfg_scale);
        }
        return field.eval(z_t, t, condition);
    }

    /// Base-field evaluations a single velocity() call performs.
    int evals_per_call() const { return cfg_scale.has_value() ? 2 : 1; }
};

}  // namespace flowmotion
