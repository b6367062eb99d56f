// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <optional>

#include "flowmotion/sampler.hpp"
#include "flowmotion/tensor.hpp"

namespace flowmotion {

struct RegularizerConfig {
    double gamma = 0.1;           // orthogonal-component decay in [0,1]
    double epsilon_norm = 1e-8;   // degenerate-||v_avg|| threshold (per entry)
    bool per_frame = false;       // exploratory frame-wise projection

    void validate() const {
        if (!(gamma >= 0.0 && gamma <= 1.0)) {
            throw std::domain_error("regularizer: gamma outside [0,1]");
        }
        if (!(epsilon_norm > 0.0)) {
            throw std::domain_error("regularizer: epsilon_norm must be > 0");
        }
    }
};

/// Overall flow direction accumulated so far: (z_t - z_1) / (t - 1).
/// t = 1 is the genuinely degenerate 0/0 case; callers must fall back to
/// v_reg = v_t there (regulated_prediction does).
inline LatentTensor average_velocity(const LatentTensor& z_t, const LatentTensor& z1,
                                     double t) {
    require_same_shape(z_t, z1, "average_velocity");
    if (!(t < 1.0)) {
        throw std::domain_error("average_velocity: undefined at t >= 1");
    }
    LatentTensor out(z_t.shape());
    const double inv = 1.0 / (t - 1.0);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] = static_cast<float>((static_cast<double>(z_t[i]) - z1[i]) * inv);
    }
    return out;
}

struct ProjOrth {
    LatentTensor proj;
    LatentTensor orth;
};

/// Splits v_t into its component along v_avg and the orthogonal remainder,
/// with ONE scalar projection coefficient over the fully flattened tensor.
/// Returns nullopt when ||v_avg||^2 falls below epsilon_norm * numel
/// (degenerate direction; regularization is skipped).
inline std::optional<ProjOrth> decompose(const LatentTensor& v_t,
                                         const LatentTensor& v_avg,
                                         double epsilon_norm = 1e-8) {
    require_same_shape(v_t, v_avg, "decompose");
    const double denom = squared_norm(v_avg);
    if (denom < epsilon_norm * static_cast<double>(v_avg.numel())) {
        return std::nullopt;
    }
    const double coef = inner_product(v_t, v_avg) / denom;
    ProjOrth out{scale(v_avg, coef), LatentTensor(v_t.shape())};
    for (std::size_t i = 0; i < v_t.numel(); ++i) {
        out.orth[i] = v_t[i] - out.proj[i];
    }
    return out;
}

/// Frame-wise variant: one projection coefficient per frame slab.
inline std::optional<ProjOrth> decompose_per_frame(const LatentTensor& v_t,
                                                   const LatentTensor& v_avg,
                                                   double epsilon_norm = 1e-8) {
    require_same_shape(v_t, v_avg, "decompose_per_frame");
    const auto& s = v_t.shape();
    ProjOrth out{LatentTensor(s), LatentTensor(s)};
    for (int f = 0; f < s.f; ++f) {
        auto vt = v_t.frame(f);
        auto va = v_avg.frame(f);
        double denom = 0.0, dot = 0.0;
        for (std::size_t i = 0; i < va.size(); ++i) {
            denom += static_cast<double>(va[i]) * va[i];
            dot += static_cast<double>(vt[i]) * va[i];
        }
        if (denom < epsilon_norm * static_cast<double>(va.size())) {
            return std::nullopt;
        }
        const double coef = dot / denom;
        auto pf = out.proj.frame(f);
        auto of = out.orth.frame(f);
        for (std::size_t i = 0; i < va.size(); ++i) {
            pf[i] = static_cast<float>(coef * va[i]);
            of[i] = vt[i] - pf[i];
        }
    }
    return out;
}

/// v_proj + gamma * v_orth.
inline LatentTensor regulate(const LatentTensor& v_proj, const LatentTensor& v_orth,
                             double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        throw std::domain_error("regulate: gamma outside [0,1]");
    }
    return axpy(v_proj, gamma, v_orth);
}

struct RegulatedPrediction {
    LatentTensor zhat;
    LatentTensor v_reg;
    bool degenerate = false;  // fell back to v_reg = v_t
};

/// Composition of average velocity, decomposition, orthogonal decay and
/// latent prediction. At t = 1 (no accumulated direction yet) or when v_avg
/// is degenerate, v_reg = v_t.
inline RegulatedPrediction regulated_prediction(const LatentTensor& z_t,
                                                const LatentTensor& z1,
                                                const LatentTensor& v_t, double t,
                                                const RegularizerConfig& config) {
    config.validate();
    if (!(t > 0.0 && t <= 1.0)) {
        throw std::domain_error("regulated_prediction: t outside (0,1]");
    }
    if (t >= 1.0) {
        return {latent_prediction(z_t, v_t, t), v_t, true};
    }
    LatentTensor v_avg = average_velocity(z_t, z1, t);
    auto parts = config.per_frame
                     ? decompose_per_frame(v_t, v_avg, config.epsilon_norm)
                     : decompose(v_t, v_avg, config.epsilon_norm);
    if (!parts.has_value()) {
        return {latent_prediction(z_t, v_t, t), v_t, true};
    }
    LatentTensor v_reg = regulate(parts->proj, parts->orth, config.gamma);
    return {latent_prediction(z_t, v_reg, t), std::move(v_reg), false};
}

}  // namespace flowmotion
