// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "flowmotion/regularize.hpp"
#include "flowmotion/rng.hpp"
#include "flowmotion/sampler.hpp"
#include "flowmotion/tensor.hpp"
#include "flowmotion/velocity_field.hpp"

namespace flowmotion {

enum class SourceRep { LatentPrediction, CleanLatent, Velocity, DenoisedLatent };
enum class DiffMode { AllPairs, Adjacent };

inline const char* to_string(SourceRep rep) {
    switch (rep) {
        case SourceRep::LatentPrediction: return "latent-prediction";
        case SourceRep::CleanLatent: return "clean-latent";
        case SourceRep::Velocity: return "velocity";
        case SourceRep::DenoisedLatent: return "denoised-latent";
    }
    return "?";
}

inline const char* to_string(DiffMode mode) {
    return mode == DiffMode::AllPairs ? "all-pairs" : "adjacent";
}

inline SourceRep source_rep_from_string(const std::string& s) {
    if (s == "latent-prediction") return SourceRep::LatentPrediction;
    if (s == "clean-latent") return SourceRep::CleanLatent;
    if (s == "velocity") return SourceRep::Velocity;
    if (s == "denoised-latent") return SourceRep::DenoisedLatent;
    throw std::domain_error("unknown source representation: " + s);
}

inline DiffMode diff_mode_from_string(const std::string& s) {
    if (s == "all-pairs") return DiffMode::AllPairs;
    if (s == "adjacent") return DiffMode::Adjacent;
    throw std::domain_error("unknown diff mode: " + s);
}

/// Everything knob-shaped about the guided inner loop. Defaults are the
/// reference operating point: alpha:beta = 4:1, lr = 0.003, K_opt = 3,
/// T_opt = 10, gamma = 0.1. Both loss terms are SUMS of squares (not means),
/// so alpha:beta keeps its meaning independent of tensor size; the Adam step
/// is scale-free, so lr does too.
struct GuidanceConfig {
    double alpha = 4.0;
    double beta = 1.0;
    double lr = 0.003;
    int k_opt = 3;
    int t_opt = 10;
    SourceRep source_rep = SourceRep::LatentPrediction;
    DiffMode diff_mode = DiffMode::AllPairs;
    double gamma = 0.1;
    double epsilon_norm = 1e-8;
    bool per_frame_reg = false;
    // Exploratory: also differentiate the v_avg dependence of v_reg on z_t
    // instead of detaching it (the default detaches both v_t and v_avg).
    bool vavg_through_grad = false;

    RegularizerConfig regularizer() const {
        return RegularizerConfig{gamma, epsilon_norm, per_frame_reg};
    }

    void validate(int sampler_steps) const {
        if (alpha < 0.0 || beta < 0.0 || (alpha == 0.0 && beta == 0.0)) {
            throw std::domain_error("guidance: need alpha, beta >= 0, not both 0");
        }
        if (k_opt < 1) throw std::domain_error("guidance: K_opt must be >= 1");
        if (t_opt < 0 || t_opt > sampler_steps) {
            throw std::domain_error("guidance: need 0 <= T_opt <= T");
        }
        if (!(lr >= 0.0)) throw std::domain_error("guidance: lr must be >= 0");
        regularizer().validate();
    }
};

// --------------------------------------------------------------------------
// Adam
// --------------------------------------------------------------------------

/// Standard Adam moments, zero-initialized, reset at every guided denoising
/// step. beta1/beta2/eps are the universal defaults.
struct AdamState {
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double eps = 1e-8;

    LatentTensor m;
    LatentTensor v;
    int step = 0;

    explicit AdamState(Shape4 shape) : m(shape, 0.0f), v(shape, 0.0f) {}
};

/// One bias-corrected descending Adam update; returns the new iterate and
/// advances the state.
inline LatentTensor adam_step(const LatentTensor& z, const LatentTensor& grad,
                              AdamState& state, double lr) {
    require_same_shape(z, grad, "adam_step");
    require_same_shape(z, state.m, "adam_step state");
    state.step += 1;
    const double c1 = 1.0 - std::pow(AdamState::beta1, state.step);
    const double c2 = 1.0 - std::pow(AdamState::beta2, state.step);
    LatentTensor out(z.shape());
    for (std::size_t i = 0; i < z.numel(); ++i) {
        const double g = grad[i];
        const double m = AdamState::beta1 * state.m[i] + (1.0 - AdamState::beta1) * g;
        const double v = AdamState::beta2 * state.v[i] + (1.0 - AdamState::beta2) * g * g;
        state.m[i] = static_cast<float>(m);
        state.v[i] = static_cast<float>(v);
        const double m_hat = m / c1;
        const double v_hat = v / c2;
        out[i] = static_cast<float>(z[i] - lr * m_hat / (std::sqrt(v_hat) + AdamState::eps));
    }
    return out;
}

// --------------------------------------------------------------------------
// Source motion representation
// --------------------------------------------------------------------------

/// Inversion-free noising: lerp toward a fresh standard-normal draw.
inline LatentTensor forward_noise(const LatentTensor& z_src0, double t,
                                  SeededRng& rng) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw std::domain_error("forward_noise: t outside [0,1]");
    }
    LatentTensor eps = sample_gaussian(z_src0.shape(), rng);
    return lerp_path(z_src0, eps, t);
}

/// Frame-wise latent differences.
///   AllPairs: slabs (i,j) for every ordered pair i != j, i-major with j
///             ascending and skipping i — F*(F-1) slabs.
///   Adjacent: slabs z[i+1] - z[i] — F-1 slabs.
inline LatentTensor frame_diff(const LatentTensor& z, DiffMode mode) {
    const Shape4& s = z.shape();
    if (s.f < 2) throw shape_error("frame_diff: need F >= 2");
    const std::size_t fn = s.frame_numel();
    if (mode == DiffMode::Adjacent) {
        LatentTensor out(Shape4{s.f - 1, s.h, s.w, s.c});
        for (int i = 0; i + 1 < s.f; ++i) {
            auto a = z.frame(i + 1);
            auto b = z.frame(i);
            auto d = out.frame(i);
            for (std::size_t e = 0; e < fn; ++e) d[e] = a[e] - b[e];
        }
        return out;
    }
    LatentTensor out(Shape4{s.f * (s.f - 1), s.h, s.w, s.c});
    int slot = 0;
    for (int i = 0; i < s.f; ++i) {
        for (int j = 0; j < s.f; ++j) {
            if (j == i) continue;
            auto a = z.frame(i);
            auto b = z.frame(j);
            auto d = out.frame(slot++);
            for (std::size_t e = 0; e < fn; ++e) d[e] = a[e] - b[e];
        }
    }
    return out;
}

/// The guidance target extracted from the source video at one denoising
/// step. `payload` is what the latent-alignment term compares against;
/// `diff` is the precomputed frame-difference tensor (present only when the
/// difference term is active).
struct SourceMotionRep {
    SourceRep mode = SourceRep::LatentPrediction;
    LatentTensor payload;
    std::optional<LatentTensor> diff;
};

/// Builds the source representation for timestep t. All modes except
/// CleanLatent cost exactly one empty-condition field evaluation;
/// CleanLatent costs zero (and draws no noise).
inline SourceMotionRep source_representation(const VelocityField& field,
                                             const LatentTensor& z_src0, double t,
                                             double dt, SourceRep mode,
                                             SeededRng& rng,
                                             DiffMode diff_mode = DiffMode::AllPairs,
                                             bool with_diff = false) {
    if (!(t > 0.0 && t <= 1.0)) {
        throw std::domain_error("source_representation: t outside (0,1]");
    }
    SourceMotionRep rep;
    rep.mode = mode;
    if (mode == SourceRep::CleanLatent) {
        rep.payload = z_src0;
    } else {
        LatentTensor z_src_t = forward_noise(z_src0, t, rng);
        LatentTensor v_src = field.eval(z_src_t, t, std::nullopt);
        switch (mode) {
            case SourceRep::LatentPrediction:
                rep.payload = latent_prediction(z_src_t, v_src, t);
                break;
            case SourceRep::Velocity:
                rep.payload = std::move(v_src);
                break;
            case SourceRep::DenoisedLatent:
                rep.payload = euler_step(z_src_t, v_src, dt);
                break;
            case SourceRep::CleanLatent:
                break;  // unreachable
        }
    }
    if (with_diff && mode != SourceRep::Velocity) {
        rep.diff = frame_diff(rep.payload, diff_mode);
    }
    return rep;
}

// --------------------------------------------------------------------------
// Loss and gradient
// --------------------------------------------------------------------------

struct LossParts {
    double total = 0.0;
    double la = 0.0;  // unweighted ||s_hat - z_hat||^2
    double da = 0.0;  // unweighted ||diff(s_hat) - diff(z_hat)||^2
};

/// alpha * ||s - z||^2 + beta * ||diff(s) - diff(z)||^2, sums of squares.
/// Velocity mode has no difference term (its representation is already a
/// rate of change); da stays 0 there.
inline LossParts guidance_loss(const SourceMotionRep& rep_src,
                               const LatentTensor& rep_tgt, double alpha,
                               double beta, DiffMode mode) {
    require_same_shape(rep_src.payload, rep_tgt, "guidance_loss");
    LossParts parts;
    for (std::size_t i = 0; i < rep_tgt.numel(); ++i) {
        const double e = static_cast<double>(rep_tgt[i]) - rep_src.payload[i];
        parts.la += e * e;
    }
    if (beta > 0.0 && rep_src.mode != SourceRep::Velocity) {
        const LatentTensor& src_diff =
            rep_src.diff.has_value() ? *rep_src.diff : frame_diff(rep_src.payload, mode);
        LatentTensor tgt_diff = frame_diff(rep_tgt, mode);
        require_same_shape(src_diff, tgt_diff, "guidance_loss diff");
        for (std::size_t i = 0; i < tgt_diff.numel(); ++i) {
            const double e = static_cast<double>(tgt_diff[i]) - src_diff[i];
            parts.da += e * e;
        }
    }
    parts.total = alpha * parts.la + beta * parts.da;
    return parts;
}

namespace detail {

/// d(loss)/d(z_hat): 2*alpha*(z_hat - s_hat) plus the difference-term
/// stencil. AllPairs contributes per frame k: 4*beta*sum_{j!=k} d_kj, which
/// collapses to F*(e_k) - sum_j e_j with e = z_hat - s_hat; Adjacent is the
/// two-neighbor stencil.
inline LatentTensor loss_grad_wrt_prediction(const LatentTensor& z_hat,
                                             const SourceMotionRep& rep_src,
                                             double alpha, double beta,
                                             DiffMode mode) {
    const Shape4& s = z_hat.shape();
    LatentTensor e(s);
    for (std::size_t i = 0; i < e.numel(); ++i) {
        e[i] = z_hat[i] - rep_src.payload[i];
    }
    LatentTensor grad = scale(e, 2.0 * alpha);
    if (beta <= 0.0 || rep_src.mode == SourceRep::Velocity) return grad;

    const std::size_t fn = s.frame_numel();
    if (mode == DiffMode::AllPairs) {
        std::vector<double> esum(fn, 0.0);
        for (int f = 0; f < s.f; ++f) {
            auto ef = e.frame(f);
            for (std::size_t i = 0; i < fn; ++i) esum[i] += ef[i];
        }
        for (int f = 0; f < s.f; ++f) {
            auto ef = e.frame(f);
            auto gf = grad.frame(f);
            for (std::size_t i = 0; i < fn; ++i) {
                gf[i] += static_cast<float>(4.0 * beta *
                                            (s.f * static_cast<double>(ef[i]) - esum[i]));
            }
        }
        return grad;
    }
    // Adjacent: d_i = e_{i+1} - e_i; dL/de_k = 2*(d_{k-1} - d_k).
    for (int f = 0; f < s.f; ++f) {
        auto gf = grad.frame(f);
        auto ef = e.frame(f);
        if (f > 0) {
            auto ep = e.frame(f - 1);
            for (std::size_t i = 0; i < fn; ++i) {
                gf[i] += static_cast<float>(2.0 * beta * (ef[i] - ep[i]));
            }
        }
        if (f + 1 < s.f) {
            auto en = e.frame(f + 1);
            for (std::size_t i = 0; i < fn; ++i) {
                gf[i] -= static_cast<float>(2.0 * beta * (en[i] - ef[i]));
            }
        }
    }
    return grad;
}

}  // namespace detail

/// Exact gradient of guidance_loss with respect to z_t under the
/// velocity-as-constant contract: v_reg is a frozen forward-pass output, so
/// d(z_hat)/d(z_t) = I and the gradient never touches the field. Velocity
/// mode routes through guidance_gradient_velocity_mode instead.
inline LatentTensor guidance_gradient(const LatentTensor& z_t, double t,
                                      const LatentTensor& v_reg,
                                      const SourceMotionRep& rep_src, double alpha,
                                      double beta, DiffMode mode) {
    if (rep_src.mode == SourceRep::Velocity) {
        throw capability_error(
            "guidance_gradient: velocity mode needs the field-differentiating path");
    }
    LatentTensor z_hat = latent_prediction(z_t, v_reg, t);
    return detail::loss_grad_wrt_prediction(z_hat, rep_src, alpha, beta, mode);
}

/// Optional correction when v_avg is NOT detached: maps the prediction-space
/// gradient u through d(z_hat)/d(z_t) = I - t*(1-gamma)*d(v_proj)/d(z_t),
/// where v_avg = (z_t - z_1)/(t-1) varies with z_t and v_t stays frozen.
inline LatentTensor vavg_through_gradient(const LatentTensor& u,
                                          const LatentTensor& v_t,
                                          const LatentTensor& v_avg, double t,
                                          double gamma) {
    require_same_shape(u, v_t, "vavg_through_gradient");
    const double denom = squared_norm(v_avg);
    if (denom <= 0.0) return u;
    const double k = inner_product(v_t, v_avg) / denom;
    const double au = inner_product(v_avg, u);
    const double c = 1.0 / (t - 1.0);
    // M^T u = (v_t <v_avg,u> + k*u*denom - 2k v_avg <v_avg,u>) / denom
    LatentTensor mtu(u.shape());
    for (std::size_t i = 0; i < u.numel(); ++i) {
        mtu[i] = static_cast<float>((static_cast<double>(v_t[i]) * au) / denom +
                                    k * u[i] - 2.0 * k * (au / denom) * v_avg[i]);
    }
    // u - t*(1-gamma)*c * M^T u
    return axpy(u, -t * (1.0 - gamma) * c, mtu);
}

/// Velocity-as-representation gradient; the one mode that must differentiate
/// through the field, hence the oracle-only VJP requirement.
/// grad = -2*alpha * J^T (v_src - v(z_t, t, cond)).
inline LatentTensor guidance_gradient_velocity_mode(const OracleField& field,
                                                    const LatentTensor& z_t, double t,
                                                    const LatentTensor& v_src,
                                                    double alpha,
                                                    const Condition& cond,
                                                    const LatentTensor& v_tgt) {
    LatentTensor residual = sub(v_src, v_tgt);
    LatentTensor jtu = field.vjp(z_t, t, cond, residual);
    return scale(jtu, -2.0 * alpha);
}

// --------------------------------------------------------------------------
// Inner optimization loop
// --------------------------------------------------------------------------

struct OptimizeResult {
    LatentTensor z_t;
    std::vector<InnerRecord> records;
};

/// K_opt Adam iterations on z_t against a fixed source representation
/// (Adam moments are fresh per call). Each iteration re-evaluates the
/// target velocity (one conditional eval, two under CFG), regulates it,
/// forms the latent prediction, and descends the guidance loss with the
/// velocity treated as a constant.
///
/// Velocity mode instead matches raw velocities and differentiates through
/// the oracle's VJP; it uses plain conditional evals (no CFG) so the VJP
/// pairs with the velocity it linearizes — `vjp_field` must then be non-null.
inline OptimizeResult optimize_latent(const LatentTensor& z_t_in, double t,
                                      const LatentTensor& z1,
                                      const TargetEvaluator& tev,
                                      const OracleField* vjp_field,
                                      const SourceMotionRep& rep_src,
                                      const GuidanceConfig& config) {
    if (!(t > 0.0 && t <= 1.0)) {
        throw std::domain_error("optimize_latent: t outside (0,1]");
    }
    OptimizeResult result{z_t_in, {}};
    if (config.k_opt <= 0) return result;
    if (rep_src.mode == SourceRep::Velocity && vjp_field == nullptr) {
        throw capability_error("optimize_latent: velocity mode needs a vjp-capable field");
    }

    AdamState adam(z_t_in.shape());
    const RegularizerConfig reg = config.regularizer();
    for (int k = 0; k < config.k_opt; ++k) {
        InnerRecord rec;
        rec.inner_step = k;
        LatentTensor grad;
        if (rep_src.mode == SourceRep::Velocity) {
            LatentTensor v_t = vjp_field->eval(result.z_t, t, tev.condition);
            LossParts parts = guidance_loss(rep_src, v_t, config.alpha, config.beta,
                                            config.diff_mode);
            rec.loss = parts.total;
            rec.loss_la = parts.la;
            grad = guidance_gradient_velocity_mode(*vjp_field, result.z_t, t,
                                                   rep_src.payload, config.alpha,
                                                   tev.condition, v_t);
        } else {
            LatentTensor v_t = tev.velocity(result.z_t, t);
            RegulatedPrediction rp = regulated_prediction(result.z_t, z1, v_t, t, reg);
            LossParts parts = guidance_loss(rep_src, rp.zhat, config.alpha,
                                            config.beta, config.diff_mode);
            rec.loss = parts.total;
            rec.loss_la = parts.la;
            rec.loss_da = parts.da;
            grad = detail::loss_grad_wrt_prediction(rp.zhat, rep_src, config.alpha,
                                                    config.beta, config.diff_mode);
            if (config.vavg_through_grad && !rp.degenerate && t < 1.0) {
                LatentTensor v_avg = average_velocity(result.z_t, z1, t);
                grad = vavg_through_gradient(grad, v_t, v_avg, t, config.gamma);
            }
        }
        rec.grad_norm = norm(grad);
        rec.cum_evals = tev.field.eval_count();
        result.z_t = adam_step(result.z_t, grad, adam, config.lr);
        result.records.push_back(std::move(rec));
    }
    return result;
}

}  // namespace flowmotion
