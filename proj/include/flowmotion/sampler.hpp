// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flowmotion/io.hpp"
#include "flowmotion/tensor.hpp"
#include "flowmotion/time_grid.hpp"
#include "flowmotion/toy_world.hpp"
#include "flowmotion/velocity_field.hpp"

namespace flowmotion {

/// One-step clean-latent estimate: z_t - t * v.
inline LatentTensor latent_prediction(const LatentTensor& z_t, const LatentTensor& v,
                                      double t) {
    require_same_shape(z_t, v, "latent_prediction");
    if (!(t >= 0.0 && t <= 1.0)) {
        throw std::domain_error("latent_prediction: t outside [0,1]");
    }
    return axpy(z_t, -t, v);
}

/// z_t - v * dt.
inline LatentTensor euler_step(const LatentTensor& z_t, const LatentTensor& v,
                               double dt) {
    require_same_shape(z_t, v, "euler_step");
    if (!(dt > 0.0)) throw std::domain_error("euler_step: dt must be > 0");
    return axpy(z_t, -dt, v);
}

/// Loss bookkeeping for one inner optimization iteration.
struct InnerRecord {
    int inner_step = 0;
    double loss = 0.0;
    double loss_la = 0.0;  // unweighted latent-alignment component
    double loss_da = 0.0;  // unweighted difference-alignment component
    double grad_norm = 0.0;
    std::uint64_t cum_evals = 0;
};

/// Per-denoising-step record: state, velocity, latent prediction, the
/// regulated velocity and loss trajectory when the step was guided, and the
/// cumulative base-field eval count after the step.
struct StepRecord {
    int step = 0;
    double t = 0.0;
    LatentTensor z;
    LatentTensor v;
    LatentTensor zhat;
    std::optional<LatentTensor> v_reg;
    std::vector<InnerRecord> inner;
    std::optional<double> loss_post;  // loss re-evaluated after the inner loop
    std::uint64_t cum_evals = 0;
};

struct DenoiseTrace {
    std::vector<StepRecord> records;

    bool empty() const { return records.empty(); }
    std::size_t size() const { return records.size(); }
};

struct SampleResult {
    LatentTensor z0;
    DenoiseTrace trace;
};

/// Euler integration from t=1 to t=0. The field is never evaluated at t=0
/// (the final update integrates the t=dt velocity down to zero). When
/// tracing, one record per step plus a terminal record holding the arrival
/// state at t=0.
inline SampleResult sample(const VelocityField& field, const LatentTensor& z1,
                           const TimeGrid& grid, const Condition& condition,
                           std::optional<double> cfg_scale = std::nullopt,
                           bool keep_trace = false) {
    TargetEvaluator tev{field, condition, cfg_scale};
    LatentTensor z = z1;
    DenoiseTrace trace;
    const double dt = grid.dt();
    for (int k = 0; k < grid.steps; ++k) {
        const double t = grid.t(k);
        LatentTensor v = tev.velocity(z, t);
        if (keep_trace) {
            StepRecord rec;
            rec.step = k;
            rec.t = t;
            rec.z = z;
            rec.v = v;
            rec.zhat = latent_prediction(z, v, t);
            rec.cum_evals = field.eval_count();
            trace.records.push_back(std::move(rec));
        }
        z = euler_step(z, v, dt);
        if (!z.all_finite()) {
            throw numeric_error("sample: non-finite latent at step " +
                                std::to_string(k), k);
        }
    }
    if (keep_trace) {
        StepRecord rec;
        rec.step = grid.steps;
        rec.t = 0.0;
        rec.z = z;
        rec.v = LatentTensor(z.shape(), 0.0f);
        rec.zhat = z;
        rec.cum_evals = field.eval_count();
        trace.records.push_back(std::move(rec));
    }
    return SampleResult{std::move(z), std::move(trace)};
}

// --------------------------------------------------------------------------
// Trace visualization: decode each record's latent prediction and lay the
// frames out on a grid. Rows are separated by 1-px white lines, as are the
// frames within a row.
// --------------------------------------------------------------------------

inline Image montage_row(const ToyVideo& video) {
    const int sep = 1;
    Image img(video.h, video.f * video.w + (video.f - 1) * sep, 255);
    for (int k = 0; k < video.f; ++k) {
        const int x_off = k * (video.w + sep);
        for (int y = 0; y < video.h; ++y) {
            for (int x = 0; x < video.w; ++x) {
                img.at(y, x_off + x) = quantize01(video.at(k, y, x));
            }
        }
    }
    return img;
}

inline Image stack_rows(const std::vector<Image>& rows) {
    if (rows.empty()) throw std::runtime_error("stack_rows: no rows");
    const int sep = 1;
    const int w = rows.front().w;
    int h = -sep;
    for (const auto& r : rows) h += r.h + sep;
    Image img(h, w, 255);
    int y_off = 0;
    for (const auto& r : rows) {
        for (int y = 0; y < r.h; ++y) {
            for (int x = 0; x < w; ++x) img.at(y_off + y, x) = r.at(y, x);
        }
        y_off += r.h + sep;
    }
    return img;
}

struct TraceMontage {
    std::vector<Image> per_step;  // one frames-row montage per record
    Image evolution;              // all records stacked, first step on top
};

/// Decodes every recorded latent prediction. The evolution montage is
/// (records x frames): (T+1) rows of height H and F columns of width W, with
/// 1-px separators in both directions.
inline TraceMontage visualize_trace(const DenoiseTrace& trace, const Codec& codec) {
    if (trace.empty()) throw std::runtime_error("visualize_trace: empty trace");
    TraceMontage m;
    for (const auto& rec : trace.records) {
        m.per_step.push_back(montage_row(codec.decode(rec.zhat)));
    }
    m.evolution = stack_rows(m.per_step);
    return m;
}

// --------------------------------------------------------------------------
// Trace export: one FMLT per recorded tensor plus a JSON-free index would be
// hostile to other tools, so the index is JSON (written by callers that also
// own the manifest; see pipeline/cli).
// --------------------------------------------------------------------------

struct TraceTensorFiles {
    std::vector<std::string> names;  // relative to the trace directory
};

inline TraceTensorFiles export_trace_tensors(const DenoiseTrace& trace,
                                             const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    TraceTensorFiles files;
    char name[64];
    for (const auto& rec : trace.records) {
        std::snprintf(name, sizeof(name), "step_%04d_z.fmlt", rec.step);
        save_tensor(dir / name, rec.z);
        files.names.push_back(name);
        std::snprintf(name, sizeof(name), "step_%04d_v.fmlt", rec.step);
        save_tensor(dir / name, rec.v);
        files.names.push_back(name);
        std::snprintf(name, sizeof(name), "step_%04d_zhat.fmlt", rec.step);
        save_tensor(dir / name, rec.zhat);
        files.names.push_back(name);
    }
    return files;
}

}  // namespace flowmotion
