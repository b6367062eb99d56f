// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "flowmotion/csv.hpp"
#include "flowmotion/guidance.hpp"
#include "flowmotion/metrics.hpp"
#include "flowmotion/rng.hpp"
#include "flowmotion/sampler.hpp"
#include "flowmotion/tensor.hpp"
#include "flowmotion/time_grid.hpp"
#include "flowmotion/toy_world.hpp"
#include "flowmotion/velocity_field.hpp"

namespace flowmotion {

struct SamplerParams {
    int steps = 50;
    std::optional<double> cfg_scale = 6.0;

    int evals_per_call() const { return cfg_scale.has_value() ? 2 : 1; }
};

/// One motion-transfer request: a source video with known motion, a target
/// class, and the full sampler + guidance configuration.
struct TransferJob {
    ToyVideo source;
    std::optional<Trajectory> source_traj;  // ground truth, kept for manifests
    int target_class = 0;
    SamplerParams sampler;
    GuidanceConfig guidance;
    std::uint64_t seed = 0;

    void validate() const {
        guidance.validate(sampler.steps);
        if (source.f < 2) throw std::domain_error("job: source needs F >= 2");
    }
};

struct EvalCounts {
    std::uint64_t target = 0;
    std::uint64_t source = 0;
    std::uint64_t vjp = 0;
};

struct MetricSet {
    std::optional<double> motion_fidelity;
    std::optional<double> diff_similarity;
    double appearance_score = 0.0;
    double temporal_consistency = 0.0;
};

/// Inner-loop log for one guided denoising step. loss_post re-evaluates the
/// guidance loss from the step's final (post-update) velocity — the same
/// evaluation the Euler update needs, so it costs nothing extra.
struct StepGuidance {
    int denoise_step = 0;
    double t = 0.0;
    std::vector<InnerRecord> inner;
    double loss_post = 0.0;
};

struct RunReport {
    ToyVideo video;
    LatentTensor z0;
    DenoiseTrace trace;
    MetricSet metrics;
    EvalCounts counts;
    std::vector<StepGuidance> guidance;
    double wall_ms = 0.0;  // never serialized; runs must replay byte-identically
};

namespace detail {

inline const AppearanceClass& class_by_id(const Dataset& dataset, int id) {
    for (const auto& c : dataset.classes) {
        if (c.id == id) return c;
    }
    throw condition_error("unknown class id " + std::to_string(id));
}

inline EvalCounts expected_counts(const TransferJob& job) {
    const int per_call = job.sampler.evals_per_call();
    const int t_opt = std::min(job.guidance.t_opt, job.sampler.steps);
    EvalCounts c;
    if (job.guidance.source_rep == SourceRep::Velocity) {
        c.target = static_cast<std::uint64_t>(job.sampler.steps) * per_call +
                   static_cast<std::uint64_t>(t_opt) * job.guidance.k_opt;
        c.source = static_cast<std::uint64_t>(t_opt);
        c.vjp = static_cast<std::uint64_t>(t_opt) * job.guidance.k_opt;
    } else {
        c.target = static_cast<std::uint64_t>(job.sampler.steps) * per_call +
                   static_cast<std::uint64_t>(t_opt) * job.guidance.k_opt * per_call;
        c.source = job.guidance.source_rep == SourceRep::CleanLatent
                       ? 0
                       : static_cast<std::uint64_t>(t_opt);
        c.vjp = 0;
    }
    return c;
}

}  // namespace detail

/// Guided sampling end to end: encode the source, start from seeded noise,
/// optimize the latent against the source motion representation for the
/// first T_opt denoising steps, Euler-update every step, decode, score.
///
/// RNG streams: stream 0 draws the initial noise, stream 1 the per-step
/// forward-noising draws, so a T_opt=0 run is bit-identical to the unguided
/// baseline with the same seed.
inline RunReport transfer(const TransferJob& job, const Dataset& dataset,
                          const Codec& codec, bool keep_trace = false) {
    job.validate();
    const auto t_start = std::chrono::steady_clock::now();

    OracleField field(dataset);
    const TimeGrid grid(job.sampler.steps);
    const double dt = grid.dt();
    const GuidanceConfig& g = job.guidance;
    const int t_opt = std::min(g.t_opt, grid.steps);

    LatentTensor z_src0 = codec.encode(job.source);
    require_same_shape(z_src0, dataset.items.front().latent, "transfer source");

    SeededRng rng_init(job.seed, 0);
    SeededRng rng_guid(job.seed, 1);
    LatentTensor z = sample_gaussian(z_src0.shape(), rng_init);
    const LatentTensor z1 = z;

    TargetEvaluator tev{field, job.target_class, job.sampler.cfg_scale};
    RunReport report;
    std::uint64_t source_evals = 0;

    for (int k = 0; k < grid.steps; ++k) {
        const double t = grid.t(k);
        std::optional<SourceMotionRep> rep;
        if (k < t_opt) {
            const std::uint64_t before = field.eval_count();
            rep = source_representation(field, z_src0, t, dt, g.source_rep, rng_guid,
                                        g.diff_mode, g.beta > 0.0);
            source_evals += field.eval_count() - before;

            OptimizeResult opt = optimize_latent(z, t, z1, tev, &field, *rep, g);
            z = std::move(opt.z_t);
            report.guidance.push_back(StepGuidance{k, t, std::move(opt.records), 0.0});
        }

        LatentTensor v = tev.velocity(z, t);

        if (rep.has_value()) {
            // Post-update loss from the velocity the Euler update reuses.
            StepGuidance& sg = report.guidance.back();
            if (rep->mode == SourceRep::Velocity) {
                sg.loss_post = guidance_loss(*rep, v, g.alpha, g.beta, g.diff_mode).total;
            } else {
                RegulatedPrediction rp =
                    regulated_prediction(z, z1, v, t, g.regularizer());
                sg.loss_post =
                    guidance_loss(*rep, rp.zhat, g.alpha, g.beta, g.diff_mode).total;
            }
        }

        if (keep_trace) {
            StepRecord rec;
            rec.step = k;
            rec.t = t;
            rec.z = z;
            rec.v = v;
            rec.zhat = latent_prediction(z, v, t);
            if (rep.has_value() && rep->mode != SourceRep::Velocity) {
                rec.v_reg = regulated_prediction(z, z1, v, t, g.regularizer()).v_reg;
            }
            if (!report.guidance.empty() && report.guidance.back().denoise_step == k) {
                rec.inner = report.guidance.back().inner;
                rec.loss_post = report.guidance.back().loss_post;
            }
            rec.cum_evals = field.eval_count();
            report.trace.records.push_back(std::move(rec));
        }

        z = euler_step(z, v, dt);
        if (!z.all_finite()) {
            throw numeric_error("transfer: non-finite latent at denoising step " +
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
        report.trace.records.push_back(std::move(rec));
    }

    report.counts.target = field.eval_count() - source_evals;
    report.counts.source = source_evals;
    report.counts.vjp = field.vjp_count();
    const EvalCounts want = detail::expected_counts(job);
    if (report.counts.target != want.target || report.counts.source != want.source ||
        report.counts.vjp != want.vjp) {
        throw std::logic_error("transfer: eval accounting mismatch");
    }

    report.z0 = std::move(z);
    report.video = codec.decode(report.z0);
    report.metrics.temporal_consistency = temporal_consistency(report.video);
    report.metrics.appearance_score = appearance_score(
        report.video, detail::class_by_id(dataset, job.target_class));
    report.metrics.diff_similarity = diff_field_similarity(job.source, report.video);
    report.metrics.motion_fidelity =
        motion_fidelity(centroid_track(job.source), centroid_track(report.video));

    report.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t_start)
                         .count();
    return report;
}

/// Unguided control arm: the same path as transfer with T_opt = 0 (and
/// therefore bit-identical to it for equal seeds). Source-dependent metrics
/// are filled only when a reference video is supplied.
inline RunReport generate_baseline(int condition, const SamplerParams& sampler,
                                   std::uint64_t seed, const Dataset& dataset,
                                   const Codec& codec,
                                   const ToyVideo* reference = nullptr,
                                   bool keep_trace = false) {
    const auto t_start = std::chrono::steady_clock::now();
    OracleField field(dataset);
    const TimeGrid grid(sampler.steps);
    SeededRng rng_init(seed, 0);
    LatentTensor z1 = sample_gaussian(dataset.latent_shape(), rng_init);
    SampleResult res = sample(field, z1, grid, condition, sampler.cfg_scale, keep_trace);

    RunReport report;
    report.trace = std::move(res.trace);
    report.z0 = std::move(res.z0);
    report.counts.target = field.eval_count();
    report.video = codec.decode(report.z0);
    report.metrics.temporal_consistency = temporal_consistency(report.video);
    report.metrics.appearance_score =
        appearance_score(report.video, detail::class_by_id(dataset, condition));
    if (reference != nullptr) {
        report.metrics.diff_similarity = diff_field_similarity(*reference, report.video);
        report.metrics.motion_fidelity =
            motion_fidelity(centroid_track(*reference), centroid_track(report.video));
    }
    report.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t_start)
                         .count();
    return report;
}

// --------------------------------------------------------------------------
// Ablation sweeps
// --------------------------------------------------------------------------

struct AblationCell {
    std::string config_id;
    GuidanceConfig guidance;
};

struct AblationJob {
    std::string job_id;
    ToyVideo source;
    int target_class = 0;
};

struct AblationRow {
    std::string config_id;
    std::string job_id;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    MetricSet metrics;
    EvalCounts counts;
};

struct AblationResult {
    std::vector<AblationRow> rows;

    /// mean and stddev per (config, metric) over successful rows
    CsvWriter to_csv() const {
        CsvWriter csv({"row_kind", "config_id", "job_id", "seed", "status",
                       "motion_fidelity", "diff_similarity", "appearance_score",
                       "temporal_consistency", "target_evals", "source_evals"});
        for (const auto& r : rows) {
            csv.add_row({"run", r.config_id, r.job_id, std::to_string(r.seed),
                         r.ok ? "ok" : "failed:" + r.error,
                         r.metrics.motion_fidelity ? CsvWriter::num(*r.metrics.motion_fidelity) : "",
                         r.metrics.diff_similarity ? CsvWriter::num(*r.metrics.diff_similarity) : "",
                         r.ok ? CsvWriter::num(r.metrics.appearance_score) : "",
                         r.ok ? CsvWriter::num(r.metrics.temporal_consistency) : "",
                         std::to_string(r.counts.target), std::to_string(r.counts.source)});
        }
        // aggregates, in first-appearance config order
        std::vector<std::string> seen;
        for (const auto& r : rows) {
            if (std::find(seen.begin(), seen.end(), r.config_id) != seen.end()) continue;
            seen.push_back(r.config_id);
            double n = 0;
            double sum[4] = {0, 0, 0, 0}, sq[4] = {0, 0, 0, 0};
            for (const auto& q : rows) {
                if (q.config_id != r.config_id || !q.ok) continue;
                double vals[4] = {q.metrics.motion_fidelity.value_or(0.0),
                                  q.metrics.diff_similarity.value_or(0.0),
                                  q.metrics.appearance_score,
                                  q.metrics.temporal_consistency};
                for (int i = 0; i < 4; ++i) {
                    sum[i] += vals[i];
                    sq[i] += vals[i] * vals[i];
                }
                n += 1;
            }
            if (n == 0) continue;
            auto mean_std = [&](int i) {
                double m = sum[i] / n;
                double var = std::max(0.0, sq[i] / n - m * m);
                return CsvWriter::num(m) + "±" + CsvWriter::num(std::sqrt(var));
            };
            csv.add_row({"aggregate", r.config_id, "", "", "n=" + CsvWriter::num(n),
                         mean_std(0), mean_std(1), mean_std(2), mean_std(3), "", ""});
        }
        return csv;
    }
};

/// Runs (config x job x seed) transfers. Rows are independent; they fan out
/// over a small worker pool and land in a pre-sized vector, so the output
/// order is deterministic regardless of scheduling. Failures are recorded
/// and the sweep continues.
inline AblationResult ablate(const std::vector<AblationCell>& grid,
                             const std::vector<AblationJob>& jobs,
                             const std::vector<std::uint64_t>& seeds,
                             const Dataset& dataset, const Codec& codec,
                             const SamplerParams& sampler,
                             unsigned workers = std::thread::hardware_concurrency()) {
    if (grid.empty()) throw std::domain_error("ablate: empty config grid");
    if (jobs.empty()) throw std::domain_error("ablate: no jobs");
    if (seeds.empty()) throw std::domain_error("ablate: no seeds");

    struct Task {
        const AblationCell* cell;
        const AblationJob* job;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (const auto& cell : grid)
        for (const auto& job : jobs)
            for (auto seed : seeds) tasks.push_back({&cell, &job, seed});

    AblationResult result;
    result.rows.resize(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const Task& task = tasks[i];
            AblationRow row;
            row.config_id = task.cell->config_id;
            row.job_id = task.job->job_id;
            row.seed = task.seed;
            try {
                TransferJob tj;
                tj.source = task.job->source;
                tj.target_class = task.job->target_class;
                tj.sampler = sampler;
                tj.guidance = task.cell->guidance;
                tj.seed = task.seed;
                RunReport rep = transfer(tj, dataset, codec);
                row.ok = true;
                row.metrics = rep.metrics;
                row.counts = rep.counts;
            } catch (const std::exception& e) {
                row.ok = false;
                row.error = e.what();
            }
            result.rows[i] = std::move(row);
        }
    };
    const unsigned n_workers = std::max(1u, std::min<unsigned>(workers, 8));
    std::vector<std::thread> pool;
    for (unsigned i = 0; i + 1 < n_workers; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    return result;
}

// --------------------------------------------------------------------------
// Small stats helper for trend checks
// --------------------------------------------------------------------------

/// One-sided sign test: P(Binomial(n, 1/2) >= wins). Ties must already be
/// excluded from n.
inline double sign_test_p(int wins, int n) {
    if (n <= 0) return 1.0;
    double p = 0.0;
    for (int k = wins; k <= n; ++k) {
        double log_c = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                       std::lgamma(n - k + 1.0);
        p += std::exp(log_c - n * std::log(2.0));
    }
    return std::min(1.0, p);
}

}  // namespace flowmotion
