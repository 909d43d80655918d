#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "meanode/fit.hpp"
#include "meanode/limit.hpp"
#include "meanode/resnet.hpp"

namespace meanode {

// ---------------------------------------------------------------------------
// Point measurements
// ---------------------------------------------------------------------------

struct ForwardError {
    std::vector<double> per_input;  // rms distance of outputs, one per input
    double mean_rms = 0.0;          // averaged over inputs
    double max_layer = 0.0;         // max over the finite net's depth grid
};

// Distance between a finite run and the reference at iteration k, measured on
// the given inputs by replaying both snapshots.
inline ForwardError measure_forward_error(const TrainResult& run, const ReferenceModel& ref,
                                          int k, const std::vector<State>& inputs) {
    const NetParams& fin = run.at(k);
    const NetParams& big = ref.run.at(k);
    if (fin.d != big.d) throw std::invalid_argument("measure_forward_error: dimension mismatch");
    ForwardError fe;
    std::vector<double> layer_mean(static_cast<std::size_t>(fin.layers) + 1, 0.0);
    for (const State& x : inputs) {
        auto hf = forward_pass(fin, x, run.cfg.alpha);
        auto hr = forward_pass(big, x, ref.run.cfg.alpha);
        fe.per_input.push_back(rms_distance(hf.output(), hr.output()));
        for (int l = 0; l <= fin.layers; ++l) {
            int gi = ref.grid_index(static_cast<double>(l) / fin.layers);
            layer_mean[static_cast<std::size_t>(l)] += rms_distance(hf.h[l], hr.h[gi]);
        }
    }
    for (double v : fe.per_input) fe.mean_rms += v;
    fe.mean_rms /= static_cast<double>(inputs.size());
    for (double v : layer_mean) fe.max_layer = std::max(fe.max_layer, v / inputs.size());
    return fe;
}

struct ParamError {
    double max_l2 = 0.0;  // max over units of the euclidean parameter distance
    double rms = 0.0;     // pooled over all coordinates
};

// Coupled comparison of a finite run's parameters against its tracer set.
// The coupling (shared initialization seed) is a precondition, not a warning.
inline ParamError measure_param_error(const TrainResult& run, const TracerSet& tracers, int k) {
    if (run.cfg.seed != tracers.coupled_seed)
        throw std::invalid_argument("measure_param_error: uncoupled seeds");
    if (tracers.k != k)
        throw std::invalid_argument("measure_param_error: tracer iteration does not match k");
    const NetParams& fin = run.at(k);
    if (fin.layers != tracers.layers || fin.units != tracers.units || fin.p != tracers.p)
        throw std::invalid_argument("measure_param_error: shape mismatch");
    ParamError pe;
    double ss = 0.0;
    for (int l = 0; l < fin.layers; ++l)
        for (int j = 0; j < fin.units; ++j) {
            double s = 0.0;
            const double* a = fin.unit(l, j);
            const double* b = tracers.unit(l, j);
            for (int q = 0; q < fin.p; ++q) {
                double e = a[q] - b[q];
                s += e * e;
            }
            ss += s;
            pe.max_l2 = std::max(pe.max_l2, std::sqrt(s));
        }
    pe.rms = std::sqrt(ss / static_cast<double>(fin.w.size()));
    return pe;
}

// Entrywise std of the recorded outputs across repetitions (>= 2), averaged
// over entries and inputs. outputs[r][i] is repetition r's output on input i.
inline double measure_fluctuation(const std::vector<std::vector<State>>& outputs) {
    const std::size_t reps = outputs.size();
    if (reps < 2) throw std::invalid_argument("measure_fluctuation: need at least 2 repetitions");
    const std::size_t n = outputs[0].size();
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t entries = outputs[0][i].size();
        for (std::size_t e = 0; e < entries; ++e) {
            double mean = 0.0;
            for (std::size_t r = 0; r < reps; ++r) mean += outputs[r][i].a[e];
            mean /= static_cast<double>(reps);
            double var = 0.0;
            for (std::size_t r = 0; r < reps; ++r) {
                double dlt = outputs[r][i].a[e] - mean;
                var += dlt * dlt;
            }
            acc += std::sqrt(var / static_cast<double>(reps - 1));
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

// RMS displacement of the input-side weights between iterations 0 and k.
inline double measure_laziness(const TrainResult& run, int k) {
    if (run.cfg.block.family != BlockFamily::two_layer_perceptron)
        throw std::invalid_argument("measure_laziness: requires a 2lp run");
    const NetParams& w0 = run.at(0);
    const NetParams& wk = run.at(k);
    const int d = w0.d;
    double ss = 0.0;
    std::size_t count = 0;
    for (int l = 0; l < w0.layers; ++l)
        for (int j = 0; j < w0.units; ++j) {
            const double* a = wk.unit(l, j);
            const double* b = w0.unit(l, j);
            for (int q = 0; q < d; ++q) {  // u slots only
                double e = a[q] - b[q];
                ss += e * e;
                ++count;
            }
        }
    return std::sqrt(ss / static_cast<double>(count));
}

// Sup over layers of the RMS parameter distance between two runs sharing the
// input-weight initialization (same seed and sigma_u; run b is the sigma_v=0
// counterpart or any coupled variant).
inline double measure_semicomplete_gap(const TrainResult& a, const TrainResult& b, int k) {
    const NetParams& za = a.at(k);
    const NetParams& zb = b.at(k);
    if (za.layers != zb.layers || za.units != zb.units || za.p != zb.p)
        throw std::invalid_argument("measure_semicomplete_gap: shape mismatch");
    if (a.cfg.seed != b.cfg.seed || a.cfg.scales.sigma_u != b.cfg.scales.sigma_u)
        throw std::invalid_argument("measure_semicomplete_gap: runs do not share u-initialization");
    double worst = 0.0;
    for (int l = 0; l < za.layers; ++l) {
        double ss = 0.0;
        for (int j = 0; j < za.units; ++j) {
            const double* pa = za.unit(l, j);
            const double* pb = zb.unit(l, j);
            for (int q = 0; q < za.p; ++q) {
                double e = pa[q] - pb[q];
                ss += e * e;
            }
        }
        worst = std::max(worst, std::sqrt(ss / (static_cast<double>(za.units) * za.p)));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

enum class SweepAxis { depth, width, dim, alpha, sigma_v };

inline std::string to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::depth: return "l";
        case SweepAxis::width: return "m";
        case SweepAxis::dim: return "d";
        case SweepAxis::alpha: return "alpha";
        case SweepAxis::sigma_v: return "sigma_v";
    }
    return "?";
}

inline SweepAxis sweep_axis_from_string(const std::string& s) {
    if (s == "l") return SweepAxis::depth;
    if (s == "m") return SweepAxis::width;
    if (s == "d") return SweepAxis::dim;
    if (s == "alpha") return SweepAxis::alpha;
    if (s == "sigma_v") return SweepAxis::sigma_v;
    throw std::invalid_argument("unknown sweep axis: " + s);
}

struct SweepSpec {
    SweepAxis axis = SweepAxis::depth;
    std::vector<double> grid;
    TrainConfig base;
    int n = 10;
    std::uint64_t data_seed = 1009;
    int repetitions = 1;
    int eval_k = 0;

    bool with_reference = true;
    int ref_layers = 1000, ref_units = 1000;
    std::uint64_t ref_seed = 424243;

    bool with_laziness = false;
    bool with_fluctuation = false;
    bool record_runtime = true;  // wall clock is metadata; off for bit-exact output

    void validate() const {
        if (grid.empty()) throw ConfigError("grid", "must be non-empty");
        for (std::size_t i = 1; i < grid.size(); ++i)
            if (!(grid[i] > grid[i - 1])) throw ConfigError("grid", "must be strictly increasing");
        if (repetitions < 1) throw ConfigError("repetitions", "must be >= 1");
        if (eval_k < 0 || eval_k > base.steps)
            throw ConfigError("eval_k", "must lie in [0, steps]");
        if (with_fluctuation && repetitions < 2)
            throw ConfigError("repetitions", "fluctuation statistics need at least 2 repetitions");
    }
};

// One sweep point x repetition outcome; a diverged run is a first-class
// record, kept in the CSV and excluded from fits.
struct ExperimentRecord {
    std::string axis;
    double value = 0.0;
    int repetition = 0;
    int k = 0;
    double error_rms = std::numeric_limits<double>::quiet_NaN();
    double error_max_layer = std::numeric_limits<double>::quiet_NaN();
    double fluct_std = std::numeric_limits<double>::quiet_NaN();
    double laziness = std::numeric_limits<double>::quiet_NaN();
    bool diverged = false;
    std::uint64_t seed = 0;
    double runtime_s = 0.0;
    // run shape context for fitting (not part of the CSV schema)
    RatePoint shape;
};

struct SweepResult {
    std::vector<ExperimentRecord> records;
    std::optional<RateFit> fit;
    // the surrogates built for the sweep, one slot per grid point (shared
    // when grid points use the same dataset), for post-hoc inspection
    std::vector<std::shared_ptr<ReferenceModel>> references;
};

// Materializes the run config for one grid value. The alpha axis is the
// regime multiplier: it rescales the output-layer init to alpha*sqrt(D) and
// applies the balanced learning rates (eta_u = eta0*D*min(1, 1/alpha^2),
// eta_v = eta0*D) while the explicit forward multiplier stays at base.alpha.
inline TrainConfig sweep_point_config(const SweepSpec& spec, double value) {
    TrainConfig cfg = spec.base;
    switch (spec.axis) {
        case SweepAxis::depth:
            cfg.layers = static_cast<int>(value);
            break;
        case SweepAxis::width:
            cfg.units = static_cast<int>(value);
            break;
        case SweepAxis::dim: {
            double r = value / spec.base.d;
            cfg.d = static_cast<int>(value);
            cfg.scales.sigma_u = spec.base.scales.sigma_u * std::sqrt(r);
            cfg.scales.sigma_v = spec.base.scales.sigma_v * std::sqrt(r);
            cfg.eta_u = spec.base.eta_u * r;
            cfg.eta_v = spec.base.eta_v * r;
            break;
        }
        case SweepAxis::alpha: {
            double eta0 = spec.base.eta_v / spec.base.d;
            cfg.scales.sigma_v = value * std::sqrt(static_cast<double>(spec.base.d));
            cfg.eta_u = eta0 * spec.base.d * std::min(1.0, 1.0 / (value * value));
            cfg.eta_v = eta0 * spec.base.d;
            break;
        }
        case SweepAxis::sigma_v:
            cfg.scales.sigma_v = value;
            break;
    }
    return cfg;
}

inline RatePoint sweep_point_shape(const SweepSpec& spec, const TrainConfig& cfg, double value) {
    RatePoint pt;
    pt.l = cfg.layers;
    pt.m = cfg.units;
    pt.d = cfg.d;
    pt.alpha = spec.axis == SweepAxis::alpha ? value : cfg.alpha;
    return pt;
}

inline std::uint64_t repetition_seed(const SweepSpec& spec, int rep) {
    return SeedPath(spec.base.seed).child(SeedTag::repetition, static_cast<std::uint64_t>(rep)).key();
}

// Runs grid x repetitions as independent jobs on a small worker pool,
// deterministic for a fixed spec regardless of the worker count. The
// reference is built once per dataset dimension and shared read-only.
inline SweepResult run_sweep(const SweepSpec& spec, int workers = 1, int inner_threads = 1) {
    spec.validate();
    const std::size_t npoints = spec.grid.size();
    const std::size_t nreps = static_cast<std::size_t>(spec.repetitions);

    // datasets and references, one per distinct dimension
    std::vector<Dataset> datasets(npoints);
    std::vector<std::shared_ptr<ReferenceModel>> refs(npoints);
    int max_lm = 0;
    for (std::size_t gi = 0; gi < npoints; ++gi) {
        TrainConfig cfg = sweep_point_config(spec, spec.grid[gi]);
        max_lm = std::max(max_lm, cfg.layers * cfg.units);
    }
    for (std::size_t gi = 0; gi < npoints; ++gi) {
        TrainConfig cfg = sweep_point_config(spec, spec.grid[gi]);
        if (gi > 0 && cfg.d == datasets[gi - 1].d) {
            datasets[gi] = datasets[gi - 1];
            refs[gi] = refs[gi - 1];
            continue;
        }
        datasets[gi] = make_dataset(cfg.d, cfg.tokens, spec.n, spec.data_seed);
        if (spec.with_reference) {
            TrainConfig rb = cfg;
            rb.steps = spec.base.steps;
            refs[gi] = std::make_shared<ReferenceModel>(
                build_reference(rb, datasets[gi], spec.ref_layers, spec.ref_units, spec.ref_seed,
                                {spec.eval_k}, max_lm, workers * inner_threads));
        }
    }

    struct JobOut {
        ExperimentRecord rec;
        std::vector<State> outputs;  // outputs at eval_k, for fluctuation stats
    };
    std::vector<JobOut> jobs(npoints * nreps);

    parallel_for(static_cast<std::int64_t>(jobs.size()), workers, [&](std::int64_t lo,
                                                                      std::int64_t hi) {
        for (std::int64_t jid = lo; jid < hi; ++jid) {
            const std::size_t gi = static_cast<std::size_t>(jid) / nreps;
            const int rep = static_cast<int>(static_cast<std::size_t>(jid) % nreps);
            TrainConfig cfg = sweep_point_config(spec, spec.grid[gi]);
            cfg.seed = repetition_seed(spec, rep);
            cfg.snapshots = {0, spec.eval_k};
            cfg.steps = spec.base.steps;

            JobOut out;
            out.rec.axis = to_string(spec.axis);
            out.rec.value = spec.grid[gi];
            out.rec.repetition = rep;
            out.rec.k = spec.eval_k;
            out.rec.seed = cfg.seed;
            out.rec.shape = sweep_point_shape(spec, cfg, spec.grid[gi]);

            auto t0 = std::chrono::steady_clock::now();
            try {
                TrainResult run = train(cfg, datasets[gi], inner_threads);
                if (spec.with_reference) {
                    auto fe = measure_forward_error(run, *refs[gi], spec.eval_k, datasets[gi].x);
                    out.rec.error_rms = fe.mean_rms;
                    out.rec.error_max_layer = fe.max_layer;
                }
                if (spec.with_laziness)
                    out.rec.laziness = measure_laziness(run, spec.eval_k);
                if (spec.with_fluctuation) {
                    const NetParams& net = run.at(spec.eval_k);
                    for (const State& x : datasets[gi].x)
                        out.outputs.push_back(forward_pass(net, x, cfg.alpha).output());
                }
            } catch (const DivergenceError&) {
                out.rec.diverged = true;
            }
            if (spec.record_runtime)
                out.rec.runtime_s =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            jobs[static_cast<std::size_t>(jid)] = std::move(out);
        }
    });

    // fluctuation statistics pool the repetitions of one grid point; the
    // group value is repeated on each of its rows
    if (spec.with_fluctuation) {
        for (std::size_t gi = 0; gi < npoints; ++gi) {
            std::vector<std::vector<State>> outs;
            bool ok = true;
            for (std::size_t r = 0; r < nreps; ++r) {
                const JobOut& jo = jobs[gi * nreps + r];
                if (jo.rec.diverged) {
                    ok = false;
                    break;
                }
                outs.push_back(jo.outputs);
            }
            if (!ok) continue;
            double f = measure_fluctuation(outs);
            for (std::size_t r = 0; r < nreps; ++r) jobs[gi * nreps + r].rec.fluct_std = f;
        }
    }

    SweepResult result;
    result.references = refs;
    for (auto& jo : jobs) result.records.push_back(std::move(jo.rec));

    // axis-appropriate default fit over non-diverged records
    std::vector<RatePoint> pts;
    RateModel model = RateModel::depth_width;
    bool do_fit = false;
    if (spec.axis == SweepAxis::depth || spec.axis == SweepAxis::width) {
        model = RateModel::depth_width;
        do_fit = spec.with_reference;
        for (const auto& r : result.records)
            if (!r.diverged && std::isfinite(r.error_rms)) {
                RatePoint pt = r.shape;
                pt.value = r.error_rms;
                pts.push_back(pt);
            }
    } else if (spec.axis == SweepAxis::alpha && spec.with_fluctuation) {
        model = RateModel::fluctuation;
        do_fit = true;
        for (std::size_t gi = 0; gi < npoints; ++gi) {
            const auto& r = result.records[gi * nreps];
            if (!r.diverged && std::isfinite(r.fluct_std)) {
                RatePoint pt = r.shape;
                pt.value = r.fluct_std;
                pts.push_back(pt);
            }
        }
    } else if (spec.axis == SweepAxis::alpha && spec.with_laziness) {
        model = RateModel::laziness;
        do_fit = true;
        for (const auto& r : result.records)
            if (!r.diverged && std::isfinite(r.laziness)) {
                RatePoint pt = r.shape;
                pt.value = r.laziness;
                pts.push_back(pt);
            }
    }
    if (do_fit && pts.size() >= rate_features(model, pts.empty() ? RatePoint{} : pts[0]).size() + 1)
        result.fit = fit_rate(pts, model);
    return result;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline const char* records_csv_header() {
    return "axis,value,repetition,k,error_rms,error_max_layer,fluct_std,laziness,diverged,seed,"
           "runtime_s";
}

inline std::string record_to_csv_row(const ExperimentRecord& r) {
    auto opt = [](double v) { return std::isfinite(v) ? format_double(v) : std::string(); };
    std::string row;
    row += r.axis;
    row += ',' + format_double(r.value);
    row += ',' + std::to_string(r.repetition);
    row += ',' + std::to_string(r.k);
    row += ',' + opt(r.error_rms);
    row += ',' + opt(r.error_max_layer);
    row += ',' + opt(r.fluct_std);
    row += ',' + opt(r.laziness);
    row += ',' + std::string(r.diverged ? "1" : "0");
    row += ',' + std::to_string(r.seed);
    row += ',' + format_double(r.runtime_s);
    return row;
}

inline void write_records_csv(const std::string& path,
                              const std::vector<ExperimentRecord>& records) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << records_csv_header() << "\n";
    for (const auto& r : records) f << record_to_csv_row(r) << "\n";
    if (!f) throw IoError("write failed: " + path);
}

inline void write_fit_sidecar(const std::string& path, const std::vector<RateFit>& fits) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& fit : fits) {
        nlohmann::json jf;
        jf["model"] = to_string(fit.model);
        jf["coefficients"] = fit.coef;
        jf["residual_norm"] = fit.residual_norm;
        jf["r2"] = fit.r2;
        j.push_back(jf);
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << j.dump(2) << "\n";
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace meanode
