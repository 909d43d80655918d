#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "meanode/config.hpp"
#include "meanode/experiments.hpp"
#include "meanode/limit.hpp"
#include "meanode/snapshot.hpp"
#include "meanode/svg.hpp"

namespace meanode {

struct RunManifest {
    std::string command;
    std::string config_path;
    std::string out_dir = ".";
    int workers = 1;
    bool fast = false;
    std::optional<std::uint64_t> seed_override;
    std::string figure;  // for the figure command
};

// Exit codes shared by every subcommand.
enum ExitCode : int { exit_ok = 0, exit_config = 1, exit_divergence = 2, exit_io = 3 };

namespace cli_detail {

inline json load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config file: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("(root)", std::string("invalid JSON: ") + e.what());
    }
    return j;
}

inline void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory: " + dir);
}

inline std::string joined(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

inline void write_loss_csv(const std::string& path, const std::vector<double>& loss) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "k,loss\n";
    for (std::size_t k = 0; k < loss.size(); ++k) f << k << "," << format_double(loss[k]) << "\n";
    if (!f) throw IoError("write failed: " + path);
}

inline void write_text(const std::string& path, const std::string& body) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << body;
    if (!f) throw IoError("write failed: " + path);
}

inline RunSpec load_run_spec(const RunManifest& mf, const std::set<std::string>& extra = {}) {
    json j = load_config_file(mf.config_path);
    RunSpec spec = run_spec_from_json(j, extra);
    if (mf.seed_override) {
        spec.train.seed = *mf.seed_override;
        spec.train.validate();
    }
    return spec;
}

// Run-shape defaults for the figure protocols; an optional config file
// overrides the base fields (d, n, steps, seed, scales, LRs).
inline RunSpec figure_base(const RunManifest& mf) {
    if (!mf.config_path.empty()) return load_run_spec(mf);
    RunSpec spec;
    spec.train.block = BlockKind::two_layer_perceptron(Activation::tanh);
    spec.train.d = 10;
    spec.train.layers = 100;
    spec.train.units = 1;
    spec.train.alpha = 1.0;
    spec.train.steps = 100;
    spec.train.eta_u = spec.train.eta_v = 10.0;
    spec.train.scales = {std::sqrt(10.0), std::sqrt(10.0)};
    spec.train.seed = 1;
    spec.n = 10;
    if (mf.seed_override) spec.train.seed = *mf.seed_override;
    return spec;
}

inline int reference_side(const RunManifest& mf) { return mf.fast ? 300 : 1000; }

}  // namespace cli_detail

// train: one run; snapshot files, sidecar and the loss log land in out_dir.
inline int cmd_train(const RunManifest& mf) {
    RunSpec spec = cli_detail::load_run_spec(mf);
    cli_detail::ensure_out_dir(mf.out_dir);
    Dataset ds = spec.dataset();
    TrainResult res = train(spec.train, ds, mf.workers);
    cli_detail::write_loss_csv(cli_detail::joined(mf.out_dir, "train_loss.csv"), res.loss_log);
    for (const auto& [k, net] : res.snapshots)
        write_snapshot(cli_detail::joined(mf.out_dir, "snapshot_k" + std::to_string(k) + ".bin"),
                       net, k);
    write_sidecar(cli_detail::joined(mf.out_dir, "train_config.json"), spec.train, false);
    std::cout << "train: " << spec.train.steps << " steps, final loss "
              << format_double(res.loss_log.back()) << "\n";
    return exit_ok;
}

// reference: like train but at surrogate size (config l/m are ignored in
// favor of ref_l/ref_m, defaulting to 1000 or 300 with --fast).
inline int cmd_reference(const RunManifest& mf) {
    json j = cli_detail::load_config_file(mf.config_path);
    RunSpec spec = run_spec_from_json(j, {"ref_l", "ref_m", "ref_seed"});
    if (mf.seed_override) spec.train.seed = *mf.seed_override;
    int side = cli_detail::reference_side(mf);
    TrainConfig cfg = spec.train;
    cfg.layers = detail::get_int_or(j, "ref_l", side);
    cfg.units = detail::get_int_or(j, "ref_m", side);
    if (j.contains("ref_seed")) cfg.seed = detail::get_u64(j, "ref_seed");
    cfg.validate();
    cli_detail::ensure_out_dir(mf.out_dir);
    Dataset ds = make_dataset(cfg.d, cfg.tokens, spec.n, spec.data_seed);
    TrainResult res = train(cfg, ds, mf.workers);
    cli_detail::write_loss_csv(cli_detail::joined(mf.out_dir, "reference_loss.csv"), res.loss_log);
    for (const auto& [k, net] : res.snapshots)
        write_snapshot(cli_detail::joined(mf.out_dir, "reference_k" + std::to_string(k) + ".bin"),
                       net, k);
    write_sidecar(cli_detail::joined(mf.out_dir, "reference_config.json"), cfg, true);
    std::cout << "reference: L=" << cfg.layers << " M=" << cfg.units << ", final loss "
              << format_double(res.loss_log.back()) << "\n";
    return exit_ok;
}

namespace cli_detail {

inline SweepSpec sweep_spec_from_json(const json& j, const RunManifest& mf) {
    RunSpec rs = run_spec_from_json(
        j, {"axis", "grid", "repetitions", "eval_k", "ref_l", "ref_m", "ref_seed", "measure"});
    if (mf.seed_override) rs.train.seed = *mf.seed_override;
    SweepSpec spec;
    spec.base = rs.train;
    spec.n = rs.n;
    spec.data_seed = rs.data_seed;
    if (!j.contains("axis")) throw ConfigError("axis", "missing required key");
    try {
        spec.axis = sweep_axis_from_string(j.at("axis").get<std::string>());
    } catch (const std::invalid_argument& e) {
        throw ConfigError("axis", e.what());
    }
    if (!j.contains("grid") || !j.at("grid").is_array())
        throw ConfigError("grid", "missing required array");
    for (const auto& v : j.at("grid")) {
        if (!v.is_number()) throw ConfigError("grid", "expected numbers");
        spec.grid.push_back(v.get<double>());
    }
    spec.repetitions = detail::get_int_or(j, "repetitions", 1);
    spec.eval_k = detail::get_int_or(j, "eval_k", spec.base.steps);
    int side = reference_side(mf);
    spec.ref_layers = detail::get_int_or(j, "ref_l", side);
    spec.ref_units = detail::get_int_or(j, "ref_m", side);
    if (j.contains("ref_seed")) spec.ref_seed = detail::get_u64(j, "ref_seed");
    std::string measure = detail::get_string_or(j, "measure", "error");
    if (measure == "error") {
        spec.with_reference = true;
    } else if (measure == "laziness") {
        spec.with_reference = false;
        spec.with_laziness = true;
    } else if (measure == "fluctuation") {
        spec.with_reference = false;
        spec.with_fluctuation = true;
    } else {
        throw ConfigError("measure", "expected error, laziness or fluctuation");
    }
    spec.validate();
    return spec;
}

inline void emit_sweep_outputs(const std::string& out_dir, const std::string& stem,
                               const SweepSpec& spec, const SweepResult& res,
                               const std::string& ylab) {
    write_records_csv(joined(out_dir, stem + ".csv"), res.records);
    if (res.fit) write_fit_sidecar(joined(out_dir, stem + ".fit.json"), {*res.fit});

    // plotted numbers: per-grid-point means plus the fitted curve
    const std::size_t nreps = static_cast<std::size_t>(spec.repetitions);
    Series mean_series;
    mean_series.label = "measured";
    mean_series.markers = true;
    for (std::size_t gi = 0; gi < spec.grid.size(); ++gi) {
        double acc = 0.0;
        int cnt = 0;
        for (std::size_t r = 0; r < nreps; ++r) {
            const auto& rec = res.records[gi * nreps + r];
            double v = spec.with_laziness ? rec.laziness
                       : spec.with_fluctuation ? rec.fluct_std
                                               : rec.error_rms;
            if (!rec.diverged && std::isfinite(v)) {
                acc += v;
                ++cnt;
            }
        }
        if (cnt > 0) {
            mean_series.x.push_back(spec.grid[gi]);
            mean_series.y.push_back(acc / cnt);
        }
    }
    LinePlot plot;
    plot.title = stem;
    plot.xlabel = to_string(spec.axis);
    plot.ylabel = ylab;
    plot.logx = true;
    plot.logy = true;
    plot.add(mean_series);
    if (res.fit) {
        Series fitted;
        fitted.label = "fit";
        for (std::size_t gi = 0; gi < spec.grid.size(); ++gi) {
            TrainConfig cfg = sweep_point_config(spec, spec.grid[gi]);
            RatePoint pt = sweep_point_shape(spec, cfg, spec.grid[gi]);
            fitted.x.push_back(spec.grid[gi]);
            fitted.y.push_back(rate_eval(*res.fit, pt));
        }
        plot.add(fitted);
    }
    std::ofstream pcsv(joined(out_dir, stem + "_plot.csv"), std::ios::trunc);
    if (!pcsv) throw IoError("cannot open for writing: " + joined(out_dir, stem + "_plot.csv"));
    pcsv << "series,x,y\n";
    for (const auto& s : plot.series())
        for (std::size_t i = 0; i < s.x.size(); ++i)
            pcsv << s.label << "," << format_double(s.x[i]) << "," << format_double(s.y[i]) << "\n";
    pcsv.close();
    plot.write_svg(joined(out_dir, stem + ".svg"));
    plot.write_dat(joined(out_dir, stem + ".dat"));
}

}  // namespace cli_detail

inline int cmd_sweep(const RunManifest& mf) {
    json j = cli_detail::load_config_file(mf.config_path);
    SweepSpec spec = cli_detail::sweep_spec_from_json(j, mf);
    cli_detail::ensure_out_dir(mf.out_dir);
    SweepResult res = run_sweep(spec, mf.workers, 1);
    std::string ylab = spec.with_laziness ? "laziness" : spec.with_fluctuation ? "fluct std"
                                                                               : "rms error";
    cli_detail::emit_sweep_outputs(mf.out_dir, "sweep", spec, res, ylab);
    std::cout << "sweep: " << res.records.size() << " records\n";
    return exit_ok;
}

// lazy: tangent-model training; zeta snapshots reuse the binary layout.
inline int cmd_lazy(const RunManifest& mf) {
    RunSpec spec = cli_detail::load_run_spec(mf);
    cli_detail::ensure_out_dir(mf.out_dir);
    Dataset ds = spec.dataset();
    LazyTrainResult res = train_lazy(spec.train, ds, mf.workers);
    cli_detail::write_loss_csv(cli_detail::joined(mf.out_dir, "lazy_loss.csv"), res.loss_log);
    for (const auto& [k, zeta] : res.zeta_snapshots) {
        NetParams carrier = res.z0;
        carrier.w = zeta;
        write_snapshot(cli_detail::joined(mf.out_dir, "zeta_k" + std::to_string(k) + ".bin"),
                       carrier, k);
    }
    write_sidecar(cli_detail::joined(mf.out_dir, "lazy_config.json"), spec.train, false);
    std::cout << "lazy: " << spec.train.steps << " steps, final loss "
              << format_double(res.loss_log.back()) << "\n";
    return exit_ok;
}

// phase: the residual-scale phase suite. Sweeps the regime multiplier at
// fixed shape, recording output fluctuations (k=fluct_k) and input-weight
// laziness (k=lazy_k); diverged points stay in the records, mapping the
// explosion region.
inline int cmd_phase(const RunManifest& mf) {
    json j = cli_detail::load_config_file(mf.config_path);
    RunSpec rs = run_spec_from_json(j, {"alpha_grid", "fluct_k", "lazy_k", "repetitions"});
    if (mf.seed_override) rs.train.seed = *mf.seed_override;
    std::vector<double> alpha_grid = {1, 2, 4, 8};
    if (j.contains("alpha_grid")) {
        alpha_grid.clear();
        for (const auto& v : j.at("alpha_grid")) {
            if (!v.is_number()) throw ConfigError("alpha_grid", "expected numbers");
            alpha_grid.push_back(v.get<double>());
        }
    }
    int fluct_k = detail::get_int_or(j, "fluct_k", 10);
    int lazy_k = detail::get_int_or(j, "lazy_k", 50);
    int reps = detail::get_int_or(j, "repetitions", 10);
    cli_detail::ensure_out_dir(mf.out_dir);

    SweepSpec fspec;
    fspec.axis = SweepAxis::alpha;
    fspec.grid = alpha_grid;
    fspec.base = rs.train;
    fspec.base.steps = fluct_k;
    fspec.n = rs.n;
    fspec.data_seed = rs.data_seed;
    fspec.repetitions = reps;
    fspec.eval_k = fluct_k;
    fspec.with_reference = false;
    fspec.with_fluctuation = true;
    SweepResult fres = run_sweep(fspec, mf.workers, 1);
    cli_detail::emit_sweep_outputs(mf.out_dir, "phase_fluct", fspec, fres, "fluct std");

    SweepSpec lspec = fspec;
    lspec.base.steps = lazy_k;
    lspec.eval_k = lazy_k;
    lspec.with_fluctuation = false;
    lspec.with_laziness = true;
    SweepResult lres = run_sweep(lspec, mf.workers, 1);
    cli_detail::emit_sweep_outputs(mf.out_dir, "phase_lazy", lspec, lres, "laziness");

    std::cout << "phase: " << fres.records.size() + lres.records.size() << " records\n";
    return exit_ok;
}

// ---------------------------------------------------------------------------
// Figure reproductions
// ---------------------------------------------------------------------------

namespace cli_detail {

inline State projection_vector(int d, std::uint64_t master) {
    State theta(d, 1);
    gaussian_fill(SeedPath(master).child(SeedTag::slot, 101), theta.a.data(), theta.size(), 1.0);
    double nrm = l2_of(theta.a.data(), theta.size());
    for (auto& v : theta.a) v /= nrm;
    return theta;
}

inline int fig_forward_profile(const RunManifest& mf) {
    RunSpec base = figure_base(mf);
    TrainConfig cfg = base.train;
    cfg.units = 1;
    Dataset ds = make_dataset(cfg.d, cfg.tokens, base.n, base.data_seed);
    int side = reference_side(mf);
    std::vector<int> ls = {8, 32, 128};
    auto ref = build_reference(cfg, ds, side, side, 424243, {cfg.steps}, 128, mf.workers);

    State theta = projection_vector(cfg.d, cfg.seed);
    const State& x0 = ds.x[0];

    LinePlot plot;
    plot.title = "trained forward profiles";
    plot.xlabel = "depth s";
    plot.ylabel = "projection";
    std::string csv = "series,s,value\n";
    for (int l : ls) {
        TrainConfig fc = cfg;
        fc.layers = l;
        fc.snapshots = {cfg.steps};
        auto run = train(fc, ds, mf.workers);
        auto tr = forward_pass(run.at(cfg.steps), x0, fc.alpha);
        Series s;
        s.label = "L=" + std::to_string(l);
        for (int ell = 0; ell <= l; ++ell) {
            double proj = dot(theta.a.data(), tr.h[ell].a.data(), cfg.d);
            s.x.push_back(static_cast<double>(ell) / l);
            s.y.push_back(proj);
            csv += s.label + "," + format_double(s.x.back()) + "," + format_double(proj) + "\n";
        }
        plot.add(s);
    }
    auto rtr = forward_pass(ref.run.at(cfg.steps), x0, cfg.alpha);
    Series rs;
    rs.label = "limit";
    rs.color = "#d62728";
    for (int ell = 0; ell <= ref.layers(); ++ell) {
        double proj = dot(theta.a.data(), rtr.h[ell].a.data(), cfg.d);
        rs.x.push_back(static_cast<double>(ell) / ref.layers());
        rs.y.push_back(proj);
        csv += rs.label + "," + format_double(rs.x.back()) + "," + format_double(proj) + "\n";
    }
    plot.add(rs);

    write_text(joined(mf.out_dir, "fig1.csv"), csv);
    plot.write_svg(joined(mf.out_dir, "fig1.svg"));
    plot.write_dat(joined(mf.out_dir, "fig1.dat"));
    json meta;
    meta["projection"] = theta.a;
    meta["input_index"] = 0;
    meta["config"] = to_json(cfg);
    write_text(joined(mf.out_dir, "fig1_meta.json"), meta.dump(2) + "\n");
    return exit_ok;
}

inline int fig_rate_sweep(const RunManifest& mf, bool depth_axis) {
    RunSpec base = figure_base(mf);
    SweepSpec spec;
    spec.axis = depth_axis ? SweepAxis::depth : SweepAxis::width;
    spec.grid = depth_axis ? std::vector<double>{8, 16, 32, 64, 128, 256, 512}
                           : std::vector<double>{1, 2, 4, 8, 16, 32, 64};
    spec.base = base.train;
    if (!depth_axis) spec.base.layers = 256;
    if (depth_axis) spec.base.units = 1;
    spec.n = base.n;
    spec.data_seed = base.data_seed;
    spec.repetitions = 10;
    spec.eval_k = spec.base.steps;
    int side = reference_side(mf);
    spec.ref_layers = side;
    spec.ref_units = side;
    SweepResult res = run_sweep(spec, mf.workers, 1);
    emit_sweep_outputs(mf.out_dir, depth_axis ? "fig2a" : "fig2b", spec, res, "rms error");
    return exit_ok;
}

inline int fig_reference_loss(const RunManifest& mf) {
    RunSpec base = figure_base(mf);
    TrainConfig cfg = base.train;
    int side = reference_side(mf);
    cfg.layers = side;
    cfg.units = side;
    cfg.snapshots = {};
    Dataset ds = make_dataset(cfg.d, cfg.tokens, base.n, base.data_seed);
    auto res = train(cfg, ds, mf.workers);
    write_loss_csv(joined(mf.out_dir, "fig3a.csv"), res.loss_log);
    LinePlot plot;
    plot.title = "square loss of the limit surrogate";
    plot.xlabel = "iteration k";
    plot.ylabel = "loss";
    plot.logy = true;
    Series s;
    s.label = "loss";
    for (std::size_t k = 0; k < res.loss_log.size(); ++k) {
        s.x.push_back(static_cast<double>(k));
        s.y.push_back(res.loss_log[k]);
    }
    plot.add(s);
    plot.write_svg(joined(mf.out_dir, "fig3a.svg"));
    plot.write_dat(joined(mf.out_dir, "fig3a.dat"));
    return exit_ok;
}

// weight trajectories of the tied first unit, projected on coordinate pairs
inline int fig_weight_trajectories(const RunManifest& mf) {
    RunSpec base = figure_base(mf);
    TrainConfig cfg = base.train;
    cfg.layers = std::min(cfg.layers, 64);
    cfg.units = std::max(cfg.units, 4);
    cfg.tie_first_unit = true;
    cfg.snapshots.clear();
    for (int k = 0; k <= cfg.steps; ++k) cfg.snapshots.push_back(k);
    Dataset ds = make_dataset(cfg.d, cfg.tokens, base.n, base.data_seed);
    auto res = train(cfg, ds, mf.workers);

    std::vector<std::pair<int, int>> pairs = {{0, 1}, {2, 3}};
    for (auto [c0, c1] : pairs) {
        if (c1 >= cfg.d) continue;
        std::string stem = "fig3b_p" + std::to_string(c0) + std::to_string(c1);
        LinePlot plot;
        plot.title = "input-weight trajectories (coords " + std::to_string(c0) + "," +
                     std::to_string(c1) + ")";
        plot.xlabel = "u[" + std::to_string(c0) + "]";
        plot.ylabel = "u[" + std::to_string(c1) + "]";
        std::string csv = "ell,k,x,y\n";
        int stride = std::max(1, cfg.layers / 16);
        for (int l = 0; l < cfg.layers; l += stride) {
            Series s;
            double t = cfg.layers <= 1 ? 0.0 : static_cast<double>(l) / (cfg.layers - 1);
            char color[16];
            std::snprintf(color, sizeof(color), "#%02x%02x%02x", static_cast<int>(40 + 60 * t),
                          static_cast<int>(80 - 40 * t), static_cast<int>(160 + 80 * t));
            s.color = color;
            for (int k = 0; k <= cfg.steps; ++k) {
                const double* u = res.at(k).unit(l, 0);
                s.x.push_back(u[c0]);
                s.y.push_back(u[c1]);
                csv += std::to_string(l + 1) + "," + std::to_string(k) + "," +
                       format_double(u[c0]) + "," + format_double(u[c1]) + "\n";
            }
            plot.add(s);
        }
        write_text(joined(mf.out_dir, stem + ".csv"), csv);
        plot.write_svg(joined(mf.out_dir, stem + ".svg"));
        plot.write_dat(joined(mf.out_dir, stem + ".dat"));
    }
    return exit_ok;
}

inline SweepSpec phase_fig_spec(const RunSpec& base, int d, int k, bool fluct) {
    SweepSpec spec;
    spec.axis = SweepAxis::alpha;
    spec.grid = {1, 2, 4, 8};
    spec.base = base.train;
    spec.base.d = d;
    double r = static_cast<double>(d) / base.train.d;
    spec.base.scales.sigma_u = base.train.scales.sigma_u * std::sqrt(r);
    spec.base.scales.sigma_v = base.train.scales.sigma_v * std::sqrt(r);
    spec.base.eta_u = base.train.eta_u * r;
    spec.base.eta_v = base.train.eta_v * r;
    spec.base.layers = 500;
    spec.base.units = 10;
    spec.base.steps = k;
    spec.n = base.n;
    spec.data_seed = base.data_seed;
    spec.repetitions = 10;
    spec.eval_k = k;
    spec.with_reference = false;
    spec.with_fluctuation = fluct;
    spec.with_laziness = !fluct;
    return spec;
}

inline int fig_fluctuation(const RunManifest& mf) {
    RunSpec base = figure_base(mf);
    for (int d : {8, 32}) {
        SweepSpec spec = phase_fig_spec(base, d, 10, true);
        SweepResult res = run_sweep(spec, mf.workers, 1);
        emit_sweep_outputs(mf.out_dir, "fig4a_d" + std::to_string(d), spec, res, "fluct std");
    }
    return exit_ok;
}

inline int fig_laziness(const RunManifest& mf) {
    RunSpec base = figure_base(mf);
    SweepSpec spec = phase_fig_spec(base, 8, 50, false);
    SweepResult res = run_sweep(spec, mf.workers, 1);
    emit_sweep_outputs(mf.out_dir, "fig4b", spec, res, "laziness");
    return exit_ok;
}

inline int fig_loss_logs(const RunManifest& mf) {
    RunSpec base = figure_base(mf);
    LinePlot plot;
    plot.title = "train loss across regimes";
    plot.xlabel = "iteration k";
    plot.ylabel = "loss";
    plot.logy = true;
    std::string csv = "alpha,d,k,loss\n";
    for (int d : {8, 32}) {
        for (double a : {1.0, 2.0, 4.0, 8.0}) {
            SweepSpec spec = phase_fig_spec(base, d, 50, false);
            TrainConfig cfg = sweep_point_config(spec, a);
            cfg.seed = repetition_seed(spec, 0);
            Dataset ds = make_dataset(cfg.d, cfg.tokens, spec.n, spec.data_seed);
            auto res = train(cfg, ds, mf.workers);
            Series s;
            s.label = "d=" + std::to_string(d) + " a=" + format_double(a);
            for (std::size_t k = 0; k < res.loss_log.size(); ++k) {
                s.x.push_back(static_cast<double>(k));
                s.y.push_back(res.loss_log[k]);
                csv += format_double(a) + "," + std::to_string(d) + "," + std::to_string(k) + "," +
                       format_double(res.loss_log[k]) + "\n";
            }
            plot.add(s);
        }
    }
    write_text(joined(mf.out_dir, "fig4c.csv"), csv);
    plot.write_svg(joined(mf.out_dir, "fig4c.svg"));
    plot.write_dat(joined(mf.out_dir, "fig4c.dat"));
    return exit_ok;
}

}  // namespace cli_detail

inline int cmd_figure(const RunManifest& mf) {
    cli_detail::ensure_out_dir(mf.out_dir);
    const std::string& tag = mf.figure;
    if (tag == "1") return cli_detail::fig_forward_profile(mf);
    if (tag == "2a") return cli_detail::fig_rate_sweep(mf, true);
    if (tag == "2b") return cli_detail::fig_rate_sweep(mf, false);
    if (tag == "3a") return cli_detail::fig_reference_loss(mf);
    if (tag == "3b") return cli_detail::fig_weight_trajectories(mf);
    if (tag == "4a") return cli_detail::fig_fluctuation(mf);
    if (tag == "4b") return cli_detail::fig_laziness(mf);
    if (tag == "4c") return cli_detail::fig_loss_logs(mf);
    throw ConfigError("figure", "unknown figure tag: " + tag +
                                    " (expected 1, 2a, 2b, 3a, 3b, 4a, 4b or 4c)");
}

// Dispatches one parsed invocation, mapping failures to the exit-code
// contract: 0 ok, 1 config error, 2 numerical divergence, 3 I/O error.
inline int dispatch(const RunManifest& mf) {
    try {
        if (mf.command == "train") return cmd_train(mf);
        if (mf.command == "reference") return cmd_reference(mf);
        if (mf.command == "sweep") return cmd_sweep(mf);
        if (mf.command == "lazy") return cmd_lazy(mf);
        if (mf.command == "phase") return cmd_phase(mf);
        if (mf.command == "figure") return cmd_figure(mf);
        std::cerr << "unknown command: " << mf.command << "\n";
        return exit_config;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return exit_config;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return exit_divergence;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return exit_io;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return exit_io;
    }
}

}  // namespace meanode
