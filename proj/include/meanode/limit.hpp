#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "meanode/resnet.hpp"

namespace meanode {

// ---------------------------------------------------------------------------
// Reference model: a very large ResNet standing in for the infinite-depth
// limit. Finite runs are compared against it on the depth grid s_l = l/L_ref.
// ---------------------------------------------------------------------------

struct ReferenceModel {
    TrainResult run;
    Dataset data;
    int max_compared_lm = 0;

    int layers() const { return run.cfg.layers; }
    int grid_index(double s) const {
        long idx = std::lround(s * layers());
        if (idx < 0) idx = 0;
        if (idx > layers()) idx = layers();
        return static_cast<int>(idx);
    }
};

// Trains the surrogate with the same dataset, losses, LRs and scales as
// `base`. Its effective width must dominate every compared net: the ratio
// L_ref*M_ref / max(LM) is required to be at least 16.
inline ReferenceModel build_reference(const TrainConfig& base, const Dataset& ds, int l_ref,
                                      int m_ref, std::uint64_t ref_seed,
                                      const std::vector<int>& snapshot_iters, int max_compared_lm,
                                      int threads = 1) {
    if (static_cast<long long>(l_ref) * m_ref < 16LL * max_compared_lm)
        throw std::invalid_argument(
            "build_reference: L_ref*M_ref must be at least 16x the largest compared L*M");
    TrainConfig cfg = base;
    cfg.layers = l_ref;
    cfg.units = m_ref;
    cfg.seed = ref_seed;
    cfg.snapshots = snapshot_iters;
    ReferenceModel ref;
    ref.run = train(cfg, ds, threads);
    ref.data = ds;
    ref.max_compared_lm = max_compared_lm;
    return ref;
}

// Forward and adjoint states of the surrogate at one recorded iteration, for
// one input/target pair; queryable at any depth via the nearest grid layer.
struct LimitFields {
    ForwardTrace h;
    std::vector<State> b;
};

inline LimitFields query_limit_fields(const ReferenceModel& ref, int k, const State& x,
                                      const State& y) {
    const NetParams& net = ref.run.at(k);  // throws on unrecorded iterations
    LimitFields f;
    f.h = forward_pass(net, x, ref.run.cfg.alpha);
    State w = loss_gradient(ref.data.loss, f.h.output(), y);
    f.b = backward_pass(net, f.h, w, ref.run.cfg.alpha);
    return f;
}

// Fields for all training samples at one iteration; shared by every tracer
// step at that iteration.
struct RefFields {
    int k = 0;
    std::vector<LimitFields> per_sample;
};

inline RefFields compute_reference_fields(const ReferenceModel& ref, int k, int threads = 1) {
    RefFields rf;
    rf.k = k;
    rf.per_sample.resize(static_cast<std::size_t>(ref.data.n));
    const NetParams& net = ref.run.at(k);
    parallel_for(ref.data.n, threads, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
            auto idx = static_cast<std::size_t>(i);
            LimitFields f;
            f.h = forward_pass(net, ref.data.x[idx], ref.run.cfg.alpha);
            State w = loss_gradient(ref.data.loss, f.h.output(), ref.data.y[idx]);
            f.b = backward_pass(net, f.h, w, ref.run.cfg.alpha);
            rf.per_sample[idx] = std::move(f);
        }
    });
    return rf;
}

// ---------------------------------------------------------------------------
// Tracer particles: one parameter trajectory per finite-net unit, initialized
// bit-identically to that unit and driven by the reference's mean-field
// gradient fields at its depth. Tracers never influence the reference.
// ---------------------------------------------------------------------------

struct TracerSet {
    BlockKind kind;
    int d = 0, layers = 0, units = 0, p = 0;
    std::uint64_t coupled_seed = 0;
    int k = 0;
    std::vector<double> z;

    double* unit(int l, int j) { return z.data() + (static_cast<std::size_t>(l) * units + j) * p; }
    const double* unit(int l, int j) const {
        return z.data() + (static_cast<std::size_t>(l) * units + j) * p;
    }
};

inline TracerSet make_tracers(const NetParams& net_at_init, const TrainConfig& finite_cfg) {
    TracerSet ts;
    ts.kind = net_at_init.kind;
    ts.d = net_at_init.d;
    ts.layers = net_at_init.layers;
    ts.units = net_at_init.units;
    ts.p = net_at_init.p;
    ts.coupled_seed = finite_cfg.seed;
    ts.z = net_at_init.w;
    return ts;
}

// One GD step of every tracer against precomputed reference fields:
//   z -= eta_slot * alpha / n * sum_i D2phi(h(s_l, x_i), z)^T b(s_l, x_i)
// with s_l the tracer's depth and fields read off the reference grid.
inline void evolve_tracers(TracerSet& tracers, const RefFields& fields,
                           const ReferenceModel& ref, const TrainConfig& cfg, int threads = 1) {
    if (fields.k != tracers.k)
        throw std::invalid_argument("evolve_tracers: fields iteration does not match tracer state");
    const Dataset& ds = ref.data;
    const int split = slot_split(tracers.kind, tracers.d);
    const double cu = cfg.eta_u * cfg.alpha / ds.n;
    const double cv = cfg.eta_v * cfg.alpha / ds.n;
    parallel_for(tracers.layers, threads, [&](std::int64_t lo, std::int64_t hi) {
        std::vector<double> g(static_cast<std::size_t>(tracers.p));
        for (std::int64_t l = lo; l < hi; ++l) {
            double s = static_cast<double>(l) / tracers.layers;
            int gi = ref.grid_index(s);
            for (int j = 0; j < tracers.units; ++j) {
                std::fill(g.begin(), g.end(), 0.0);
                double* z = tracers.unit(static_cast<int>(l), j);
                for (int i = 0; i < ds.n; ++i) {
                    const auto& f = fields.per_sample[static_cast<std::size_t>(i)];
                    block_vjp_params_accum(tracers.kind, f.h.h[gi], z,
                                           static_cast<std::size_t>(tracers.p), f.b[gi], g.data());
                }
                for (int q = 0; q < split; ++q) z[q] -= cu * g[static_cast<std::size_t>(q)];
                for (int q = split; q < tracers.p; ++q) z[q] -= cv * g[static_cast<std::size_t>(q)];
            }
        }
    });
    ++tracers.k;
}

// Convenience overload that recomputes the fields for the tracers' iteration.
inline void evolve_tracers(TracerSet& tracers, const ReferenceModel& ref, const TrainConfig& cfg,
                           int threads = 1) {
    RefFields rf = compute_reference_fields(ref, tracers.k, threads);
    evolve_tracers(tracers, rf, ref, cfg, threads);
}

// ---------------------------------------------------------------------------
// Tangent (lazy) model: the forward drift is linearized in the parameter
// displacement zeta around the frozen initialization. 2LP blocks only; the
// frozen zero-order term has zero mean there by centered v, which is what
// keeps the initial passes bounded as the residual multiplier grows.
// ---------------------------------------------------------------------------

namespace detail {

inline void require_centered(const BlockKind& kind) {
    if (kind.family != BlockFamily::two_layer_perceptron)
        throw ConfigError("block", "tangent model requires the centered 2lp block family");
}

// out += coef * D2phi(x, z0) . zeta     (the tangent drift of one unit)
inline void lazy_apply_accum(Activation act, int d, const State& x, const double* z0,
                             const double* zeta, double coef, State& out) {
    const double* u0 = z0;
    const double* v0 = z0 + d;
    const double* uz = zeta;
    const double* vz = zeta + d;
    for (int tok = 0; tok < x.t; ++tok) {
        const double* col = x.token(tok);
        double p0 = dot(u0, col, d) / d;
        double pz = dot(uz, col, d) / d;
        double r = rho(act, p0);
        double dr = rho_prime(act, p0);
        double* o = out.token(tok);
        for (int i = 0; i < d; ++i) o[i] += coef * (vz[i] * r + v0[i] * dr * pz);
    }
}

// out += coef * (d/dx)[D2phi(x, z0) . zeta]^T w   (exact adjoint of the
// discretized tangent step, second derivative of rho included)
inline void lazy_vjp_state_accum(Activation act, int d, const State& x, const double* z0,
                                 const double* zeta, const State& w, double coef, State& out) {
    const double* u0 = z0;
    const double* v0 = z0 + d;
    const double* uz = zeta;
    const double* vz = zeta + d;
    for (int tok = 0; tok < x.t; ++tok) {
        const double* col = x.token(tok);
        const double* wc = w.token(tok);
        double p0 = dot(u0, col, d) / d;
        double pz = dot(uz, col, d) / d;
        double vz_w = dot(vz, wc, d);
        double v0_w = dot(v0, wc, d);
        double c_u0 = coef * (rho_prime(act, p0) * vz_w + rho_second(act, p0) * pz * v0_w) / d;
        double c_uz = coef * rho_prime(act, p0) * v0_w / d;
        double* o = out.token(tok);
        for (int i = 0; i < d; ++i) o[i] += c_u0 * u0[i] + c_uz * uz[i];
    }
}

// g += D2phi(x, z0)^T w   (gradient of the tangent loss in zeta)
inline void lazy_vjp_zeta_accum(Activation act, int d, const State& x, const double* z0,
                                const State& w, double* g) {
    const double* u0 = z0;
    const double* v0 = z0 + d;
    double* gu = g;
    double* gv = g + d;
    for (int tok = 0; tok < x.t; ++tok) {
        const double* col = x.token(tok);
        const double* wc = w.token(tok);
        double p0 = dot(u0, col, d) / d;
        double cu = rho_prime(act, p0) * dot(v0, wc, d) / d;
        double r = rho(act, p0);
        for (int i = 0; i < d; ++i) {
            gu[i] += cu * col[i];
            gv[i] += r * wc[i];
        }
    }
}

}  // namespace detail

// h^l = h^{l-1} + (1/LM) sum_j D2phi(h^{l-1}, z0^{j,l}) zeta^{j,l}
inline ForwardTrace lazy_forward(const NetParams& z0, const std::vector<double>& zeta,
                                 const State& x) {
    detail::require_centered(z0.kind);
    if (zeta.size() != z0.w.size())
        throw std::invalid_argument("lazy_forward: zeta size does not match the frozen net");
    ForwardTrace tr;
    tr.h.reserve(static_cast<std::size_t>(z0.layers) + 1);
    tr.h.push_back(x);
    double coef = 1.0 / (static_cast<double>(z0.layers) * z0.units);
    for (int l = 0; l < z0.layers; ++l) {
        State next = tr.h.back();
        const State& prev = tr.h.back();
        for (int j = 0; j < z0.units; ++j) {
            std::size_t off = (static_cast<std::size_t>(l) * z0.units + j) * z0.p;
            detail::lazy_apply_accum(z0.kind.act, z0.d, prev, z0.w.data() + off, zeta.data() + off,
                                     coef, next);
        }
        if (!next.finite())
            throw DivergenceError("tangent forward pass diverged at layer " + std::to_string(l + 1),
                                  l + 1);
        tr.h.push_back(std::move(next));
    }
    return tr;
}

inline std::vector<State> lazy_backward(const NetParams& z0, const std::vector<double>& zeta,
                                        const ForwardTrace& trace, const State& w) {
    detail::require_centered(z0.kind);
    std::vector<State> b(trace.h.size(), State(w.d, w.t));
    b[z0.layers] = w;
    double coef = 1.0 / (static_cast<double>(z0.layers) * z0.units);
    for (int l = z0.layers; l >= 1; --l) {
        State prev = b[l];
        for (int j = 0; j < z0.units; ++j) {
            std::size_t off = (static_cast<std::size_t>(l - 1) * z0.units + j) * z0.p;
            detail::lazy_vjp_state_accum(z0.kind.act, z0.d, trace.h[l - 1], z0.w.data() + off,
                                         zeta.data() + off, b[l], coef, prev);
        }
        b[l - 1] = std::move(prev);
    }
    return b;
}

struct LazyTrainResult {
    TrainConfig cfg;
    NetParams z0;
    std::map<int, std::vector<double>> zeta_snapshots;
    std::vector<double> loss_log;

    const std::vector<double>& zeta_at(int k) const {
        auto it = zeta_snapshots.find(k);
        if (it == zeta_snapshots.end())
            throw std::invalid_argument("no tangent snapshot at iteration " + std::to_string(k));
        return it->second;
    }
};

// GD on zeta from zeta = 0:
//   zeta^{j,l} -= eta_slot / n * sum_i D2phi(h^{l-1}_i, z0^{j,l})^T b^l_i
// with the adjoint taken through the discretized tangent recursion, so the
// update is the exact gradient of the discretized tangent loss (up to the
// eta_slot * LM premultiplier convention).
inline LazyTrainResult train_lazy(const TrainConfig& cfg, const Dataset& ds, int threads = 1) {
    cfg.validate();
    detail::require_centered(cfg.block);
    if (ds.d != cfg.d || ds.t != cfg.tokens)
        throw ConfigError("d", "dataset shape does not match config");
    LazyTrainResult res;
    res.cfg = cfg;
    res.z0 = init_net(cfg);
    const NetParams& z0 = res.z0;
    std::vector<double> zeta(z0.w.size(), 0.0);
    const int split = slot_split(cfg.block, cfg.d);

    auto want = [&](int k) {
        for (int s : cfg.snapshots)
            if (s == k) return true;
        return false;
    };

    for (int k = 0; k <= cfg.steps; ++k) {
        if (want(k)) res.zeta_snapshots.emplace(k, zeta);

        std::vector<ForwardTrace> traces(static_cast<std::size_t>(ds.n));
        std::vector<std::vector<State>> backs(static_cast<std::size_t>(ds.n));
        std::vector<double> losses(static_cast<std::size_t>(ds.n), 0.0);
        parallel_for(ds.n, threads, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t i = lo; i < hi; ++i) {
                auto idx = static_cast<std::size_t>(i);
                traces[idx] = lazy_forward(z0, zeta, ds.x[idx]);
                losses[idx] = loss_value(ds.loss, traces[idx].output(), ds.y[idx]);
                State w = loss_gradient(ds.loss, traces[idx].output(), ds.y[idx]);
                backs[idx] = lazy_backward(z0, zeta, traces[idx], w);
            }
        });
        double loss = 0.0;
        for (double v : losses) loss += v;
        loss /= ds.n;
        if (!std::isfinite(loss))
            throw DivergenceError("non-finite tangent loss", -1, k);
        res.loss_log.push_back(loss);
        if (k == cfg.steps) break;

        const double cu = cfg.eta_u / ds.n;
        const double cv = cfg.eta_v / ds.n;
        parallel_for(cfg.layers, threads, [&](std::int64_t lo, std::int64_t hi) {
            std::vector<double> g(static_cast<std::size_t>(z0.p));
            for (std::int64_t l = lo; l < hi; ++l) {
                for (int j = 0; j < cfg.units; ++j) {
                    std::fill(g.begin(), g.end(), 0.0);
                    std::size_t off = (static_cast<std::size_t>(l) * cfg.units + j) * z0.p;
                    for (int i = 0; i < ds.n; ++i)
                        detail::lazy_vjp_zeta_accum(cfg.block.act, cfg.d,
                                                    traces[static_cast<std::size_t>(i)].h[l],
                                                    z0.w.data() + off,
                                                    backs[static_cast<std::size_t>(i)][l + 1],
                                                    g.data());
                    double* zl = zeta.data() + off;
                    for (int q = 0; q < split; ++q) zl[q] -= cu * g[static_cast<std::size_t>(q)];
                    for (int q = split; q < z0.p; ++q) zl[q] -= cv * g[static_cast<std::size_t>(q)];
                }
            }
        });
    }
    return res;
}

}  // namespace meanode
