#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "meanode/blocks.hpp"
#include "meanode/common.hpp"
#include "meanode/rng.hpp"
#include "meanode/state.hpp"

namespace meanode {

// Full weight set of a depth-L, width-M residual net: one flat UnitParams
// per (layer, unit), stored contiguously.
struct NetParams {
    BlockKind kind;
    int d = 0;
    int layers = 0;  // L
    int units = 0;   // M
    int p = 0;       // params per unit
    std::vector<double> w;

    NetParams() = default;
    NetParams(const BlockKind& kind_, int d_, int layers_, int units_)
        : kind(kind_), d(d_), layers(layers_), units(units_), p(param_size(kind_, d_)),
          w(static_cast<std::size_t>(layers_) * units_ * p, 0.0) {
        if (d_ < 1 || layers_ < 1 || units_ < 1)
            throw std::invalid_argument("NetParams: D, L, M must be >= 1");
    }

    // layer l in [0, L), unit j in [0, M)
    double* unit(int l, int j) { return w.data() + (static_cast<std::size_t>(l) * units + j) * p; }
    const double* unit(int l, int j) const {
        return w.data() + (static_cast<std::size_t>(l) * units + j) * p;
    }
    std::size_t unit_count() const { return static_cast<std::size_t>(layers) * units; }
};

// All intermediate states h^0..h^L of one forward pass; h^0 is the input.
struct ForwardTrace {
    std::vector<State> h;  // size L+1
    int input_index = -1;

    const State& output() const { return h.back(); }
};

enum class LossKind { scaled_mean_square };

// loss(h) = ||h - y||_2^2 / (2D), summed over tokens, so that the loss
// gradient (h - y)/D has entrywise scale Theta(1/D).
inline double loss_value(LossKind, const State& h, const State& y) {
    if (!h.same_shape(y)) throw std::invalid_argument("loss: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        double e = h.a[i] - y.a[i];
        s += e * e;
    }
    return s / (2.0 * h.d);
}

inline State loss_gradient(LossKind, const State& h, const State& y) {
    if (!h.same_shape(y)) throw std::invalid_argument("loss: shape mismatch");
    State g(h.d, h.t);
    for (std::size_t i = 0; i < h.size(); ++i) g.a[i] = (h.a[i] - y.a[i]) / h.d;
    return g;
}

struct Dataset {
    int d = 0, t = 1, n = 0;
    std::vector<State> x, y;
    LossKind loss = LossKind::scaled_mean_square;
};

// n input/target pairs with iid N(0,1) entries, targets independent of
// inputs; fully determined by the seed.
inline Dataset make_dataset(int d, int t, int n, std::uint64_t seed) {
    if (d < 1 || t < 1 || n < 1) throw std::invalid_argument("make_dataset: D, T, n must be >= 1");
    Dataset ds;
    ds.d = d;
    ds.t = t;
    ds.n = n;
    SeedPath root(seed);
    for (int i = 0; i < n; ++i) {
        SeedPath pi = root.child(SeedTag::input, static_cast<std::uint64_t>(i));
        State xi(d, t), yi(d, t);
        gaussian_fill(pi.child(SeedTag::slot, 0), xi.a.data(), xi.size(), 1.0);
        gaussian_fill(pi.child(SeedTag::slot, 1), yi.a.data(), yi.size(), 1.0);
        ds.x.push_back(std::move(xi));
        ds.y.push_back(std::move(yi));
    }
    return ds;
}

// One full training run. Learning rates follow the premultiplied convention:
// the parameter update is  z -= eta_slot * L * M * grad(batch loss), with
// eta_u applied to the input-side slots and eta_v to the output-side ones.
struct TrainConfig {
    BlockKind block;
    int d = 0;
    int tokens = 1;
    int layers = 0;  // L
    int units = 0;   // M
    double alpha = 1.0;
    int steps = 0;  // K
    double eta_u = 0.0, eta_v = 0.0;
    InitScales scales;
    std::uint64_t seed = 0;
    std::vector<int> snapshots;
    bool tie_first_unit = false;  // unit 0 shares its init draw across layers

    void validate() const {
        if (d < 1) throw ConfigError("d", "must be >= 1");
        if (tokens < 1) throw ConfigError("tokens", "must be >= 1");
        if (layers < 1) throw ConfigError("l", "must be >= 1");
        if (units < 1) throw ConfigError("m", "must be >= 1");
        if (!(alpha > 0.0)) throw ConfigError("alpha", "must be > 0");
        if (steps < 0) throw ConfigError("steps", "must be >= 0");
        // zero is allowed: freezing one slot group is a standard diagnostic
        if (!(eta_u >= 0.0)) throw ConfigError("eta_u", "must be >= 0");
        if (!(eta_v >= 0.0)) throw ConfigError("eta_v", "must be >= 0");
        if (!(scales.sigma_u >= 0.0)) throw ConfigError("sigma_u", "must be >= 0");
        if (!(scales.sigma_v >= 0.0)) throw ConfigError("sigma_v", "must be >= 0");
        if (block.family == BlockFamily::attention && block.key_dim < 1)
            throw ConfigError("dk", "must be >= 1");
        for (int s : snapshots)
            if (s < 0 || s > steps) throw ConfigError("snapshots", "iterations must lie in [0, steps]");
    }
};

inline SeedPath unit_seed(const TrainConfig& cfg, int l, int j) {
    int eff_l = (cfg.tie_first_unit && j == 0) ? 0 : l;
    return SeedPath(cfg.seed)
        .child(SeedTag::layer, static_cast<std::uint64_t>(eff_l) + 1)
        .child(SeedTag::unit, static_cast<std::uint64_t>(j) + 1);
}

inline NetParams init_net(const TrainConfig& cfg) {
    cfg.validate();
    NetParams net(cfg.block, cfg.d, cfg.layers, cfg.units);
    for (int l = 0; l < cfg.layers; ++l)
        for (int j = 0; j < cfg.units; ++j)
            block_init_fill(cfg.block, cfg.d, unit_seed(cfg, l, j), cfg.scales, net.unit(l, j));
    return net;
}

// h^l = h^{l-1} + (alpha / LM) sum_j phi(h^{l-1}, z^{j,l})
inline ForwardTrace forward_pass(const NetParams& net, const State& x, double alpha) {
    if (x.d != net.d) throw std::invalid_argument("forward_pass: input dimension mismatch");
    ForwardTrace tr;
    tr.h.reserve(static_cast<std::size_t>(net.layers) + 1);
    tr.h.push_back(x);
    double coef = alpha / (static_cast<double>(net.layers) * net.units);
    for (int l = 0; l < net.layers; ++l) {
        State next = tr.h.back();
        const State& prev = tr.h.back();
        for (int j = 0; j < net.units; ++j)
            block_apply_accum(net.kind, prev, net.unit(l, j), static_cast<std::size_t>(net.p), coef,
                              next);
        if (!next.finite())
            throw DivergenceError("forward pass diverged (non-finite state) at layer " +
                                      std::to_string(l + 1),
                                  l + 1);
        tr.h.push_back(std::move(next));
    }
    return tr;
}

// Adjoint states b^0..b^L for cotangent w at the output; b[l] pairs with
// trace.h[l]. b^{l-1} = b^l + (alpha / LM) sum_j D1phi(h^{l-1}, z^{j,l})^T b^l.
inline std::vector<State> backward_pass(const NetParams& net, const ForwardTrace& trace,
                                        const State& w, double alpha) {
    if (trace.h.size() != static_cast<std::size_t>(net.layers) + 1)
        throw std::invalid_argument("backward_pass: trace length does not match net depth");
    if (!w.same_shape(trace.h.back())) throw std::invalid_argument("backward_pass: shape mismatch");
    std::vector<State> b(trace.h.size(), State(w.d, w.t));
    b[net.layers] = w;
    double coef = alpha / (static_cast<double>(net.layers) * net.units);
    for (int l = net.layers; l >= 1; --l) {
        State prev = b[l];
        for (int j = 0; j < net.units; ++j)
            block_vjp_state_accum(net.kind, trace.h[l - 1], net.unit(l - 1, j),
                                  static_cast<std::size_t>(net.p), b[l], coef, prev);
        if (!prev.finite())
            throw DivergenceError("backward pass diverged (non-finite state) at layer " +
                                      std::to_string(l),
                                  l);
        b[l - 1] = std::move(prev);
    }
    return b;
}

// Per-unit gradients of one sample's loss. `g` stores the rescaled per-sample
// gradient map ghat^{j,l} = D2phi(h^{l-1}, z^{j,l})^T b^l; the raw gradient of
// the loss carries the extra alpha/(LM) factor, exposed via raw_factor().
struct UnitGradients {
    int layers = 0, units = 0, p = 0;
    double alpha = 1.0;
    bool rescaled = true;
    std::vector<double> g;

    double raw_factor() const { return alpha / (static_cast<double>(layers) * units); }
    double* unit(int l, int j) { return g.data() + (static_cast<std::size_t>(l) * units + j) * p; }
    const double* unit(int l, int j) const {
        return g.data() + (static_cast<std::size_t>(l) * units + j) * p;
    }
    std::vector<double> raw() const {
        std::vector<double> out = g;
        double f = raw_factor();
        for (auto& v : out) v *= f;
        return out;
    }
};

inline UnitGradients unit_gradients(const NetParams& net, const ForwardTrace& trace,
                                    const std::vector<State>& backward, double alpha) {
    if (trace.h.size() != static_cast<std::size_t>(net.layers) + 1 ||
        backward.size() != trace.h.size())
        throw std::invalid_argument("unit_gradients: trace/backward length mismatch");
    UnitGradients ug;
    ug.layers = net.layers;
    ug.units = net.units;
    ug.p = net.p;
    ug.alpha = alpha;
    ug.g.assign(net.w.size(), 0.0);
    for (int l = 0; l < net.layers; ++l)
        for (int j = 0; j < net.units; ++j)
            block_vjp_params_accum(net.kind, trace.h[l], net.unit(l, j),
                                   static_cast<std::size_t>(net.p), backward[l + 1], ug.unit(l, j));
    return ug;
}

namespace detail {

struct BatchPasses {
    std::vector<ForwardTrace> traces;
    std::vector<std::vector<State>> backs;
    double loss = 0.0;
};

inline BatchPasses batch_passes(const NetParams& net, const Dataset& ds, double alpha,
                                int threads) {
    BatchPasses bp;
    bp.traces.resize(static_cast<std::size_t>(ds.n));
    bp.backs.resize(static_cast<std::size_t>(ds.n));
    std::vector<double> losses(static_cast<std::size_t>(ds.n), 0.0);
    parallel_for(ds.n, threads, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
            auto idx = static_cast<std::size_t>(i);
            bp.traces[idx] = forward_pass(net, ds.x[idx], alpha);
            bp.traces[idx].input_index = static_cast<int>(i);
            losses[idx] = loss_value(ds.loss, bp.traces[idx].output(), ds.y[idx]);
            State w = loss_gradient(ds.loss, bp.traces[idx].output(), ds.y[idx]);
            bp.backs[idx] = backward_pass(net, bp.traces[idx], w, alpha);
        }
    });
    for (double v : losses) bp.loss += v;
    bp.loss /= ds.n;
    return bp;
}

// One GD update from precomputed passes:
//   z^{j,l} -= eta_slot * (alpha / n) * sum_i ghat_i^{j,l}
// which equals  z -= eta_slot * L * M * grad(batch loss).
inline void apply_update(NetParams& net, const Dataset& ds, const BatchPasses& bp, double eta_u,
                         double eta_v, double alpha, int threads) {
    const int split = slot_split(net.kind, net.d);
    const double cu = eta_u * alpha / ds.n;
    const double cv = eta_v * alpha / ds.n;
    parallel_for(net.layers, threads, [&](std::int64_t lo, std::int64_t hi) {
        std::vector<double> g(static_cast<std::size_t>(net.p));
        for (std::int64_t l = lo; l < hi; ++l) {
            for (int j = 0; j < net.units; ++j) {
                std::fill(g.begin(), g.end(), 0.0);
                double* z = net.unit(static_cast<int>(l), j);
                for (int i = 0; i < ds.n; ++i)
                    block_vjp_params_accum(net.kind, bp.traces[static_cast<std::size_t>(i)].h[l], z,
                                           static_cast<std::size_t>(net.p),
                                           bp.backs[static_cast<std::size_t>(i)][l + 1], g.data());
                for (int s = 0; s < split; ++s) z[s] -= cu * g[static_cast<std::size_t>(s)];
                for (int s = split; s < net.p; ++s) z[s] -= cv * g[static_cast<std::size_t>(s)];
                if (!all_finite(z, static_cast<std::size_t>(net.p)))
                    throw DivergenceError("gd step produced non-finite parameters at layer " +
                                              std::to_string(l + 1),
                                          static_cast<int>(l) + 1);
            }
        }
    });
}

}  // namespace detail

inline void gd_step_inplace(NetParams& net, const Dataset& ds, const TrainConfig& cfg,
                            int threads = 1) {
    auto bp = detail::batch_passes(net, ds, cfg.alpha, threads);
    detail::apply_update(net, ds, bp, cfg.eta_u, cfg.eta_v, cfg.alpha, threads);
}

inline NetParams gd_step(const NetParams& net, const Dataset& ds, const TrainConfig& cfg,
                         int threads = 1) {
    NetParams next = net;
    gd_step_inplace(next, ds, cfg, threads);
    return next;
}

struct TrainResult {
    TrainConfig cfg;
    std::map<int, NetParams> snapshots;
    std::vector<double> loss_log;  // K+1 values, loss at iterations 0..K

    const NetParams& at(int k) const {
        auto it = snapshots.find(k);
        if (it == snapshots.end())
            throw std::invalid_argument("no snapshot recorded at iteration " + std::to_string(k));
        return it->second;
    }
    bool has(int k) const { return snapshots.count(k) != 0; }
};

// Full-batch GD for cfg.steps iterations. Deterministic given cfg (including
// the seed); the loss log records the batch loss before each step plus the
// final one. Divergence is reported with the offending iteration.
inline TrainResult train(const TrainConfig& cfg, const Dataset& ds, int threads = 1) {
    cfg.validate();
    if (ds.d != cfg.d || ds.t != cfg.tokens)
        throw ConfigError("d", "dataset shape does not match config");
    TrainResult res;
    res.cfg = cfg;
    NetParams net = init_net(cfg);
    auto want = [&](int k) {
        for (int s : cfg.snapshots)
            if (s == k) return true;
        return false;
    };
    for (int k = 0; k <= cfg.steps; ++k) {
        if (want(k)) res.snapshots.emplace(k, net);
        try {
            auto bp = detail::batch_passes(net, ds, cfg.alpha, threads);
            if (!std::isfinite(bp.loss))
                throw DivergenceError("non-finite training loss", -1, k);
            res.loss_log.push_back(bp.loss);
            if (k < cfg.steps)
                detail::apply_update(net, ds, bp, cfg.eta_u, cfg.eta_v, cfg.alpha, threads);
        } catch (DivergenceError& e) {
            throw DivergenceError(std::string(e.what()) + " at iteration " + std::to_string(k),
                                  e.layer, k);
        }
    }
    return res;
}

}  // namespace meanode
