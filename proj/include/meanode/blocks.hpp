#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "meanode/activation.hpp"
#include "meanode/rng.hpp"
#include "meanode/state.hpp"

namespace meanode {

enum class BlockFamily {
    two_layer_perceptron,  // phi(x,(u,v)) = v * rho(u.x / D), p = 2D
    matrix_pre,            // phi(x,W) = W rho(x),             p = D^2
    matrix_post,           // phi(x,W) = rho(W x),             p = D^2
    attention,             // softmax attention head,          p = 4 * dk * D
};

struct BlockKind {
    BlockFamily family = BlockFamily::two_layer_perceptron;
    Activation act = Activation::tanh;
    int key_dim = 4;  // attention only

    static BlockKind two_layer_perceptron(Activation a) { return {BlockFamily::two_layer_perceptron, a, 0}; }
    static BlockKind matrix_pre(Activation a) { return {BlockFamily::matrix_pre, a, 0}; }
    static BlockKind matrix_post(Activation a) { return {BlockFamily::matrix_post, a, 0}; }
    static BlockKind attention_head(int dk) { return {BlockFamily::attention, Activation::identity, dk}; }
};

// Flat parameter vector of one unit. Layouts:
//   2LP:        [u(D), v(D)]
//   matrix:     [W row-major (D x D)]
//   attention:  [Wk, Wq, Wv, Wo], each row-major (dk x D)
using UnitParams = std::vector<double>;

inline int param_size(const BlockKind& kind, int d) {
    switch (kind.family) {
        case BlockFamily::two_layer_perceptron: return 2 * d;
        case BlockFamily::matrix_pre:
        case BlockFamily::matrix_post: return d * d;
        case BlockFamily::attention: return 4 * kind.key_dim * d;
    }
    return 0;
}

// Boundary between the "input-side" and "output-side" parameter groups.
// Input-side coordinates [0, split) take the u learning rate / init scale,
// output-side [split, p) take the v ones. For the single-matrix families the
// whole block is input-side.
inline int slot_split(const BlockKind& kind, int d) {
    switch (kind.family) {
        case BlockFamily::two_layer_perceptron: return d;
        case BlockFamily::matrix_pre:
        case BlockFamily::matrix_post: return d * d;
        case BlockFamily::attention: return 3 * kind.key_dim * d;  // Wo is output-side
    }
    return 0;
}

inline std::string to_string(BlockFamily f) {
    switch (f) {
        case BlockFamily::two_layer_perceptron: return "2lp";
        case BlockFamily::matrix_pre: return "matrix_pre";
        case BlockFamily::matrix_post: return "matrix_post";
        case BlockFamily::attention: return "attention";
    }
    return "?";
}

inline BlockFamily block_family_from_string(const std::string& s) {
    if (s == "2lp") return BlockFamily::two_layer_perceptron;
    if (s == "matrix_pre") return BlockFamily::matrix_pre;
    if (s == "matrix_post") return BlockFamily::matrix_post;
    if (s == "attention") return BlockFamily::attention;
    throw std::invalid_argument("unknown block family: " + s);
}

namespace detail {

inline void check_unit(const BlockKind& kind, const State& x, const double* z, std::size_t zn) {
    (void)z;
    if (zn != static_cast<std::size_t>(param_size(kind, x.d)))
        throw std::invalid_argument("block: parameter size does not match block kind");
}

// ---- attention forward/backward shared workspace ------------------------
// Recomputes the full attention pipeline for one head. Cold path: small T,
// all scratch allocated per call.
struct AttnWork {
    int d, t, dk;
    std::vector<double> k, q, v;  // dk x T
    std::vector<double> attn;     // T x T, attn[tq*T + ti]
    std::vector<double> ctx;      // dk x T

    AttnWork(const BlockKind& kind, const State& x, const double* z)
        : d(x.d), t(x.t), dk(kind.key_dim),
          k(static_cast<std::size_t>(dk) * t), q(k.size()), v(k.size()),
          attn(static_cast<std::size_t>(t) * t), ctx(k.size()) {
        const double* wk = z;
        const double* wq = z + static_cast<std::size_t>(dk) * d;
        const double* wv = z + 2 * static_cast<std::size_t>(dk) * d;
        for (int tok = 0; tok < t; ++tok) {
            const double* col = x.token(tok);
            for (int a = 0; a < dk; ++a) {
                k[tok * dk + a] = dot(wk + a * d, col, d);
                q[tok * dk + a] = dot(wq + a * d, col, d);
                v[tok * dk + a] = dot(wv + a * d, col, d);
            }
        }
        double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
        for (int tq = 0; tq < t; ++tq) {
            double mx = -1e300;
            for (int ti = 0; ti < t; ++ti) {
                double s = dot(&q[tq * dk], &k[ti * dk], dk) * inv_sqrt;
                attn[tq * t + ti] = s;
                if (s > mx) mx = s;
            }
            double z_norm = 0.0;
            for (int ti = 0; ti < t; ++ti) {
                double e = std::exp(attn[tq * t + ti] - mx);
                attn[tq * t + ti] = e;
                z_norm += e;
            }
            for (int ti = 0; ti < t; ++ti) attn[tq * t + ti] /= z_norm;
            for (int a = 0; a < dk; ++a) {
                double s = 0.0;
                for (int ti = 0; ti < t; ++ti) s += attn[tq * t + ti] * v[ti * dk + a];
                ctx[tq * dk + a] = s;
            }
        }
    }

    // Backward through softmax(QK/sqrt(dk)) V given d(ctx); fills per-matrix
    // cotangents gk,gq,gv (dk x T each).
    void backprop_ctx(const double* gctx, std::vector<double>& gk, std::vector<double>& gq,
                      std::vector<double>& gv) const {
        gk.assign(k.size(), 0.0);
        gq.assign(q.size(), 0.0);
        gv.assign(v.size(), 0.0);
        double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
        std::vector<double> ga(static_cast<std::size_t>(t));
        for (int tq = 0; tq < t; ++tq) {
            for (int ti = 0; ti < t; ++ti) {
                double s = 0.0;
                for (int a = 0; a < dk; ++a) s += gctx[tq * dk + a] * v[ti * dk + a];
                ga[ti] = s;
                for (int a = 0; a < dk; ++a)
                    gv[ti * dk + a] += attn[tq * t + ti] * gctx[tq * dk + a];
            }
            double mean = 0.0;
            for (int ti = 0; ti < t; ++ti) mean += attn[tq * t + ti] * ga[ti];
            for (int ti = 0; ti < t; ++ti) {
                double gs = attn[tq * t + ti] * (ga[ti] - mean) * inv_sqrt;
                for (int a = 0; a < dk; ++a) {
                    gq[tq * dk + a] += gs * k[ti * dk + a];
                    gk[ti * dk + a] += gs * q[tq * dk + a];
                }
            }
        }
    }
};

}  // namespace detail

// out += coef * phi(x, z)
inline void block_apply_accum(const BlockKind& kind, const State& x, const double* z,
                              std::size_t zn, double coef, State& out) {
    detail::check_unit(kind, x, z, zn);
    if (!out.same_shape(x)) throw std::invalid_argument("block_apply: output shape mismatch");
    const int d = x.d;
    switch (kind.family) {
        case BlockFamily::two_layer_perceptron: {
            const double* u = z;
            const double* v = z + d;
            for (int tok = 0; tok < x.t; ++tok) {
                const double* col = x.token(tok);
                double r = coef * rho(kind.act, dot(u, col, d) / d);
                double* o = out.token(tok);
                for (int i = 0; i < d; ++i) o[i] += r * v[i];
            }
            break;
        }
        case BlockFamily::matrix_pre: {
            for (int tok = 0; tok < x.t; ++tok) {
                const double* col = x.token(tok);
                double* o = out.token(tok);
                for (int i = 0; i < d; ++i) {
                    double s = 0.0;
                    const double* row = z + static_cast<std::size_t>(i) * d;
                    for (int e = 0; e < d; ++e) s += row[e] * rho(kind.act, col[e]);
                    o[i] += coef * s;
                }
            }
            break;
        }
        case BlockFamily::matrix_post: {
            for (int tok = 0; tok < x.t; ++tok) {
                const double* col = x.token(tok);
                double* o = out.token(tok);
                for (int i = 0; i < d; ++i) {
                    const double* row = z + static_cast<std::size_t>(i) * d;
                    o[i] += coef * rho(kind.act, dot(row, col, d));
                }
            }
            break;
        }
        case BlockFamily::attention: {
            detail::AttnWork w(kind, x, z);
            const double* wo = z + 3 * static_cast<std::size_t>(kind.key_dim) * d;
            for (int tok = 0; tok < x.t; ++tok) {
                double* o = out.token(tok);
                for (int i = 0; i < d; ++i) {
                    double s = 0.0;
                    for (int a = 0; a < w.dk; ++a) s += wo[a * d + i] * w.ctx[tok * w.dk + a];
                    o[i] += coef * s;
                }
            }
            break;
        }
    }
}

// out += coef * D1phi(x, z)^T w    (state-side vector-Jacobian product)
inline void block_vjp_state_accum(const BlockKind& kind, const State& x, const double* z,
                                  std::size_t zn, const State& w, double coef, State& out) {
    detail::check_unit(kind, x, z, zn);
    if (!w.same_shape(x) || !out.same_shape(x))
        throw std::invalid_argument("block_vjp_state: shape mismatch");
    const int d = x.d;
    switch (kind.family) {
        case BlockFamily::two_layer_perceptron: {
            const double* u = z;
            const double* v = z + d;
            for (int tok = 0; tok < x.t; ++tok) {
                const double* col = x.token(tok);
                const double* wc = w.token(tok);
                double r = coef * rho_prime(kind.act, dot(u, col, d) / d) * dot(v, wc, d) / d;
                double* o = out.token(tok);
                for (int i = 0; i < d; ++i) o[i] += r * u[i];
            }
            break;
        }
        case BlockFamily::matrix_pre: {
            // D1 = W diag(rho'(x));  D1^T w = rho'(x) .* (W^T w)
            for (int tok = 0; tok < x.t; ++tok) {
                const double* col = x.token(tok);
                const double* wc = w.token(tok);
                double* o = out.token(tok);
                for (int e = 0; e < d; ++e) {
                    double s = 0.0;
                    for (int i = 0; i < d; ++i) s += z[static_cast<std::size_t>(i) * d + e] * wc[i];
                    o[e] += coef * rho_prime(kind.act, col[e]) * s;
                }
            }
            break;
        }
        case BlockFamily::matrix_post: {
            // D1 = diag(rho'(Wx)) W;  D1^T w = W^T (rho'(Wx) .* w)
            for (int tok = 0; tok < x.t; ++tok) {
                const double* col = x.token(tok);
                const double* wc = w.token(tok);
                double* o = out.token(tok);
                for (int i = 0; i < d; ++i) {
                    const double* row = z + static_cast<std::size_t>(i) * d;
                    double g = rho_prime(kind.act, dot(row, col, d)) * wc[i];
                    for (int e = 0; e < d; ++e) o[e] += coef * g * row[e];
                }
            }
            break;
        }
        case BlockFamily::attention: {
            detail::AttnWork aw(kind, x, z);
            const int dk = aw.dk;
            const double* wk = z;
            const double* wq = z + static_cast<std::size_t>(dk) * d;
            const double* wv = z + 2 * static_cast<std::size_t>(dk) * d;
            const double* wo = z + 3 * static_cast<std::size_t>(dk) * d;
            // gctx[a,t] = sum_i Wo[a,i] w[i,t]
            std::vector<double> gctx(aw.ctx.size());
            for (int tok = 0; tok < x.t; ++tok) {
                const double* wc = w.token(tok);
                for (int a = 0; a < dk; ++a) gctx[tok * dk + a] = dot(wo + a * d, wc, d);
            }
            std::vector<double> gk, gq, gv;
            aw.backprop_ctx(gctx.data(), gk, gq, gv);
            for (int tok = 0; tok < x.t; ++tok) {
                double* o = out.token(tok);
                for (int a = 0; a < dk; ++a) {
                    double ck = coef * gk[tok * dk + a];
                    double cq = coef * gq[tok * dk + a];
                    double cv = coef * gv[tok * dk + a];
                    const double* rk = wk + a * d;
                    const double* rq = wq + a * d;
                    const double* rv = wv + a * d;
                    for (int i = 0; i < d; ++i) o[i] += ck * rk[i] + cq * rq[i] + cv * rv[i];
                }
            }
            break;
        }
    }
}

// g += D2phi(x, z)^T w    (parameter-side VJP; g has param_size entries)
inline void block_vjp_params_accum(const BlockKind& kind, const State& x, const double* z,
                                   std::size_t zn, const State& w, double* g) {
    detail::check_unit(kind, x, z, zn);
    if (!w.same_shape(x)) throw std::invalid_argument("block_vjp_params: shape mismatch");
    const int d = x.d;
    switch (kind.family) {
        case BlockFamily::two_layer_perceptron: {
            const double* u = z;
            const double* v = z + d;
            double* gu = g;
            double* gv = g + d;
            for (int tok = 0; tok < x.t; ++tok) {
                const double* col = x.token(tok);
                const double* wc = w.token(tok);
                double p = dot(u, col, d) / d;
                double cu = rho_prime(kind.act, p) * dot(v, wc, d) / d;
                double r = rho(kind.act, p);
                for (int i = 0; i < d; ++i) {
                    gu[i] += cu * col[i];
                    gv[i] += r * wc[i];
                }
            }
            break;
        }
        case BlockFamily::matrix_pre: {
            // dphi/dW[i,e] contributes w_i * rho(x_e)
            for (int tok = 0; tok < x.t; ++tok) {
                const double* col = x.token(tok);
                const double* wc = w.token(tok);
                for (int i = 0; i < d; ++i) {
                    double* row = g + static_cast<std::size_t>(i) * d;
                    for (int e = 0; e < d; ++e) row[e] += wc[i] * rho(kind.act, col[e]);
                }
            }
            break;
        }
        case BlockFamily::matrix_post: {
            for (int tok = 0; tok < x.t; ++tok) {
                const double* col = x.token(tok);
                const double* wc = w.token(tok);
                for (int i = 0; i < d; ++i) {
                    const double* zrow = z + static_cast<std::size_t>(i) * d;
                    double c = rho_prime(kind.act, dot(zrow, col, d)) * wc[i];
                    double* row = g + static_cast<std::size_t>(i) * d;
                    for (int e = 0; e < d; ++e) row[e] += c * col[e];
                }
            }
            break;
        }
        case BlockFamily::attention: {
            detail::AttnWork aw(kind, x, z);
            const int dk = aw.dk;
            double* g_wk = g;
            double* g_wq = g + static_cast<std::size_t>(dk) * d;
            double* g_wv = g + 2 * static_cast<std::size_t>(dk) * d;
            double* g_wo = g + 3 * static_cast<std::size_t>(dk) * d;
            std::vector<double> gctx(aw.ctx.size());
            for (int tok = 0; tok < x.t; ++tok) {
                const double* wc = w.token(tok);
                const double* wo = z + 3 * static_cast<std::size_t>(dk) * d;
                for (int a = 0; a < dk; ++a) {
                    gctx[tok * dk + a] = dot(wo + a * d, wc, d);
                    // d(out)/d(Wo[a,i]) = ctx[a,tok] at output coord i
                    for (int i = 0; i < d; ++i) g_wo[a * d + i] += aw.ctx[tok * dk + a] * wc[i];
                }
            }
            std::vector<double> gk, gq, gv;
            aw.backprop_ctx(gctx.data(), gk, gq, gv);
            for (int tok = 0; tok < x.t; ++tok) {
                const double* col = x.token(tok);
                for (int a = 0; a < dk; ++a) {
                    for (int i = 0; i < d; ++i) {
                        g_wk[a * d + i] += gk[tok * dk + a] * col[i];
                        g_wq[a * d + i] += gq[tok * dk + a] * col[i];
                        g_wv[a * d + i] += gv[tok * dk + a] * col[i];
                    }
                }
            }
            break;
        }
    }
}

// ---- value-returning contract surface ------------------------------------

inline State block_apply(const BlockKind& kind, const State& x, const UnitParams& z) {
    State out(x.d, x.t);
    block_apply_accum(kind, x, z.data(), z.size(), 1.0, out);
    return out;
}

inline State block_vjp_state(const BlockKind& kind, const State& x, const UnitParams& z,
                             const State& w) {
    State out(x.d, x.t);
    block_vjp_state_accum(kind, x, z.data(), z.size(), w, 1.0, out);
    return out;
}

inline UnitParams block_vjp_params(const BlockKind& kind, const State& x, const UnitParams& z,
                                   const State& w) {
    UnitParams g(param_size(kind, x.d), 0.0);
    block_vjp_params_accum(kind, x, z.data(), z.size(), w, g.data());
    return g;
}

// Entrywise standard deviations for the two parameter groups.
struct InitScales {
    double sigma_u = 0.0;  // input-side (u / W / Wk,Wq,Wv)
    double sigma_v = 0.0;  // output-side (v / Wo); unused by matrix blocks
};

// iid centered Gaussian unit parameters; each slot group has its own child
// stream so draws for one group are unaffected by the other group's size or
// scale.
inline void block_init_fill(const BlockKind& kind, int d, const SeedPath& seed,
                            const InitScales& scales, double* z) {
    if (!(scales.sigma_u >= 0.0) || !(scales.sigma_v >= 0.0))
        throw std::invalid_argument("block_init: negative scale");
    const int p = param_size(kind, d);
    const int split = slot_split(kind, d);
    gaussian_fill(seed.child(SeedTag::slot, 0), z, static_cast<std::size_t>(split), scales.sigma_u);
    if (p > split)
        gaussian_fill(seed.child(SeedTag::slot, 1), z + split, static_cast<std::size_t>(p - split),
                      scales.sigma_v);
}

inline UnitParams block_init(const BlockKind& kind, int d, const SeedPath& seed,
                             const InitScales& scales) {
    UnitParams z(param_size(kind, d));
    block_init_fill(kind, d, seed, scales, z.data());
    return z;
}

}  // namespace meanode
