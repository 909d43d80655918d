#include <doctest.h>

#include <cmath>
#include <vector>

#include "meanode/limit.hpp"

using namespace meanode;

namespace {

TrainConfig base_2lp(int d, int l, int m, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.block = BlockKind::two_layer_perceptron(Activation::tanh);
    cfg.d = d;
    cfg.layers = l;
    cfg.units = m;
    cfg.alpha = 1.0;
    cfg.steps = 0;
    cfg.eta_u = cfg.eta_v = static_cast<double>(d);
    cfg.scales = {std::sqrt(static_cast<double>(d)), std::sqrt(static_cast<double>(d))};
    cfg.seed = seed;
    return cfg;
}

double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = static_cast<int>(xs.size());
    for (int i = 0; i < n; ++i) {
        double lx = std::log(xs[i]), ly = std::log(ys[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("reference surrogate must dominate the compared nets") {
    auto cfg = base_2lp(4, 8, 1, 1);
    Dataset ds = make_dataset(4, 1, 2, 3);
    CHECK_THROWS_AS(build_reference(cfg, ds, 16, 2, 5, {0}, 8, 1), std::invalid_argument);
}

TEST_CASE("untrained reference with zero output scale is the identity at every depth") {
    auto cfg = base_2lp(4, 4, 1, 2);
    cfg.scales.sigma_v = 0.0;
    Dataset ds = make_dataset(4, 1, 2, 3);
    auto ref = build_reference(cfg, ds, 64, 4, 5, {0}, 16, 1);
    auto f = query_limit_fields(ref, 0, ds.x[0], ds.y[0]);
    for (const auto& h : f.h.h)
        for (std::size_t i = 0; i < h.size(); ++i) CHECK(h.a[i] == ds.x[0].a[i]);
    // adjoint field is constant in depth for the identity map
    for (const auto& b : f.b)
        for (std::size_t i = 0; i < b.size(); ++i) CHECK(b.a[i] == f.b.back().a[i]);
}

TEST_CASE("limit fields at depth one match the surrogate's own output and loss gradient") {
    auto cfg = base_2lp(5, 16, 2, 7);
    cfg.steps = 3;
    cfg.snapshots = {0, 3};
    Dataset ds = make_dataset(5, 1, 3, 11);
    auto ref = build_reference(cfg, ds, 64, 2, 9, {0, 3}, 8, 1);
    auto f = query_limit_fields(ref, 3, ds.x[1], ds.y[1]);
    auto tr = forward_pass(ref.run.at(3), ds.x[1], cfg.alpha);
    State w = loss_gradient(ds.loss, tr.output(), ds.y[1]);
    CHECK(f.h.output().a == tr.output().a);
    CHECK(f.b.back().a == w.a);
    CHECK(ref.grid_index(1.0) == 64);

    CHECK_THROWS_AS(query_limit_fields(ref, 2, ds.x[0], ds.y[0]), std::invalid_argument);
}

TEST_CASE("tracers start bit-identical to the finite net and stay put without signal") {
    auto cfg = base_2lp(4, 8, 1, 13);
    Dataset ds = make_dataset(4, 1, 2, 17);
    NetParams net = init_net(cfg);
    TracerSet tracers = make_tracers(net, cfg);
    CHECK(tracers.z == net.w);

    // zero loss gradient at the reference output: targets equal the outputs
    auto ref0 = build_reference(cfg, ds, 32, 8, 19, {0}, 8, 1);
    Dataset fitted = ds;
    for (int i = 0; i < ds.n; ++i)
        fitted.y[i] = forward_pass(ref0.run.at(0), ds.x[i], cfg.alpha).output();
    auto ref = build_reference(cfg, fitted, 32, 8, 19, {0}, 8, 1);
    auto before = tracers.z;
    evolve_tracers(tracers, ref, cfg, 1);
    CHECK(tracers.z == before);
    CHECK(tracers.k == 1);
}

TEST_CASE("a single tracer update equals the hand-evaluated gradient map") {
    auto cfg = base_2lp(3, 4, 1, 23);
    cfg.block.act = Activation::identity;
    cfg.scales = {1.0, 0.5};
    cfg.eta_u = 0.3;
    cfg.eta_v = 0.9;
    cfg.alpha = 1.5;
    Dataset ds = make_dataset(3, 1, 1, 29);

    auto ref = build_reference(cfg, ds, 64, 1, 31, {0}, 4, 1);
    NetParams net = init_net(cfg);
    TracerSet tracers = make_tracers(net, cfg);
    std::vector<double> z0(tracers.unit(2, 0), tracers.unit(2, 0) + 6);

    evolve_tracers(tracers, ref, cfg, 1);

    // tracer for layer index 2 sits at depth s = 2/4
    auto f = query_limit_fields(ref, 0, ds.x[0], ds.y[0]);
    int gi = ref.grid_index(2.0 / 4.0);
    const State& h = f.h.h[gi];
    const State& b = f.b[gi];
    double p = dot(z0.data(), h.a.data(), 3) / 3.0;
    double vb = dot(z0.data() + 3, b.a.data(), 3);
    for (int i = 0; i < 3; ++i) {
        double gu = vb / 3.0 * h.a[i];  // identity activation: rho' = 1
        double gv = p * b.a[i];
        CHECK(tracers.unit(2, 0)[i] ==
              doctest::Approx(z0[i] - cfg.eta_u * cfg.alpha * gu).epsilon(1e-13));
        CHECK(tracers.unit(2, 0)[3 + i] ==
              doctest::Approx(z0[3 + i] - cfg.eta_v * cfg.alpha * gv).epsilon(1e-13));
    }
}

TEST_CASE("pathwise coupling error shrinks as the finite net deepens") {
    const int d = 4, steps = 5;
    auto cfg = base_2lp(d, 1, 1, 0);
    cfg.steps = steps;
    Dataset ds = make_dataset(d, 1, 4, 37);
    auto ref = build_reference(cfg, ds, 128, 8, 41, {0, 1, 2, 3, 4}, 64, 2);
    std::vector<RefFields> fields;
    for (int k = 0; k < steps; ++k) fields.push_back(compute_reference_fields(ref, k, 2));

    auto coupling_error = [&](int l, std::uint64_t seed) {
        auto fc = cfg;
        fc.layers = l;
        fc.seed = seed;
        fc.snapshots = {steps};
        auto run = train(fc, ds, 2);
        NetParams net0 = init_net(fc);
        TracerSet tracers = make_tracers(net0, fc);
        for (int k = 0; k < steps; ++k) evolve_tracers(tracers, fields[k], ref, fc, 2);
        const NetParams& fin = run.at(steps);
        double worst = 0.0;
        for (int ll = 0; ll < l; ++ll) {
            double s = 0.0;
            for (int q = 0; q < fin.p; ++q) {
                double e = fin.unit(ll, 0)[q] - tracers.unit(ll, 0)[q];
                s += e * e;
            }
            worst = std::max(worst, std::sqrt(s));
        }
        return worst;
    };

    int wins = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed)
        if (coupling_error(64, seed) < coupling_error(16, seed)) ++wins;
    CHECK(wins >= 2);
}

TEST_CASE("with a deterministic init the depth error decays like 1/L") {
    // softplus keeps the zero-parameter dynamics non-degenerate (rho(0) > 0)
    auto cfg = base_2lp(4, 1, 1, 0);
    cfg.block.act = Activation::softplus;
    cfg.scales = {0.0, 0.0};
    cfg.steps = 5;
    cfg.eta_u = cfg.eta_v = 4.0;
    Dataset ds = make_dataset(4, 1, 4, 43);
    auto ref = build_reference(cfg, ds, 1024, 1, 47, {5}, 64, 2);

    std::vector<double> ls = {8, 16, 32, 64}, errs;
    for (double l : ls) {
        auto fc = cfg;
        fc.layers = static_cast<int>(l);
        fc.snapshots = {5};
        auto run = train(fc, ds, 2);
        double acc = 0.0;
        for (int i = 0; i < ds.n; ++i) {
            auto hf = forward_pass(run.at(5), ds.x[i], cfg.alpha);
            auto hr = forward_pass(ref.run.at(5), ds.x[i], cfg.alpha);
            acc += rms_distance(hf.output(), hr.output());
        }
        errs.push_back(acc / ds.n);
    }
    double slope = loglog_slope(ls, errs);
    CHECK(slope > -1.1);
    CHECK(slope < -0.9);
}

TEST_CASE("tangent forward with zero displacement is the identity") {
    auto cfg = base_2lp(5, 6, 2, 53);
    NetParams z0 = init_net(cfg);
    std::vector<double> zeta(z0.w.size(), 0.0);
    State x(5, 1);
    gaussian_fill(SeedPath(59).child(SeedTag::input, 0), x.a.data(), x.size(), 1.0);
    auto tr = lazy_forward(z0, zeta, x);
    for (const auto& h : tr.h)
        for (std::size_t i = 0; i < h.size(); ++i) CHECK(h.a[i] == x.a[i]);
}

TEST_CASE("tangent drift equals the directional derivative of the block in z") {
    auto cfg = base_2lp(5, 1, 1, 61);
    NetParams z0 = init_net(cfg);
    std::vector<double> zeta =
        gaussian_sample(SeedPath(67).child(SeedTag::slot, 0), z0.w.size(), 1.0);
    State x(5, 1);
    gaussian_fill(SeedPath(71).child(SeedTag::input, 0), x.a.data(), x.size(), 1.0);

    // single layer, single unit: increment = D2phi(x, z0) zeta / (LM)
    auto tr = lazy_forward(z0, zeta, x);
    const double eps = 1e-6;
    UnitParams zp(z0.w.begin(), z0.w.end()), zm = zp;
    for (std::size_t q = 0; q < zp.size(); ++q) {
        zp[q] += eps * zeta[q];
        zm[q] -= eps * zeta[q];
    }
    State fp = block_apply(cfg.block, x, zp);
    State fm = block_apply(cfg.block, x, zm);
    for (int i = 0; i < 5; ++i) {
        double fd = (fp.a[i] - fm.a[i]) / (2.0 * eps);
        CHECK(tr.h[1].a[i] - x.a[i] == doctest::Approx(fd).epsilon(1e-5));
    }

    // doubling zeta doubles the first increment exactly
    std::vector<double> zeta2 = zeta;
    for (auto& v : zeta2) v *= 2.0;
    auto tr2 = lazy_forward(z0, zeta2, x);
    for (int i = 0; i < 5; ++i)
        CHECK(tr2.h[1].a[i] - x.a[i] ==
              doctest::Approx(2.0 * (tr.h[1].a[i] - x.a[i])).epsilon(1e-13));
}

TEST_CASE("tangent backward is the exact adjoint of the tangent forward") {
    auto cfg = base_2lp(4, 5, 2, 73);
    NetParams z0 = init_net(cfg);
    std::vector<double> zeta =
        gaussian_sample(SeedPath(79).child(SeedTag::slot, 0), z0.w.size(), 0.8);
    State x(4, 1), w(4, 1), delta(4, 1);
    gaussian_fill(SeedPath(83).child(SeedTag::input, 0), x.a.data(), x.size(), 1.0);
    gaussian_fill(SeedPath(83).child(SeedTag::input, 1), w.a.data(), w.size(), 1.0);
    gaussian_fill(SeedPath(83).child(SeedTag::input, 2), delta.a.data(), delta.size(), 1.0);

    auto tr = lazy_forward(z0, zeta, x);
    auto b = lazy_backward(z0, zeta, tr, w);

    const double eps = 1e-6;
    State xp = x, xm = x;
    axpy(eps, delta, xp);
    axpy(-eps, delta, xm);
    auto trp = lazy_forward(z0, zeta, xp);
    auto trm = lazy_forward(z0, zeta, xm);
    double lhs = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
        lhs += w.a[i] * (trp.output().a[i] - trm.output().a[i]);
    lhs /= 2.0 * eps;
    double rhs = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) rhs += b[0].a[i] * delta.a[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-6));
}

TEST_CASE("tangent training gradient matches finite differences of the tangent loss") {
    auto cfg = base_2lp(4, 3, 2, 89);
    cfg.scales = {1.0, 1.0};
    cfg.steps = 1;
    cfg.eta_u = cfg.eta_v = 1.0;
    Dataset ds = make_dataset(4, 1, 2, 97);
    NetParams z0 = init_net(cfg);
    std::vector<double> zeta =
        gaussian_sample(SeedPath(101).child(SeedTag::slot, 0), z0.w.size(), 0.5);

    auto lazy_loss = [&](const std::vector<double>& zt) {
        double s = 0.0;
        for (int i = 0; i < ds.n; ++i)
            s += loss_value(ds.loss, lazy_forward(z0, zt, ds.x[i]).output(), ds.y[i]);
        return s / ds.n;
    };

    // analytic gradient of the tangent batch loss
    std::vector<double> grad(zeta.size(), 0.0);
    for (int i = 0; i < ds.n; ++i) {
        auto tr = lazy_forward(z0, zeta, ds.x[i]);
        auto b = lazy_backward(z0, zeta, tr, loss_gradient(ds.loss, tr.output(), ds.y[i]));
        for (int l = 0; l < cfg.layers; ++l)
            for (int j = 0; j < cfg.units; ++j) {
                std::size_t off = (static_cast<std::size_t>(l) * cfg.units + j) * z0.p;
                std::vector<double> g(static_cast<std::size_t>(z0.p), 0.0);
                detail::lazy_vjp_zeta_accum(cfg.block.act, cfg.d, tr.h[l], z0.w.data() + off,
                                            b[l + 1], g.data());
                double f = 1.0 / (static_cast<double>(cfg.layers) * cfg.units * ds.n);
                for (int q = 0; q < z0.p; ++q) grad[off + q] += f * g[static_cast<std::size_t>(q)];
            }
    }

    double gscale = 0.0;
    for (double v : grad) gscale = std::max(gscale, std::abs(v));
    const double eps = 1e-6;
    double worst = 0.0;
    for (std::size_t q = 0; q < zeta.size(); ++q) {
        double keep = zeta[q];
        zeta[q] = keep + eps;
        double fp = lazy_loss(zeta);
        zeta[q] = keep - eps;
        double fm = lazy_loss(zeta);
        zeta[q] = keep;
        double fd = (fp - fm) / (2.0 * eps);
        double denom = std::max({std::abs(fd), std::abs(grad[q]), 0.01 * gscale, 1e-12});
        worst = std::max(worst, std::abs(fd - grad[q]) / denom);
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("tangent training from zero steps keeps zeta at zero") {
    auto cfg = base_2lp(4, 4, 1, 103);
    cfg.steps = 0;
    cfg.snapshots = {0};
    Dataset ds = make_dataset(4, 1, 2, 107);
    auto res = train_lazy(cfg, ds);
    for (double v : res.zeta_at(0)) CHECK(v == 0.0);
    CHECK(res.loss_log.size() == 1);

    auto bad = cfg;
    bad.block = BlockKind::matrix_pre(Activation::tanh);
    bad.scales = {0.5, 0.0};
    CHECK_THROWS_AS(train_lazy(bad, ds), ConfigError);
}

TEST_CASE("parameter displacement shrinks like one over the residual multiplier") {
    const int d = 6;
    const double eta0 = static_cast<double>(d);
    Dataset ds = make_dataset(d, 1, 4, 109);
    std::vector<double> alphas = {2, 4, 8, 16}, disp;
    for (double a : alphas) {
        auto cfg = base_2lp(d, 32, 2, 113);
        cfg.alpha = a;
        cfg.scales = {1.0, 1.0};
        cfg.eta_u = cfg.eta_v = eta0 / (a * a);
        cfg.steps = 5;
        cfg.snapshots = {0, 5};
        auto run = train(cfg, ds, 2);
        const auto& w0 = run.at(0).w;
        const auto& wk = run.at(5).w;
        double s = 0.0;
        for (std::size_t q = 0; q < w0.size(); ++q) {
            double e = wk[q] - w0[q];
            s += e * e;
        }
        disp.push_back(std::sqrt(s / w0.size()));
    }
    for (std::size_t i = 1; i < disp.size(); ++i) {
        double ratio = disp[i] / disp[i - 1];  // ideal 1/2
        CHECK(ratio > 0.25);
        CHECK(ratio < 1.0);
    }
}

TEST_CASE("two surrogate resolutions agree more closely than the nets they resolve") {
    // shrinking-surrogate self-consistency: the distance between a 256x16 and
    // a 512x32 surrogate after a full training run must sit below the error
    // of the finite nets being measured against them
    TrainConfig base = base_2lp(10, 1, 1, 1);
    base.steps = 100;
    Dataset ds = make_dataset(10, 1, 10, 1009);
    auto ref_small = build_reference(base, ds, 256, 16, 424243, {100}, 64, 2);
    auto ref_big = build_reference(base, ds, 512, 32, 424243, {100}, 64, 2);

    TrainConfig fc = base;
    fc.layers = 64;
    fc.units = 1;
    fc.seed = 5;
    fc.snapshots = {100};
    auto run = train(fc, ds, 2);

    double between_refs = 0.0, finite_err = 0.0;
    for (int i = 0; i < ds.n; ++i) {
        auto hs = forward_pass(ref_small.run.at(100), ds.x[i], 1.0);
        auto hb = forward_pass(ref_big.run.at(100), ds.x[i], 1.0);
        auto hf = forward_pass(run.at(100), ds.x[i], 1.0);
        between_refs += rms_distance(hs.output(), hb.output());
        finite_err += rms_distance(hf.output(), hb.output());
    }
    between_refs /= ds.n;
    finite_err /= ds.n;
    CHECK(between_refs < finite_err);
}

TEST_CASE("frozen learning rates keep tracers glued to the finite net") {
    auto cfg = base_2lp(4, 12, 1, 131);
    cfg.eta_u = cfg.eta_v = 0.0;
    cfg.steps = 4;
    cfg.snapshots = {0, 1, 2, 3, 4};
    Dataset ds = make_dataset(4, 1, 3, 137);
    auto run = train(cfg, ds, 1);
    auto ref = build_reference(cfg, ds, 64, 4, 139, {0, 1, 2, 3}, 12, 1);
    TracerSet tracers = make_tracers(init_net(cfg), cfg);
    for (int k = 0; k < 4; ++k) {
        evolve_tracers(tracers, ref, cfg, 1);
        const NetParams& fin = run.at(k + 1);
        CHECK(fin.w == tracers.z);
    }
}
