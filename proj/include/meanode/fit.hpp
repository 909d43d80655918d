#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace meanode {

// Parametric error-rate models fitted to sweep measurements.
enum class RateModel {
    depth_width,  // a/L + b/sqrt(LM)
    fluctuation,  // (a*alpha*sqrt(D) + b*sqrt(D) + c) / sqrt(LM)
    laziness,     // a*min(1, 1/alpha)
};

inline std::string to_string(RateModel m) {
    switch (m) {
        case RateModel::depth_width: return "a/L + b/sqrt(LM)";
        case RateModel::fluctuation: return "(a*alpha*sqrt(D) + b*sqrt(D) + c)/sqrt(LM)";
        case RateModel::laziness: return "a*min(1, 1/alpha)";
    }
    return "?";
}

struct RateFit {
    RateModel model = RateModel::depth_width;
    std::vector<double> coef;
    double residual_norm = 0.0;
    double r2 = 0.0;
};

namespace detail {

// Solves the normal equations for the column subset `cols` of X; returns
// false when the subsystem is numerically singular.
inline bool solve_ls_subset(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
                            const std::vector<int>& cols, std::vector<double>& beta) {
    const int k = static_cast<int>(cols.size());
    const int n = static_cast<int>(y.size());
    std::vector<std::vector<double>> a(k, std::vector<double>(k + 1, 0.0));
    for (int r = 0; r < k; ++r) {
        for (int c = 0; c < k; ++c) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += X[i][cols[r]] * X[i][cols[c]];
            a[r][c] = s;
        }
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += X[i][cols[r]] * y[i];
        a[r][k] = s;
    }
    // Gaussian elimination with partial pivoting
    for (int c = 0; c < k; ++c) {
        int piv = c;
        for (int r = c + 1; r < k; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        if (std::abs(a[piv][c]) < 1e-300) return false;
        std::swap(a[c], a[piv]);
        for (int r = 0; r < k; ++r) {
            if (r == c) continue;
            double f = a[r][c] / a[c][c];
            for (int cc = c; cc <= k; ++cc) a[r][cc] -= f * a[c][cc];
        }
    }
    beta.assign(cols.size(), 0.0);
    for (int c = 0; c < k; ++c) beta[c] = a[c][k] / a[c][c];
    return true;
}

inline double sse_for(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
                      const std::vector<double>& beta) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        double pred = 0.0;
        for (std::size_t c = 0; c < beta.size(); ++c) pred += beta[c] * X[i][c];
        double e = y[i] - pred;
        s += e * e;
    }
    return s;
}

}  // namespace detail

// Nonnegative least squares by exhaustive support enumeration; exact for the
// small coefficient counts used here (at most 3).
inline std::vector<double> nnls(const std::vector<std::vector<double>>& X,
                                const std::vector<double>& y) {
    if (X.empty()) throw std::invalid_argument("nnls: no data");
    const int p = static_cast<int>(X[0].size());
    if (p > 16) throw std::invalid_argument("nnls: too many coefficients");
    bool any = false;
    std::vector<double> best(p, 0.0);
    double best_sse = detail::sse_for(X, y, best);
    for (int mask = 1; mask < (1 << p); ++mask) {
        std::vector<int> cols;
        for (int c = 0; c < p; ++c)
            if (mask & (1 << c)) cols.push_back(c);
        std::vector<double> beta;
        if (!detail::solve_ls_subset(X, y, cols, beta)) continue;
        any = true;
        bool nonneg = true;
        for (double b : beta)
            if (b < 0.0) nonneg = false;
        if (!nonneg) continue;
        std::vector<double> full(p, 0.0);
        for (std::size_t c = 0; c < cols.size(); ++c) full[cols[c]] = beta[c];
        double sse = detail::sse_for(X, y, full);
        if (sse < best_sse) {
            best_sse = sse;
            best = full;
        }
    }
    if (!any) throw std::invalid_argument("nnls: degenerate design matrix");
    return best;
}

// One observation for rate fitting: the run's shape plus the measured value.
struct RatePoint {
    double l = 1, m = 1, d = 1, alpha = 1;
    double value = 0.0;
};

inline std::vector<double> rate_features(RateModel model, const RatePoint& pt) {
    switch (model) {
        case RateModel::depth_width: return {1.0 / pt.l, 1.0 / std::sqrt(pt.l * pt.m)};
        case RateModel::fluctuation: {
            double inv = 1.0 / std::sqrt(pt.l * pt.m);
            double sd = std::sqrt(pt.d);
            return {pt.alpha * sd * inv, sd * inv, inv};
        }
        case RateModel::laziness: return {std::min(1.0, 1.0 / pt.alpha)};
    }
    return {};
}

inline double rate_eval(const RateFit& fit, const RatePoint& pt) {
    auto f = rate_features(fit.model, pt);
    double s = 0.0;
    for (std::size_t c = 0; c < f.size(); ++c) s += fit.coef[c] * f[c];
    return s;
}

inline RateFit fit_rate(const std::vector<RatePoint>& pts, RateModel model) {
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (const auto& pt : pts) {
        if (!std::isfinite(pt.value)) continue;
        X.push_back(rate_features(model, pt));
        y.push_back(pt.value);
    }
    if (X.empty()) throw std::invalid_argument("fit_rate: no usable data points");
    std::size_t ncoef = X[0].size();
    if (y.size() < ncoef + 1)
        throw std::invalid_argument("fit_rate: need at least #coefficients + 1 data points");

    RateFit fit;
    fit.model = model;
    fit.coef = nnls(X, y);
    double sse = detail::sse_for(X, y, fit.coef);
    fit.residual_norm = std::sqrt(sse);
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double sst = 0.0;
    for (double v : y) sst += (v - mean) * (v - mean);
    fit.r2 = sst > 0.0 ? 1.0 - sse / sst : (sse == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity());
    return fit;
}

// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("loglog_slope: need at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = static_cast<int>(xs.size());
    for (int i = 0; i < n; ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0))
            throw std::invalid_argument("loglog_slope: nonpositive data");
        double lx = std::log(xs[i]), ly = std::log(ys[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace meanode
