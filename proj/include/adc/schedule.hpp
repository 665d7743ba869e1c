#pragma once

// Forward perturbation schemes (VP / VE), closed-form coefficients,
// perturbation sampling, and the exact mixture-score oracle used both as a
// training target ("exact" mode) and as the reference in tests.

#include <limits>

#include "adc/common.hpp"

namespace adc {

enum class Scheme { VP, VE };

// VP: k(t) = e^t,  sigma^2(t) = 1 - e^{-2t}   (alpha = 1, beta = sqrt 2)
// VE: k(t) = 1,    sigma^2(t) = t             (alpha = 0, beta = 1)
// Both satisfy d(sigma^2)/dt = beta^2 - 2*alpha*sigma^2 with sigma^2(0) = 0.
struct DiffusionSchedule {
    Scheme scheme = Scheme::VP;
    double T = 3.0;
    double epsilon = 1.0 / 160.0;  // early-stop time
    double T_trunc = 0.125;        // head/tail split

    DiffusionSchedule() = default;
    DiffusionSchedule(Scheme s, double T_, double eps, double trunc)
        : scheme(s), T(T_), epsilon(eps), T_trunc(trunc) {
        if (!(0 < epsilon && epsilon < T_trunc && T_trunc < T))
            throw std::invalid_argument("DiffusionSchedule: need 0 < epsilon < T_trunc < T");
    }

    double k(double t) const { return scheme == Scheme::VP ? std::exp(t) : 1.0; }
    double sigma2(double t) const {
        return scheme == Scheme::VP ? -std::expm1(-2.0 * t) : t;
    }
    double sigma(double t) const { return std::sqrt(sigma2(t)); }
    double alpha() const { return scheme == Scheme::VP ? 1.0 : 0.0; }
    double beta2() const { return scheme == Scheme::VP ? 2.0 : 1.0; }
};

// (k(t), sigma^2(t)) with domain check
inline std::pair<double, double> coeffs(const DiffusionSchedule& sched, double t) {
    if (!(t >= 0.0 && t <= sched.T)) throw std::domain_error("coeffs: t outside [0, T]");
    return {sched.k(t), sched.sigma2(t)};
}

struct PointCloud {
    int dim = 0;
    std::vector<double> data;  // row-major, n x dim

    PointCloud() = default;
    PointCloud(int d, std::vector<double> rows) : dim(d), data(std::move(rows)) {
        if (dim < 1 || data.empty() || data.size() % dim != 0)
            throw std::invalid_argument("PointCloud: empty or ragged");
        for (double v : data)
            if (!std::isfinite(v)) throw std::invalid_argument("PointCloud: non-finite value");
    }

    std::size_t size() const { return data.size() / std::size_t(dim); }
    std::span<const double> point(std::size_t i) const {
        return {data.data() + i * std::size_t(dim), std::size_t(dim)};
    }
};

// x(t) = x0 / k(t) + sigma(t) * noise
inline Vec perturb(const DiffusionSchedule& sched, double t, std::span<const double> x0,
                   std::span<const double> noise) {
    auto [k, s2] = coeffs(sched, t);
    double s = std::sqrt(s2);
    Vec out(x0.size());
    for (std::size_t j = 0; j < x0.size(); ++j) out[j] = x0[j] / k + s * noise[j];
    return out;
}

// Exact score of p_{t,appr}(x) = (1/N) sum_i N(x_i/k(t), sigma^2(t) I),
// log-sum-exp stabilized. Kernels with responsibility below e^-40 of the
// max are pruned.
inline void mixture_score_into(const DiffusionSchedule& sched, const PointCloud& cloud, double t,
                               std::span<const double> x, std::span<double> out) {
    if (!(t > 0.0 && t <= sched.T))
        throw std::domain_error("mixture_score: t must be in (0, T]");
    const int d = cloud.dim;
    if (int(x.size()) != d) throw std::invalid_argument("mixture_score: dim mismatch");
    const double k = sched.k(t), s2 = sched.sigma2(t);
    const std::size_t n = cloud.size();

    double maxlog = -std::numeric_limits<double>::infinity();
    std::vector<double> logs(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto xi = cloud.point(i);
        double d2 = 0;
        for (int j = 0; j < d; ++j) d2 += sq(x[j] - xi[j] / k);
        logs[i] = -d2 / (2 * s2);
        maxlog = std::max(maxlog, logs[i]);
    }
    double den = 0;
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double l = logs[i] - maxlog;
        if (l < -40.0) continue;
        double w = std::exp(l);
        den += w;
        auto xi = cloud.point(i);
        for (int j = 0; j < d; ++j) out[j] += w * (xi[j] / k - x[j]);
    }
    for (int j = 0; j < d; ++j) out[j] /= den * s2;
}

inline Vec mixture_score(const DiffusionSchedule& sched, const PointCloud& cloud, double t,
                         std::span<const double> x) {
    Vec out(cloud.dim);
    mixture_score_into(sched, cloud, t, x, out);
    return out;
}

// log p_{t,appr}(x); used by the finite-difference oracle in tests
inline double mixture_log_density(const DiffusionSchedule& sched, const PointCloud& cloud,
                                  double t, std::span<const double> x) {
    if (!(t > 0.0 && t <= sched.T))
        throw std::domain_error("mixture_log_density: t must be in (0, T]");
    const int d = cloud.dim;
    const double k = sched.k(t), s2 = sched.sigma2(t);
    const std::size_t n = cloud.size();
    double maxlog = -std::numeric_limits<double>::infinity();
    std::vector<double> logs(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto xi = cloud.point(i);
        double d2 = 0;
        for (int j = 0; j < d; ++j) d2 += sq(x[j] - xi[j] / k);
        logs[i] = -d2 / (2 * s2);
        maxlog = std::max(maxlog, logs[i]);
    }
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += std::exp(logs[i] - maxlog);
    return maxlog + std::log(acc / double(n)) - 0.5 * d * std::log(2 * M_PI * s2);
}

}  // namespace adc
