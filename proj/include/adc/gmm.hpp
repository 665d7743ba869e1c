#pragma once

// Diagonal-covariance Gaussian mixture predictor: EM fitting with low-weight
// kernel resampling, hyperrectangle integration, truncated conditional
// sampling, diffusion perturbation and pointwise log density.

#include <iostream>
#include <limits>
#include <optional>

#include "adc/common.hpp"
#include "adc/quasirandom.hpp"
#include "adc/schedule.hpp"

namespace adc {

// Per-attribute closed intervals in normalized coordinates; dimensions
// without a constraint are full-range.
struct QueryBox {
    struct Interval {
        double lo, hi;
    };
    int dim = 0;
    std::vector<std::optional<Interval>> bounds;

    explicit QueryBox(int d) : dim(d), bounds(d) {}

    void constrain(int j, double lo, double hi) {
        if (j < 0 || j >= dim) throw std::invalid_argument("QueryBox: bad attribute index");
        if (!(lo <= hi)) throw std::invalid_argument("QueryBox: lo > hi");
        bounds[j] = Interval{lo, hi};
    }
    bool constrained(int j) const { return bounds[j].has_value(); }
    int n_constrained() const {
        int n = 0;
        for (auto& b : bounds) n += b.has_value();
        return n;
    }
    bool contains(std::span<const double> x) const {
        for (int j = 0; j < dim; ++j)
            if (bounds[j] && !(x[j] >= bounds[j]->lo && x[j] <= bounds[j]->hi)) return false;
        return true;
    }
};

struct Gmm {
    int dim = 0;
    std::vector<double> weights;    // N
    std::vector<double> means;      // N x dim
    std::vector<double> variances;  // N x dim, diagonal entries

    int components() const { return int(weights.size()); }
    std::span<const double> mean(int i) const {
        return {means.data() + std::size_t(i) * dim, std::size_t(dim)};
    }
    std::span<const double> var(int i) const {
        return {variances.data() + std::size_t(i) * dim, std::size_t(dim)};
    }

    void validate() const {
        double s = 0;
        for (double w : weights) {
            if (!(w >= 0)) throw std::invalid_argument("Gmm: negative weight");
            s += w;
        }
        if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("Gmm: weights must sum to 1");
        for (double v : variances)
            if (!(v > 0) || !std::isfinite(v)) throw std::invalid_argument("Gmm: bad variance");
        for (double m : means)
            if (!std::isfinite(m)) throw std::invalid_argument("Gmm: bad mean");
    }
};

inline constexpr double kVarianceFloor = 1e-6;

// log q(x), log-sum-exp stabilized
inline double log_q(const Gmm& g, std::span<const double> x) {
    const int d = g.dim;
    double maxlog = -std::numeric_limits<double>::infinity();
    std::vector<double> logs(g.components());
    for (int i = 0; i < g.components(); ++i) {
        auto mu = g.mean(i);
        auto va = g.var(i);
        double l = std::log(g.weights[i] + 1e-300);
        for (int j = 0; j < d; ++j)
            l -= 0.5 * (sq(x[j] - mu[j]) / va[j] + std::log(2 * M_PI * va[j]));
        logs[i] = l;
        maxlog = std::max(maxlog, l);
    }
    double acc = 0;
    for (double l : logs) acc += std::exp(l - maxlog);
    return maxlog + std::log(acc);
}

namespace detail {

// Phi((hi-mu)/sd) - Phi((lo-mu)/sd), evaluated through the survival function
// on whichever side keeps the difference away from cancellation.
inline double normal_interval_mass(double mu, double sd, double lo, double hi) {
    double a = (lo - mu) / sd, b = (hi - mu) / sd;
    if (a + b > 0) return norm_cdf_c(a) - norm_cdf_c(b);
    return norm_cdf(b) - norm_cdf(a);
}

}  // namespace detail

// per-kernel probability of the box (unconstrained dims contribute 1)
inline double kernel_box_mass(const Gmm& g, int i, const QueryBox& box) {
    auto mu = g.mean(i);
    auto va = g.var(i);
    double m = 1.0;
    for (int j = 0; j < g.dim; ++j) {
        if (!box.bounds[j]) continue;
        m *= detail::normal_interval_mass(mu[j], std::sqrt(va[j]), box.bounds[j]->lo,
                                          box.bounds[j]->hi);
    }
    return m;
}

inline double integrate_box(const Gmm& g, const QueryBox& box) {
    if (box.dim != g.dim) throw std::invalid_argument("integrate_box: dim mismatch");
    double p = 0;
    for (int i = 0; i < g.components(); ++i) p += g.weights[i] * kernel_box_mass(g, i, box);
    return std::min(std::max(p, 0.0), 1.0);
}

// q_t: means y/k(t), variances H/k^2(t) + sigma^2(t)
inline Gmm perturb_gmm(const Gmm& g, const DiffusionSchedule& sched, double t) {
    auto [k, s2] = coeffs(sched, t);
    Gmm out = g;
    for (auto& m : out.means) m /= k;
    for (auto& v : out.variances) v = v / (k * k) + s2;
    return out;
}

// n conditional samples from q(x | x in box), truncated-normal inverse CDF
// per coordinate; component index drawn proportional to w_i * in-box mass.
// Degenerate intervals (lo == hi) condition on the hyperplane: the kernel
// weight uses the density at that coordinate instead of an interval mass.
inline std::vector<double> sample_conditional(const Gmm& g, const QueryBox& box, int n,
                                              std::uint64_t seed) {
    if (box.dim != g.dim) throw std::invalid_argument("sample_conditional: dim mismatch");
    const int d = g.dim;
    std::vector<double> cum(g.components());
    double tot = 0;
    for (int i = 0; i < g.components(); ++i) {
        auto mu = g.mean(i);
        auto va = g.var(i);
        double w = g.weights[i];
        for (int j = 0; j < d; ++j) {
            if (!box.bounds[j]) continue;
            double lo = box.bounds[j]->lo, hi = box.bounds[j]->hi;
            double sd = std::sqrt(va[j]);
            if (hi == lo)
                w *= std::exp(-0.5 * sq((lo - mu[j]) / sd)) / (sd * 2.5066282746310002);
            else
                w *= detail::normal_interval_mass(mu[j], sd, lo, hi);
        }
        tot += w;
        cum[i] = tot;
    }
    if (!(tot > 0))
        throw std::runtime_error(
            "sample_conditional: box has zero mass under q; treat the query as Q = 0");

    std::vector<double> out(std::size_t(n) * d);
    CounterRng rng(seed, 0x636f6e64);
    for (int s = 0; s < n; ++s) {
        double u = rng.next_double() * tot;
        int i = int(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
        i = std::min(i, g.components() - 1);
        auto mu = g.mean(i);
        auto va = g.var(i);
        for (int j = 0; j < d; ++j) {
            double sd = std::sqrt(va[j]);
            double uj = rng.next_double();
            uj = std::min(std::max(uj, 0x1.0p-53), 1.0 - 0x1.0p-53);
            double x;
            if (!box.bounds[j]) {
                x = mu[j] + sd * norm_inv_cdf(uj);
            } else {
                double lo = box.bounds[j]->lo, hi = box.bounds[j]->hi;
                if (hi == lo) {
                    x = lo;
                } else {
                    double a = (lo - mu[j]) / sd, b = (hi - mu[j]) / sd;
                    if (a + b > 0) {
                        // right tail: interpolate survival values
                        double pc = uj * norm_cdf_c(b) + (1 - uj) * norm_cdf_c(a);
                        pc = std::min(std::max(pc, 1e-300), 1.0 - 0x1.0p-53);
                        x = mu[j] - sd * norm_inv_cdf(pc);
                    } else {
                        double p = uj * norm_cdf(b) + (1 - uj) * norm_cdf(a);
                        p = std::min(std::max(p, 1e-300), 1.0 - 0x1.0p-53);
                        x = mu[j] + sd * norm_inv_cdf(p);
                    }
                    x = std::min(std::max(x, lo), hi);
                }
            }
            out[std::size_t(s) * d + j] = x;
        }
    }
    return out;
}

// unconditional sampling = conditional on the all-unconstrained box
inline std::vector<double> sample(const Gmm& g, int n, std::uint64_t seed) {
    return sample_conditional(g, QueryBox(g.dim), n, seed);
}

struct EmOptions {
    int components = 256;
    int iterations = 200;
    std::uint64_t seed = 1;
    double resample_kappa = 0.05;  // stddev of resampled kernels
    int resample_every = 10;
    int restarts = 1;  // best-likelihood selection when > 1
};

struct EmResult {
    Gmm gmm;
    std::vector<double> loglik_trace;     // Eq-(8)-style average log likelihood per iteration
    std::vector<int> resample_iterations; // iterations where kernel resampling ran
};

namespace detail {

inline EmResult em_fit_once(const PointCloud& data, EmOptions opt) {
    const int d = data.dim;
    const std::int64_t M = std::int64_t(data.size());
    int N = opt.components;
    if (N < 1) throw std::invalid_argument("em_fit: components must be >= 1");
    if (N > M) {
        std::cerr << "em_fit: reducing components from " << N << " to " << M
                  << " (data size)\n";
        N = int(M);
    }

    Gmm g;
    g.dim = d;
    g.weights.assign(N, 1.0 / N);
    g.means.resize(std::size_t(N) * d);
    g.variances.resize(std::size_t(N) * d);

    // init: distinct random rows, global per-dimension variance
    CounterRng rng(opt.seed, 0x656d);
    Vec gmean(d, 0.0), gvar(d, 0.0);
    for (std::int64_t i = 0; i < M; ++i)
        for (int j = 0; j < d; ++j) gmean[j] += data.point(i)[j];
    for (int j = 0; j < d; ++j) gmean[j] /= double(M);
    for (std::int64_t i = 0; i < M; ++i)
        for (int j = 0; j < d; ++j) gvar[j] += sq(data.point(i)[j] - gmean[j]);
    for (int j = 0; j < d; ++j) gvar[j] = std::max(gvar[j] / double(M), kVarianceFloor);

    std::vector<std::int64_t> idx(M);
    for (std::int64_t i = 0; i < M; ++i) idx[i] = i;
    for (int i = 0; i < N; ++i) {  // partial Fisher-Yates
        std::int64_t r = i + std::int64_t(rng.next_below(M - i));
        std::swap(idx[i], idx[r]);
        for (int j = 0; j < d; ++j) {
            g.means[std::size_t(i) * d + j] = data.point(idx[i])[j];
            g.variances[std::size_t(i) * d + j] = gvar[j];
        }
    }

    EmResult res;
    const double low_weight = 1.0 / (500.0 * N);
    const int n_chunks = 64;

    // per-chunk accumulators merged in chunk order (deterministic)
    struct Acc {
        std::vector<double> w, mx, mx2;
        double loglik = 0;
        std::vector<double> logq;  // per-point log q, for resampling weights
    };

    std::vector<Acc> accs(n_chunks);
    std::vector<double> point_logq(M);

    for (int it = 0; it < opt.iterations; ++it) {
        for (auto& a : accs) {
            a.w.assign(N, 0.0);
            a.mx.assign(std::size_t(N) * d, 0.0);
            a.mx2.assign(std::size_t(N) * d, 0.0);
            a.loglik = 0;
        }
        // E step
        parallel_chunks(M, n_chunks, [&](int c, std::int64_t lo, std::int64_t hi) {
            Acc& a = accs[c];
            std::vector<double> logs(N);
            for (std::int64_t i = lo; i < hi; ++i) {
                auto x = data.point(i);
                double maxlog = -std::numeric_limits<double>::infinity();
                for (int kk = 0; kk < N; ++kk) {
                    const double* mu = g.means.data() + std::size_t(kk) * d;
                    const double* va = g.variances.data() + std::size_t(kk) * d;
                    double l = std::log(g.weights[kk] + 1e-300);
                    for (int j = 0; j < d; ++j)
                        l -= 0.5 * (sq(x[j] - mu[j]) / va[j] + std::log(2 * M_PI * va[j]));
                    logs[kk] = l;
                    maxlog = std::max(maxlog, l);
                }
                double den = 0;
                for (int kk = 0; kk < N; ++kk) den += std::exp(logs[kk] - maxlog);
                double lq = maxlog + std::log(den);
                point_logq[i] = lq;
                a.loglik += lq;
                for (int kk = 0; kk < N; ++kk) {
                    double r = std::exp(logs[kk] - lq);
                    if (r < 1e-16) continue;
                    a.w[kk] += r;
                    double* mx = a.mx.data() + std::size_t(kk) * d;
                    double* mx2 = a.mx2.data() + std::size_t(kk) * d;
                    for (int j = 0; j < d; ++j) {
                        mx[j] += r * x[j];
                        mx2[j] += r * x[j] * x[j];
                    }
                }
            }
        });

        Vec W(N, 0.0), MX(std::size_t(N) * d, 0.0), MX2(std::size_t(N) * d, 0.0);
        double loglik = 0;
        for (auto& a : accs) {
            loglik += a.loglik;
            for (int kk = 0; kk < N; ++kk) W[kk] += a.w[kk];
            for (std::size_t j = 0; j < MX.size(); ++j) {
                MX[j] += a.mx[j];
                MX2[j] += a.mx2[j];
            }
        }
        res.loglik_trace.push_back(loglik / double(M));

        // M step
        for (int kk = 0; kk < N; ++kk) {
            double wk = W[kk];
            g.weights[kk] = wk / double(M);
            if (wk < 1e-12) continue;  // variance floored below; resampling will recycle it
            for (int j = 0; j < d; ++j) {
                double m = MX[std::size_t(kk) * d + j] / wk;
                double v = MX2[std::size_t(kk) * d + j] / wk - m * m;
                g.means[std::size_t(kk) * d + j] = m;
                g.variances[std::size_t(kk) * d + j] = std::max(v, kVarianceFloor);
            }
        }
        double wsum = 0;
        for (double w : g.weights) wsum += w;
        for (auto& w : g.weights) w /= wsum;

        // every 10th iteration: recycle kernels with weight < 1/(500N)
        if ((it + 1) % opt.resample_every == 0 && it + 1 < opt.iterations) {
            std::vector<int> dead;
            for (int kk = 0; kk < N; ++kk)
                if (g.weights[kk] < low_weight) dead.push_back(kk);
            if (!dead.empty()) {
                res.resample_iterations.push_back(int(res.loglik_trace.size()));
                // draw replacement means from data with prob proportional to 1/q(x_i)
                std::vector<double> cum(M);
                double tot = 0;
                for (std::int64_t i = 0; i < M; ++i) {
                    tot += std::exp(-point_logq[i]);
                    cum[i] = tot;
                }
                for (int kk : dead) {
                    double u = rng.next_double() * tot;
                    std::int64_t i =
                        std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
                    i = std::min(i, M - 1);
                    auto x = data.point(i);
                    g.weights[kk] = low_weight;
                    for (int j = 0; j < d; ++j) {
                        g.means[std::size_t(kk) * d + j] = x[j];
                        g.variances[std::size_t(kk) * d + j] =
                            std::max(sq(opt.resample_kappa), kVarianceFloor);
                    }
                }
                double s = 0;
                for (double w : g.weights) s += w;
                for (auto& w : g.weights) w /= s;
            }
        }
    }
    g.validate();
    res.gmm = std::move(g);
    return res;
}

}  // namespace detail

inline EmResult em_fit(const PointCloud& data, EmOptions opt = {}) {
    if (data.size() == 0) throw std::invalid_argument("em_fit: empty data");
    EmResult best;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(1, opt.restarts); ++r) {
        EmOptions o = opt;
        o.seed = hash_combine(opt.seed, std::uint64_t(r));
        auto res = detail::em_fit_once(data, o);
        if (res.loglik_trace.back() > best_ll) {
            best_ll = res.loglik_trace.back();
            best = std::move(res);
        }
    }
    return best;
}

}  // namespace adc
