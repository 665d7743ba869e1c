#pragma once

// Sobol low-discrepancy sequences, torus shifts and the standard normal
// CDF / inverse CDF. These feed the density estimator's hybrid integrator
// and the GMM's truncated conditional sampler.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <sstream>
#include <string_view>

#include "adc/common.hpp"

namespace adc {

// ---------------------------------------------------------------------------
// Standard normal CDF and inverse CDF
// ---------------------------------------------------------------------------

inline double norm_cdf(double x) {
    return 0.5 * std::erfc(-x * 0.7071067811865475244);
}

// complementary CDF, accurate in the right tail
inline double norm_cdf_c(double x) {
    return 0.5 * std::erfc(x * 0.7071067811865475244);
}

namespace detail {

// Acklam's rational approximation (|err| < 1.15e-9), then one Halley step
// against erfc which brings the result to full double accuracy.
inline double norm_inv_cdf_acklam(double p) {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1 - plow;
    if (p < plow) {
        double q = std::sqrt(-2 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1);
    }
    if (p > phigh) {
        double q = std::sqrt(-2 * std::log(1 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1);
    }
    double q = p - 0.5, r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

}  // namespace detail

inline double norm_inv_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("norm_inv_cdf: p must be in (0,1)");
    double x = detail::norm_inv_cdf_acklam(p);
    // Halley refinement
    double e = norm_cdf(x) - p;
    double u = e * 2.5066282746310002 * std::exp(0.5 * x * x);  // e / phi(x)
    x = x - u / (1 + 0.5 * x * u);
    return x;
}

inline double CounterRng::next_normal() {
    // clamp away from {0,1}; probability ~2^-53 per draw
    double u = next_double();
    u = std::min(std::max(u, 0x1.0p-53), 1.0 - 0x1.0p-53);
    return norm_inv_cdf(u);
}

// ---------------------------------------------------------------------------
// Sobol sequences (Joe-Kuo direction numbers, dims 1..64)
// ---------------------------------------------------------------------------

struct SobolBlock {
    int dim = 0;
    int log2_len = 0;
    std::vector<double> points;  // row-major, 2^log2_len x dim, each coord in [0,1)

    std::size_t size() const { return std::size_t(1) << log2_len; }
    std::span<const double> point(std::size_t i) const {
        return {points.data() + i * std::size_t(dim), std::size_t(dim)};
    }
};

namespace detail {

// One row of the direction-number table: degree s, encoded inner polynomial
// coefficients a, and the s initial odd integers m_i.
struct SobolRow {
    int s = 0;
    std::uint32_t a = 0;
    std::vector<std::uint32_t> m;
};

// Format, one line per dimension d >= 2:  "d s a m_1 ... m_s".
// Dimension 1 is the van der Corput sequence (all m_i = 1) and is implicit.
inline std::vector<SobolRow> parse_direction_table(std::string_view text) {
    std::vector<SobolRow> rows;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        long d = 0;
        SobolRow r;
        ls >> d >> r.s >> r.a;
        if (!ls || d < 2) throw DataError("sobol direction table: bad line: " + line);
        r.m.resize(r.s);
        for (int i = 0; i < r.s; ++i) {
            ls >> r.m[i];
            if (!ls) throw DataError("sobol direction table: truncated m list: " + line);
        }
        if (std::size_t(d - 2) != rows.size())
            throw DataError("sobol direction table: dimensions must be consecutive from 2");
        rows.push_back(std::move(r));
    }
    return rows;
}

inline const char* builtin_direction_table();

inline const std::vector<SobolRow>& builtin_rows() {
    static const std::vector<SobolRow> rows = parse_direction_table(builtin_direction_table());
    return rows;
}

inline constexpr int kSobolBits = 32;

// direction integers v_1..v_kSobolBits for one dimension (0-based index)
inline std::array<std::uint64_t, kSobolBits + 1> sobol_directions(int dim0) {
    std::array<std::uint64_t, kSobolBits + 1> v{};
    if (dim0 == 0) {
        for (int i = 1; i <= kSobolBits; ++i) v[i] = std::uint64_t(1) << (kSobolBits - i);
        return v;
    }
    const auto& rows = builtin_rows();
    const SobolRow& r = rows.at(std::size_t(dim0 - 1));
    const int s = r.s;
    for (int i = 1; i <= kSobolBits; ++i) {
        if (i <= s) {
            v[i] = std::uint64_t(r.m[i - 1]) << (kSobolBits - i);
        } else {
            std::uint64_t x = v[i - s] ^ (v[i - s] >> s);
            for (int k = 1; k < s; ++k)
                if (r.a & (std::uint32_t(1) << (s - 1 - k))) x ^= v[i - k];
            v[i] = x;
        }
    }
    return v;
}

}  // namespace detail

// Deterministic unshifted Sobol block; first point is the origin.
inline SobolBlock sobol(int dim, int log2_len) {
    if (dim < 1 || dim > 64) throw std::invalid_argument("sobol: dim must be in [1,64]");
    if (log2_len < 0 || log2_len > 16) throw std::invalid_argument("sobol: log2_len must be in [0,16]");
    SobolBlock blk;
    blk.dim = dim;
    blk.log2_len = log2_len;
    const std::size_t n = blk.size();
    blk.points.assign(n * dim, 0.0);

    std::vector<std::array<std::uint64_t, detail::kSobolBits + 1>> dirs;
    dirs.reserve(dim);
    for (int j = 0; j < dim; ++j) dirs.push_back(detail::sobol_directions(j));

    std::vector<std::uint64_t> state(dim, 0);
    const double scale = std::ldexp(1.0, -detail::kSobolBits);
    for (std::size_t i = 1; i < n; ++i) {
        int c = std::countr_zero(i) + 1;  // Gray code: flip direction of lowest zero bit of i-1
        for (int j = 0; j < dim; ++j) {
            state[j] ^= dirs[j][c];
            blk.points[i * dim + j] = double(state[j]) * scale;
        }
    }
    return blk;
}

// Componentwise (z + y) mod 1 for every point in the block.
inline SobolBlock torus_shift(const SobolBlock& blk, std::span<const double> y) {
    if (int(y.size()) != blk.dim) throw std::invalid_argument("torus_shift: shift dim mismatch");
    SobolBlock out = blk;
    for (std::size_t i = 0; i < out.size(); ++i)
        for (int j = 0; j < blk.dim; ++j) {
            double v = out.points[i * blk.dim + j] + y[j];
            out.points[i * blk.dim + j] = v - std::floor(v);
        }
    return out;
}

namespace detail {

inline const char* builtin_direction_table() {
    // Joe-Kuo direction numbers, dimensions 2..64. Same content as
    // assets/sobol_direction_numbers.txt.
    return R"(2 1 0 1
3 2 1 1 3
4 3 1 1 3 1
5 3 2 1 1 1
6 4 1 1 1 3 3
7 4 4 1 3 5 13
8 5 2 1 1 5 5 17
9 5 4 1 1 5 5 5
10 5 7 1 1 7 11 19
11 5 11 1 1 5 1 1
12 5 13 1 1 1 3 11
13 5 14 1 3 5 5 31
14 6 1 1 3 3 9 7 49
15 6 13 1 1 1 15 21 21
16 6 16 1 3 1 13 27 49
17 6 19 1 1 1 15 7 5
18 6 22 1 3 1 15 13 25
19 6 25 1 1 5 5 19 61
20 7 1 1 3 7 11 23 15 103
21 7 4 1 3 7 13 13 15 69
22 7 7 1 1 3 13 7 35 63
23 7 8 1 3 5 9 1 25 53
24 7 14 1 3 1 13 9 35 107
25 7 19 1 3 1 5 27 61 31
26 7 21 1 1 5 11 19 41 61
27 7 28 1 3 5 3 3 13 69
28 7 31 1 1 7 13 1 19 1
29 7 32 1 3 7 5 13 19 59
30 7 37 1 1 3 9 25 29 41
31 7 41 1 3 5 13 23 1 55
32 7 42 1 3 7 3 13 59 17
33 7 50 1 3 1 3 5 53 69
34 7 55 1 1 5 5 23 33 13
35 7 56 1 1 7 7 1 61 123
36 7 59 1 1 7 9 13 61 49
37 7 62 1 3 3 5 3 55 33
38 8 14 1 3 1 15 31 13 49 245
39 8 21 1 3 5 15 31 59 63 97
40 8 22 1 3 1 11 11 11 77 249
41 8 38 1 3 1 11 27 43 71 9
42 8 47 1 1 7 15 21 11 81 45
43 8 49 1 3 7 3 25 31 65 79
44 8 50 1 3 1 1 19 11 3 205
45 8 52 1 1 5 9 19 21 29 157
46 8 56 1 3 7 11 1 33 89 185
47 8 67 1 3 3 3 15 9 79 71
48 8 70 1 3 7 11 15 39 119 27
49 8 84 1 1 3 1 11 31 97 225
50 8 97 1 1 1 3 23 43 57 177
51 8 103 1 3 7 7 17 17 37 71
52 8 115 1 3 1 5 27 63 123 213
53 8 122 1 1 3 5 11 43 53 133
54 9 8 1 3 5 5 29 17 47 173 479
55 9 13 1 3 3 11 3 1 109 9 69
56 9 16 1 1 1 5 17 39 23 5 343
57 9 22 1 3 1 5 25 15 31 103 499
58 9 25 1 1 1 11 11 17 63 105 183
59 9 44 1 1 5 11 9 29 97 231 363
60 9 47 1 1 5 15 19 45 41 7 383
61 9 52 1 3 7 7 31 19 83 137 221
62 9 55 1 1 1 3 23 15 111 223 83
63 9 59 1 1 5 13 31 15 55 25 161
64 9 62 1 1 3 13 25 47 39 87 257
)";
}

}  // namespace detail
}  // namespace adc
