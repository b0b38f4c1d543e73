#pragma once

// Deliberately naive reference implementations. They share no code with the
// library and trade speed for obviousness.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

inline int bin_of(double v, int bins)
{
    int b = int(std::floor(v * bins));
    if (b < 0)
        b = 0;
    if (b > bins - 1)
        b = bins - 1;
    return b;
}

/// Bayes rule over normalized class histograms; the prior when neither class saw the colour.
inline double posterior(const std::vector<std::uint64_t>& skin, const std::vector<std::uint64_t>& nonskin,
                        std::uint64_t n_skin, std::uint64_t n_nonskin, std::array<double, 3> rgb, int bins,
                        double prior_skin = 0.5, double prior_nonskin = 0.5)
{
    const std::size_t cell = std::size_t(bin_of(rgb[0], bins)) + std::size_t(bins) * std::size_t(bin_of(rgb[1], bins)) +
                             std::size_t(bins) * std::size_t(bins) * std::size_t(bin_of(rgb[2], bins));
    const double like_s = double(skin[cell]) / double(n_skin);
    const double like_ns = double(nonskin[cell]) / double(n_nonskin);
    const double num = prior_skin * like_s;
    const double den = num + prior_nonskin * like_ns;
    if (den == 0.0)
        return prior_skin;
    return num / den;
}

/// Average ranks of |d| (1-based), by counting.
inline std::vector<double> average_ranks(const std::vector<double>& d)
{
    std::vector<double> r(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        double less = 0, equal = 0;
        for (std::size_t j = 0; j < d.size(); ++j) {
            if (std::abs(d[j]) < std::abs(d[i]))
                less += 1;
            else if (std::abs(d[j]) == std::abs(d[i]))
                equal += 1;
        }
        r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
}

struct Enumerated {
    double w_plus = 0;
    double w_minus = 0;
    double p = 1;
    std::size_t n = 0;
};

/// Two-tailed signed-rank p by listing all 2^n sign assignments of the nonzero
/// differences: the share of assignments whose min(W+, W-) is at most the observed one.
inline Enumerated wilcoxon_enumerate(const std::vector<double>& a, const std::vector<double>& b)
{
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] - b[i] != 0.0)
            d.push_back(a[i] - b[i]);
    Enumerated e;
    e.n = d.size();
    if (d.empty())
        return e;
    const auto ranks = average_ranks(d);
    for (std::size_t i = 0; i < d.size(); ++i)
        (d[i] > 0 ? e.w_plus : e.w_minus) += ranks[i];
    const double observed = std::min(e.w_plus, e.w_minus);
    std::uint64_t hits = 0;
    const std::uint64_t patterns = std::uint64_t(1) << d.size();
    for (std::uint64_t m = 0; m < patterns; ++m) {
        double wp = 0, wm = 0;
        for (std::size_t i = 0; i < d.size(); ++i)
            ((m >> i) & 1 ? wp : wm) += ranks[i];
        if (std::min(wp, wm) <= observed + 1e-9)
            ++hits;
    }
    e.p = double(hits) / double(patterns);
    return e;
}

/// 1 when strictly more than half of the values reach the threshold.
inline double majority(const std::vector<double>& values, double threshold)
{
    int yes = 0;
    for (double v : values)
        if (v >= threshold)
            ++yes;
    return 2 * yes > int(values.size()) ? 1.0 : 0.0;
}

}  // namespace oracle
