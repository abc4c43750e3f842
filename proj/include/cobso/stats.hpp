#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "cobso/errors.hpp"

namespace cobso::stats {

// ---- Special functions ------------------------------------------------------

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

namespace detail {

/// Regularized lower incomplete gamma P(a, x): series for x < a+1, continued
/// fraction otherwise.
inline double gammp(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw ContractError("gammp: bad arguments");
    if (x == 0.0) return 0.0;
    const double gln = std::lgamma(a);
    if (x < a + 1.0) {
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::abs(del) < std::abs(sum) * 1e-15) break;
        }
        return sum * std::exp(-x + a * std::log(x) - gln);
    }
    // Lentz continued fraction for Q(a, x)
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -double(i) * (double(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    const double q = std::exp(-x + a * std::log(x) - gln) * h;
    return 1.0 - q;
}

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
inline double betacf(double a, double b, double x) {
    const double tiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    return h;
}

inline double incbeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    const double front = std::exp(a * std::log(x) + b * std::log(1.0 - x) - lbeta);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

} // namespace detail

/// Upper tail of the chi-square distribution with k degrees of freedom.
inline double chisq_sf(double x, double k) {
    if (x <= 0.0) return 1.0;
    return 1.0 - detail::gammp(0.5 * k, 0.5 * x);
}

/// Upper tail of Student's t with nu degrees of freedom (t >= 0).
inline double student_t_sf(double t, double nu) {
    if (t < 0.0) return 1.0 - student_t_sf(-t, nu);
    return 0.5 * detail::incbeta(0.5 * nu, 0.5, nu / (nu + t * t));
}

// ---- Ranking ----------------------------------------------------------------

/// Average ranks (1-based) with ties sharing their mean rank.
inline std::vector<double> average_ranks(const std::vector<double>& values) {
    const size_t n = values.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t(0));
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = 0.5 * double(i + j) + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

/// Sum of (t^3 - t) over tie groups of the pooled sample.
inline double tie_term(const std::vector<double>& pooled) {
    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    double acc = 0.0;
    size_t i = 0;
    while (i < sorted.size()) {
        size_t j = i;
        while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
        const double t = double(j - i + 1);
        acc += t * t * t - t;
        i = j + 1;
    }
    return acc;
}

// ---- Tests ------------------------------------------------------------------

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::string method;
    std::vector<int> n_per_group;
};

enum class PMode { Auto, Exact, Approx };

namespace detail {

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const size_t n = a.size();
    double ma = 0, mb = 0;
    for (size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= double(n);
    mb /= double(n);
    double sab = 0, saa = 0, sbb = 0;
    for (size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0; // degenerate: constant input
    return sab / std::sqrt(saa * sbb);
}

} // namespace detail

/// Tie-corrected Spearman rank correlation. Exact permutation p for n <= 9
/// (or PMode::Exact), t-approximation otherwise; two-sided.
inline TestResult spearman(const std::vector<double>& xs, const std::vector<double>& ys,
                           PMode mode = PMode::Auto) {
    if (xs.size() != ys.size()) throw ContractError("spearman: length mismatch");
    const size_t n = xs.size();
    if (n < 3) throw ContractError("spearman: need at least 3 pairs");

    const std::vector<double> rx = average_ranks(xs);
    const std::vector<double> ry = average_ranks(ys);
    const double rho = detail::pearson(rx, ry);

    TestResult res;
    res.statistic = rho;
    res.n_per_group = {int(n)};

    const bool exact = mode == PMode::Exact || (mode == PMode::Auto && n <= 9);
    if (exact) {
        // enumerate all n! pairings of the observed rank multisets
        std::vector<size_t> perm(n);
        std::iota(perm.begin(), perm.end(), size_t(0));
        std::vector<double> ry_perm(n);
        size_t hits = 0, total = 0;
        const double threshold = std::abs(rho) - 1e-12;
        do {
            for (size_t i = 0; i < n; ++i) ry_perm[i] = ry[perm[i]];
            if (std::abs(detail::pearson(rx, ry_perm)) >= threshold) ++hits;
            ++total;
        } while (std::next_permutation(perm.begin(), perm.end()));
        res.p_value = double(hits) / double(total);
        res.method = "spearman/exact";
    } else {
        const double denom = std::max(1.0 - rho * rho, 1e-300);
        const double t = rho * std::sqrt(double(n - 2) / denom);
        res.p_value = std::min(1.0, 2.0 * student_t_sf(std::abs(t), double(n - 2)));
        res.method = "spearman/t";
    }
    return res;
}

/// Wilcoxon rank-sum: statistic W = rank sum of the first group. Exact
/// enumeration for pooled n <= 12 (or PMode::Exact), otherwise tie-corrected
/// normal approximation with continuity correction; two-sided.
inline TestResult wilcoxon_rank_sum(const std::vector<double>& a, const std::vector<double>& b,
                                    PMode mode = PMode::Auto) {
    if (a.empty() || b.empty()) throw ContractError("wilcoxon_rank_sum: empty group");
    const size_t na = a.size(), nb = b.size(), n = na + nb;
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::vector<double> ranks = average_ranks(pooled);
    double w = 0.0;
    for (size_t i = 0; i < na; ++i) w += ranks[i];
    const double mu = double(na) * double(n + 1) / 2.0;

    TestResult res;
    res.statistic = w;
    res.n_per_group = {int(na), int(nb)};

    const bool exact = mode == PMode::Exact || (mode == PMode::Auto && n <= 12);
    if (exact && n <= 22) {
        size_t hits = 0, total = 0;
        const double threshold = std::abs(w - mu) - 1e-12;
        for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
            if (std::popcount(mask) != int(na)) continue;
            double ws = 0.0;
            for (size_t i = 0; i < n; ++i)
                if (mask & (1u << i)) ws += ranks[i];
            if (std::abs(ws - mu) >= threshold) ++hits;
            ++total;
        }
        res.p_value = double(hits) / double(total);
        res.method = "wilcoxon_rank_sum/exact";
    } else {
        const double tie = tie_term(pooled);
        double var = double(na) * double(nb) / 12.0 *
                     (double(n + 1) - tie / (double(n) * double(n - 1)));
        if (var <= 0.0) {
            res.p_value = 1.0; // every observation tied
        } else {
            const double z = std::max(0.0, std::abs(w - mu) - 0.5) / std::sqrt(var);
            res.p_value = std::min(1.0, 2.0 * normal_sf(z));
        }
        res.method = "wilcoxon_rank_sum/normal";
    }
    return res;
}

/// Kruskal-Wallis H with tie correction; chi-square upper-tail p with
/// (groups - 1) degrees of freedom. All-tied data yields H = 0 by convention.
inline TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw ContractError("kruskal_wallis: need at least 2 groups");
    std::vector<double> pooled;
    for (const auto& g : groups) {
        if (g.empty()) throw ContractError("kruskal_wallis: empty group");
        pooled.insert(pooled.end(), g.begin(), g.end());
    }
    const size_t n = pooled.size();
    const std::vector<double> ranks = average_ranks(pooled);

    double h = 0.0;
    size_t offset = 0;
    for (const auto& g : groups) {
        double rsum = 0.0;
        for (size_t i = 0; i < g.size(); ++i) rsum += ranks[offset + i];
        h += rsum * rsum / double(g.size());
        offset += g.size();
    }
    h = 12.0 / (double(n) * double(n + 1)) * h - 3.0 * double(n + 1);

    const double correction = 1.0 - tie_term(pooled) / (double(n) * double(n) * double(n) - double(n));
    h = correction > 0.0 ? h / correction : 0.0;
    if (std::abs(h) < 1e-12) h = 0.0;

    TestResult res;
    res.statistic = h;
    res.p_value = chisq_sf(h, double(groups.size() - 1));
    res.method = "kruskal_wallis/chisq";
    for (const auto& g : groups) res.n_per_group.push_back(int(g.size()));
    return res;
}

/// Bonferroni correction: min(1, p * m).
inline double bonferroni(double p, int m) {
    if (m < 1) throw ContractError("bonferroni: m must be >= 1");
    if (p < 0.0 || p > 1.0) throw ContractError("bonferroni: p must lie in [0, 1]");
    return std::min(1.0, p * double(m));
}

} // namespace cobso::stats
