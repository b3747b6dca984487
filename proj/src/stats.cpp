#include "sparseft/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sparseft {

double mean(const std::vector<double>& v) {
    if (v.empty()) throw EmptyData("mean of empty vector");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::vector<double> average_ranks(const std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (v[static_cast<std::size_t>(a)] != v[static_cast<std::size_t>(b)])
            return v[static_cast<std::size_t>(a)] < v[static_cast<std::size_t>(b)];
        return a < b;
    });
    std::vector<double> ranks(static_cast<std::size_t>(n), 0.0);
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n &&
               v[static_cast<std::size_t>(order[static_cast<std::size_t>(j + 1)])] ==
                   v[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]) {
            ++j;
        }
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (int t = i; t <= j; ++t) ranks[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])] = r;
        i = j + 1;
    }
    return ranks;
}

namespace {

double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double betainc(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double dof) {
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    const double x = dof / (dof + t * t);
    const double tail = 0.5 * betainc(0.5 * dof, 0.5, x);
    return t >= 0.0 ? 1.0 - tail : tail;
}

SpearmanResult spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw LengthMismatch("spearman: input lengths differ");
    const int n = static_cast<int>(a.size());
    if (n < 3) throw TooShort("spearman: need at least 3 pairs");

    const std::vector<double> ra = average_ranks(a);
    const std::vector<double> rb = average_ranks(b);
    const double ma = mean(ra);
    const double mb = mean(rb);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (int i = 0; i < n; ++i) {
        const double da = ra[static_cast<std::size_t>(i)] - ma;
        const double db = rb[static_cast<std::size_t>(i)] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }

    SpearmanResult out;
    if (va == 0.0 || vb == 0.0) {
        // a constant rank vector carries no ordering information
        out.rho = 0.0;
        out.p_value = 1.0;
        return out;
    }
    out.rho = cov / std::sqrt(va * vb);
    const double r = std::clamp(out.rho, -1.0, 1.0);
    if (std::fabs(r) >= 1.0) {
        out.p_value = 0.0;
        return out;
    }
    const double dof = n - 2;
    const double t = r * std::sqrt(dof / (1.0 - r * r));
    out.p_value = 2.0 * (1.0 - student_t_cdf(std::fabs(t), dof));
    return out;
}

TTestResult welch_ttest(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) throw TooShort("welch_ttest: need >= 2 samples per group");
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double ma = mean(a);
    const double mb = mean(b);
    const double sa = sample_std(a);
    const double sb = sample_std(b);
    const double va = sa * sa / na;
    const double vb = sb * sb / nb;

    TTestResult out;
    const double se2 = va + vb;
    if (se2 == 0.0) {
        out.t = ma == mb ? 0.0 : (ma > mb ? std::numeric_limits<double>::infinity()
                                          : -std::numeric_limits<double>::infinity());
        out.p_value = ma == mb ? 1.0 : 0.0;
        out.dof = na + nb - 2.0;
        return out;
    }
    out.t = (ma - mb) / std::sqrt(se2);
    out.dof = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    out.p_value = 2.0 * (1.0 - student_t_cdf(std::fabs(out.t), out.dof));
    return out;
}

}  // namespace sparseft
