#include "mammofl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "mammofl/errors.hpp"

namespace mammofl::stats {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Regularized incomplete beta I_x(a,b) by Lentz's continued fraction.
double betacf(double a, double b, double x) {
    const double eps = 3e-16, fpmin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

double incbeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

/// Two-sided p for Student's t with df degrees of freedom.
double t_two_sided(double t, double df) {
    const double x = df / (df + t * t);
    return incbeta(df / 2.0, 0.5, x);
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::size_t n = xs.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw StatsError("correlation of a constant vector is undefined");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double dice(const BinaryMask& x, const BinaryMask& y) {
    if (x.width != y.width || x.height != y.height)
        throw ConfigError("dice on masks with different dimensions");
    std::int64_t inter = 0, total = 0;
    for (std::size_t i = 0; i < x.bits.size(); ++i) {
        inter += x.bits[i] & y.bits[i];
        total += x.bits[i] + y.bits[i];
    }
    if (total == 0) return 1.0;  // agreement on emptiness
    return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

MeanStd mean_std(const std::vector<double>& values) {
    if (values.empty()) throw StatsError("mean of an empty sample");
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double std = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
    return {mean, std};
}

MeanStd mae(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.empty()) throw StatsError("mae of an empty sample");
    std::vector<double> errs;
    errs.reserve(pairs.size());
    for (const auto& [t, p] : pairs) errs.push_back(std::fabs(t - p));
    return mean_std(errs);
}

std::vector<double> average_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&values](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

CorrelationResult spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw ConfigError("spearman inputs differ in length");
    if (xs.size() < 3) throw StatsError("spearman needs at least 3 points");
    const int n = static_cast<int>(xs.size());

    const std::vector<double> rx = average_ranks(xs);
    const std::vector<double> ry = average_ranks(ys);
    const double rho = pearson(rx, ry);

    CorrelationResult res;
    res.rho = rho;
    res.n = n;

    if (std::fabs(rho) >= 1.0) {
        res.p_value = 0.0;
    } else {
        const double t = rho * std::sqrt((n - 2.0) / (1.0 - rho * rho));
        res.p_value = n >= 30 ? 2.0 * normal_cdf(-std::fabs(t)) : t_two_sided(t, n - 2.0);
    }

    if (n >= 4) {
        const double z = std::atanh(std::clamp(rho, -1.0 + 1e-15, 1.0 - 1e-15));
        const double se = std::sqrt((1.0 + rho * rho / 2.0) / (n - 3.0));
        const double zcrit = 1.959963984540054;
        res.ci_low = std::tanh(z - zcrit * se);
        res.ci_high = std::tanh(z + zcrit * se);
    }
    return res;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& diffs) {
    std::vector<double> abs_d;
    std::vector<bool> positive;
    for (double d : diffs) {
        if (d == 0.0) continue;  // classic convention: drop zero differences
        abs_d.push_back(std::fabs(d));
        positive.push_back(d > 0.0);
    }
    WilcoxonResult res;
    res.n = static_cast<int>(abs_d.size());
    if (abs_d.empty()) {
        res.w_plus = 0.0;
        res.p_value = 1.0;
        res.exact = true;
        return res;
    }

    const std::vector<double> ranks = average_ranks(abs_d);
    double w = 0.0;
    for (std::size_t i = 0; i < ranks.size(); ++i)
        if (positive[i]) w += ranks[i];
    res.w_plus = w;

    const int n = res.n;
    if (n <= 25) {
        // exact sign-flip distribution; doubling the average ranks makes
        // them integers, so the distribution is a small dynamic program
        std::vector<long> r2(ranks.size());
        long total = 0;
        for (std::size_t i = 0; i < ranks.size(); ++i) {
            r2[i] = std::lround(2.0 * ranks[i]);
            total += r2[i];
        }
        std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
        count[0] = 1.0;
        long reach = 0;
        for (long r : r2) {
            for (long s = reach; s >= 0; --s)
                if (count[static_cast<std::size_t>(s)] > 0.0)
                    count[static_cast<std::size_t>(s + r)] += count[static_cast<std::size_t>(s)];
            reach += r;
        }
        const long w2 = std::lround(2.0 * w);
        double below = 0.0, above = 0.0, all = 0.0;
        for (long s = 0; s <= total; ++s) {
            const double c = count[static_cast<std::size_t>(s)];
            all += c;
            if (s <= w2) below += c;
            if (s >= w2) above += c;
        }
        res.p_value = std::min(1.0, 2.0 * std::min(below, above) / all);
        res.exact = true;
        return res;
    }

    const double mu = n * (n + 1.0) / 4.0;
    double tie_term = 0.0;
    {
        std::vector<double> sorted = abs_d;
        std::sort(sorted.begin(), sorted.end());
        std::size_t i = 0;
        while (i < sorted.size()) {
            std::size_t j = i;
            while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
            const double t = static_cast<double>(j - i + 1);
            tie_term += t * t * t - t;
            i = j + 1;
        }
    }
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if (var <= 0.0) {
        res.p_value = 1.0;
        return res;
    }
    const double d = w - mu;
    const double corrected = d > 0.0 ? d - 0.5 : (d < 0.0 ? d + 0.5 : 0.0);
    const double z = corrected / std::sqrt(var);
    res.p_value = std::min(1.0, 2.0 * normal_cdf(-std::fabs(z)));
    return res;
}

std::vector<SubjectSummary> collapse_by_subject(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw StatsError("collapse_by_subject on empty records");
    std::map<std::string, SubjectSummary> acc;
    for (const EvalRecord& r : records) {
        SubjectSummary& s = acc[r.subject_id];
        s.subject_id = r.subject_id;
        s.breast_dsc += r.breast_dsc;
        s.dense_dsc += r.dense_dsc;
        s.n_images += 1;
        if (r.pd_pred) {
            s.abs_err += std::fabs(r.pd_true - *r.pd_pred);
            s.n_defined += 1;
        }
    }
    std::vector<SubjectSummary> out;
    out.reserve(acc.size());
    for (auto& [id, s] : acc) {
        s.breast_dsc /= s.n_images;
        s.dense_dsc /= s.n_images;
        if (s.n_defined > 0) s.abs_err /= s.n_defined;
        out.push_back(std::move(s));
    }
    return out;
}

std::string records_to_csv(const std::vector<EvalRecord>& records) {
    std::string out = "subject_id,image_id,pd_true,pd_pred,breast_dsc,dense_dsc\n";
    char buf[256];
    for (const EvalRecord& r : records) {
        if (r.pd_pred) {
            std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%.17g,%.17g,%.17g\n", r.subject_id.c_str(),
                          r.image_id.c_str(), r.pd_true, *r.pd_pred, r.breast_dsc, r.dense_dsc);
        } else {
            std::snprintf(buf, sizeof buf, "%s,%s,%.17g,,%.17g,%.17g\n", r.subject_id.c_str(),
                          r.image_id.c_str(), r.pd_true, r.breast_dsc, r.dense_dsc);
        }
        out += buf;
    }
    return out;
}

std::vector<EvalRecord> records_from_csv(const std::string& csv) {
    std::istringstream ss(csv);
    std::string line;
    if (!std::getline(ss, line) || line != "subject_id,image_id,pd_true,pd_pred,breast_dsc,dense_dsc")
        throw DataError("bad eval record CSV header");
    std::vector<EvalRecord> out;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
                fields.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        }
        if (fields.size() != 6) throw DataError("bad eval record CSV row: " + line);
        EvalRecord r;
        r.subject_id = fields[0];
        r.image_id = fields[1];
        r.pd_true = std::stod(fields[2]);
        if (!fields[3].empty()) r.pd_pred = std::stod(fields[3]);
        r.breast_dsc = std::stod(fields[4]);
        r.dense_dsc = std::stod(fields[5]);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace mammofl::stats
