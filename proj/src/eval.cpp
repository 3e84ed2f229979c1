#include "stemlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>

#include "stemlab/error.hpp"
#include "stemlab/parallel.hpp"

namespace stemlab {

void Qrels::add(const std::string& qid, const std::string& doc_id, int grade) {
    if (grade < 0) throw InvalidArgument("negative relevance grade for " + qid + "/" + doc_id);
    judgments_[qid][doc_id] = grade;
}

const std::map<std::string, int>& Qrels::grades(const std::string& qid) const {
    static const std::map<std::string, int> kEmpty;
    auto it = judgments_.find(qid);
    return it == judgments_.end() ? kEmpty : it->second;
}

std::set<std::string> Qrels::relevant(const std::string& qid) const {
    std::set<std::string> out;
    for (const auto& [doc, grade] : grades(qid)) {
        if (grade >= 1) out.insert(doc);
    }
    return out;
}

std::vector<std::string> Qrels::query_ids() const {
    std::vector<std::string> out;
    out.reserve(judgments_.size());
    for (const auto& [q, _] : judgments_) out.push_back(q);
    return out;
}

// ---------------------------------------------------------------------------
// Metrics

double reciprocal_rank(std::span<const std::string> ranking, const std::set<std::string>& relevant) {
    for (std::size_t i = 0; i < ranking.size(); ++i) {
        if (relevant.contains(ranking[i])) return 1.0 / static_cast<double>(i + 1);
    }
    return 0.0;
}

double average_precision(std::span<const std::string> ranking, const std::set<std::string>& relevant) {
    if (relevant.empty()) return 0.0;
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ranking.size(); ++i) {
        if (relevant.contains(ranking[i])) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(relevant.size());
}

double ndcg_at(std::span<const std::string> ranking, const std::map<std::string, int>& grades,
               std::size_t k) {
    if (k == 0) throw InvalidArgument("nDCG depth must be >= 1");
    std::vector<int> ideal;
    for (const auto& [doc, g] : grades) {
        if (g > 0) ideal.push_back(g);
    }
    if (ideal.empty()) return 0.0;
    std::sort(ideal.begin(), ideal.end(), std::greater<>());

    double dcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
        auto it = grades.find(ranking[i]);
        if (it != grades.end() && it->second > 0) dcg += it->second / std::log2(static_cast<double>(i) + 2.0);
    }
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) {
        idcg += ideal[i] / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg / idcg;
}

double recall_at(std::span<const std::string> ranking, const std::set<std::string>& relevant,
                 std::size_t k) {
    if (k == 0) throw InvalidArgument("recall depth must be >= 1");
    if (relevant.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
        if (relevant.contains(ranking[i])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

std::string_view to_string(Metric m) {
    switch (m) {
        case Metric::RR: return "rr";
        case Metric::MAP: return "map";
        case Metric::NDCG10: return "ndcg10";
        case Metric::R1000: return "r1000";
    }
    return "rr";
}

Metric parse_metric(std::string_view name) {
    for (auto m : kAllMetrics) {
        if (to_string(m) == name) return m;
    }
    throw InvalidArgument("unknown metric: " + std::string(name) + " (expected rr|map|ndcg10|r1000)");
}

std::map<std::string, double> EvalReport::column(Metric m) const {
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < query_ids.size(); ++i) {
        out.emplace(query_ids[i], per_query[i][static_cast<std::size_t>(m)]);
    }
    return out;
}

namespace {

MetricValues score_query(const RunRanking& run, const Qrels& qrels, const std::string& qid,
                         EvalDepths depths) {
    std::vector<std::string> ranking;
    if (auto it = run.find(qid); it != run.end()) {
        ranking.reserve(it->second.size());
        for (const auto& d : it->second) ranking.push_back(d.doc_id);
    }
    const auto relevant = qrels.relevant(qid);
    return {reciprocal_rank(ranking, relevant), average_precision(ranking, relevant),
            ndcg_at(ranking, qrels.grades(qid), depths.ndcg_k),
            recall_at(ranking, relevant, depths.recall_k)};
}

void fill_means(EvalReport& report) {
    report.means.fill(0.0);
    if (report.per_query.empty()) return;
    for (const auto& row : report.per_query) {
        for (std::size_t m = 0; m < row.size(); ++m) report.means[m] += row[m];
    }
    for (auto& v : report.means) v /= static_cast<double>(report.per_query.size());
}

}  // namespace

EvalReport evaluate(const RunRanking& run, const Qrels& qrels, EvalDepths depths, int workers) {
    EvalReport report;
    report.query_ids = qrels.query_ids();
    report.per_query.resize(report.query_ids.size());
    const auto n = static_cast<std::ptrdiff_t>(report.query_ids.size());
#pragma omp parallel for schedule(dynamic, 4) num_threads(resolve_workers(workers))
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        report.per_query[u] = score_query(run, qrels, report.query_ids[u], depths);
    }
    fill_means(report);
    return report;
}

namespace serial {
EvalReport evaluate(const RunRanking& run, const Qrels& qrels, EvalDepths depths) {
    EvalReport report;
    report.query_ids = qrels.query_ids();
    for (const auto& q : report.query_ids) report.per_query.push_back(score_query(run, qrels, q, depths));
    fill_means(report);
    return report;
}
}  // namespace serial

// ---------------------------------------------------------------------------
// Significance

namespace {

// Continued fraction for I_x(a, b), modified Lentz.
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIterations = 10000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIterations; ++m) {
        const double m2 = 2.0 * m;
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

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) throw InvalidArgument("incomplete beta needs a, b > 0");
    if (!(x >= 0.0 && x <= 1.0)) throw InvalidArgument("incomplete beta needs x in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                             b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_tailed_p(double t, double df) {
    if (!(df > 0.0)) throw InvalidArgument("degrees of freedom must be > 0");
    if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
    if (std::isinf(t)) return 0.0;
    if (t == 0.0) return 1.0;
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

TTest paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidArgument("paired t-test needs equally long score vectors");
    const std::size_t n = a.size();
    if (n < 2) throw InvalidArgument("paired t-test needs at least 2 paired observations");
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
    if (*lo == *hi) return {0.0, 1.0, n};

    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
    return {t, student_t_two_tailed_p(t, static_cast<double>(n - 1)), n};
}

double bonferroni(double p, std::size_t m) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("p-value must be in [0, 1]");
    if (m == 0) throw InvalidArgument("Bonferroni m must be >= 1");
    return std::min(1.0, static_cast<double>(m) * p);
}

std::vector<GainLoss> gain_loss(const std::map<std::string, double>& a,
                                const std::map<std::string, double>& b) {
    if (a.size() != b.size()) throw InvalidArgument("gain-loss needs the same query set on both sides");
    std::vector<GainLoss> out;
    out.reserve(a.size());
    auto ib = b.begin();
    for (const auto& [q, va] : a) {
        if (ib->first != q) throw InvalidArgument("gain-loss query sets differ at " + q);
        out.push_back({q, va - ib->second});
        ++ib;
    }
    std::sort(out.begin(), out.end(), [](const GainLoss& x, const GainLoss& y) {
        return x.delta != y.delta ? x.delta > y.delta : x.query_id < y.query_id;
    });
    return out;
}

void write_gain_loss_csv(std::ostream& out, std::span<const GainLoss> rows) {
    out << "query_id,delta\n";
    char buf[64];
    for (const auto& r : rows) {
        // -0.000000 would be misleading for tiny negative deltas.
        const double v = std::fabs(r.delta) < 5e-7 ? 0.0 : r.delta;
        std::snprintf(buf, sizeof buf, "%.6f", v);
        out << r.query_id << ',' << buf << '\n';
    }
}

std::vector<MetricComparison> compare_reports(const EvalReport& a, const EvalReport& b, std::size_t m) {
    if (a.query_ids != b.query_ids) throw InvalidArgument("reports cover different query sets");
    std::vector<MetricComparison> out;
    for (auto metric : kAllMetrics) {
        const auto idx = static_cast<std::size_t>(metric);
        std::vector<double> va;
        std::vector<double> vb;
        for (std::size_t i = 0; i < a.per_query.size(); ++i) {
            va.push_back(a.per_query[i][idx]);
            vb.push_back(b.per_query[i][idx]);
        }
        const auto test = paired_t_test(va, vb);
        const double adj = bonferroni(test.p, m);
        out.push_back({metric, a.means[idx], b.means[idx], test, adj, adj < kSignificanceLevel});
    }
    return out;
}

}  // namespace stemlab
