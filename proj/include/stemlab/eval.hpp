#pragma once

#include <array>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stemlab {

/// qid -> doc_id -> grade. Grades >= 1 are relevant; unjudged is non-relevant.
class Qrels {
public:
    /// Throws InvalidArgument on a negative grade.
    void add(const std::string& qid, const std::string& doc_id, int grade);

    /// Empty map for unknown queries.
    const std::map<std::string, int>& grades(const std::string& qid) const;
    std::set<std::string> relevant(const std::string& qid) const;
    std::vector<std::string> query_ids() const;
    std::size_t size() const { return judgments_.size(); }

    bool operator==(const Qrels&) const = default;

private:
    std::map<std::string, std::map<std::string, int>> judgments_;
};

struct RankedDoc {
    std::string doc_id;
    double score;
    bool operator==(const RankedDoc&) const = default;
};

/// qid -> documents in rank order.
using RunRanking = std::map<std::string, std::vector<RankedDoc>>;

double reciprocal_rank(std::span<const std::string> ranking, const std::set<std::string>& relevant);
double average_precision(std::span<const std::string> ranking, const std::set<std::string>& relevant);
/// Linear gain, log2(i + 1) discount, ideal DCG from all judged grades.
double ndcg_at(std::span<const std::string> ranking, const std::map<std::string, int>& grades,
               std::size_t k = 10);
double recall_at(std::span<const std::string> ranking, const std::set<std::string>& relevant,
                 std::size_t k = 1000);

enum class Metric { RR, MAP, NDCG10, R1000 };
inline constexpr std::array kAllMetrics = {Metric::RR, Metric::MAP, Metric::NDCG10, Metric::R1000};

/// "rr", "map", "ndcg10", "r1000".
std::string_view to_string(Metric m);
Metric parse_metric(std::string_view name);

using MetricValues = std::array<double, kAllMetrics.size()>;

struct EvalReport {
    std::vector<std::string> query_ids;
    std::vector<MetricValues> per_query;
    MetricValues means{};

    double mean(Metric m) const { return means[static_cast<std::size_t>(m)]; }
    /// qid -> value for one metric.
    std::map<std::string, double> column(Metric m) const;
};

struct EvalDepths {
    std::size_t ndcg_k = 10;
    std::size_t recall_k = 1000;
};

/// Scores every query in `qrels` (queries missing from the run score 0).
/// OpenMP-parallel over queries; assembled in query-id order.
EvalReport evaluate(const RunRanking& run, const Qrels& qrels, EvalDepths depths = {},
                    int workers = 0);

namespace serial {
EvalReport evaluate(const RunRanking& run, const Qrels& qrels, EvalDepths depths = {});
}  // namespace serial

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

/// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
double student_t_two_tailed_p(double t, double df);

struct TTest {
    double t = 0.0;
    double p = 1.0;
    std::size_t n = 0;
};

/// Two-tailed paired t-test on a - b. Zero variance of the differences gives
/// (0, 1). Throws InvalidArgument on length mismatch or n < 2.
TTest paired_t_test(std::span<const double> a, std::span<const double> b);

/// min(1, m * p).
double bonferroni(double p, std::size_t m);

struct GainLoss {
    std::string query_id;
    double delta;
};

/// a - b per query, sorted by delta descending, ties by query id. Throws
/// InvalidArgument when the query sets differ.
std::vector<GainLoss> gain_loss(const std::map<std::string, double>& a,
                                const std::map<std::string, double>& b);

/// Header "query_id,delta", 6 decimals.
void write_gain_loss_csv(std::ostream& out, std::span<const GainLoss> rows);

struct MetricComparison {
    Metric metric;
    double mean_a;
    double mean_b;
    TTest test;
    double p_adjusted;
    bool significant;
};

inline constexpr double kSignificanceLevel = 0.05;

/// Per-metric paired tests of `a` against reference `b`, Bonferroni-adjusted
/// with `m` comparisons. Throws InvalidArgument on misaligned query sets.
std::vector<MetricComparison> compare_reports(const EvalReport& a, const EvalReport& b, std::size_t m);

}  // namespace stemlab
