#pragma once

// Shared helpers for the unit and acceptance suites. The oracle functions
// here are written straight from the metric and statistics definitions and
// deliberately share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path source_dir() { return fs::path(STEMLAB_SOURCE_DIR); }
inline fs::path toy_dir() { return source_dir() / "data" / "toy"; }
inline std::string cli_path() { return STEMLAB_CLI_PATH; }

class TempDir {
public:
    TempDir() {
        static std::mt19937_64 rng(std::random_device{}());
        path_ = fs::temp_directory_path() / ("stemlab-test-" + std::to_string(rng()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

/// Runs the CLI with `args` (already shell-quoted), returning its exit code.
inline int run_cli(const std::string& args, const std::string& redirect = "> /dev/null 2>&1") {
    const std::string cmd = "\"" + cli_path() + "\" " + args + " " + redirect;
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---------------------------------------------------------------------------
// Metric oracles: one pass per definition, no shared state between metrics.

inline double oracle_rr(const std::vector<std::string>& ranking, const std::set<std::string>& rel) {
    for (std::size_t rank = 1; rank <= ranking.size(); ++rank) {
        if (rel.count(ranking[rank - 1])) return 1.0 / static_cast<double>(rank);
    }
    return 0.0;
}

inline double oracle_precision_at(const std::vector<std::string>& ranking, const std::set<std::string>& rel,
                                  std::size_t k) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < k; ++i) hits += rel.count(ranking[i]);
    return static_cast<double>(hits) / static_cast<double>(k);
}

inline double oracle_ap(const std::vector<std::string>& ranking, const std::set<std::string>& rel) {
    if (rel.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t k = 1; k <= ranking.size(); ++k) {
        if (rel.count(ranking[k - 1])) sum += oracle_precision_at(ranking, rel, k);
    }
    return sum / static_cast<double>(rel.size());
}

inline double oracle_dcg(const std::vector<int>& gains, std::size_t k) {
    double dcg = 0.0;
    for (std::size_t rank = 1; rank <= std::min(k, gains.size()); ++rank) {
        dcg += gains[rank - 1] / (std::log(static_cast<double>(rank) + 1.0) / std::log(2.0));
    }
    return dcg;
}

inline double oracle_ndcg(const std::vector<std::string>& ranking, const std::map<std::string, int>& grades,
                          std::size_t k) {
    std::vector<int> gains;
    for (const auto& d : ranking) {
        auto it = grades.find(d);
        gains.push_back(it == grades.end() ? 0 : std::max(0, it->second));
    }
    std::vector<int> ideal;
    for (const auto& [d, g] : grades) ideal.push_back(std::max(0, g));
    std::sort(ideal.rbegin(), ideal.rend());
    const double idcg = oracle_dcg(ideal, k);
    return idcg == 0.0 ? 0.0 : oracle_dcg(gains, k) / idcg;
}

inline double oracle_recall(const std::vector<std::string>& ranking, const std::set<std::string>& rel,
                            std::size_t k) {
    if (rel.empty()) return 0.0;
    std::set<std::string> found;
    for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
        if (rel.count(ranking[i])) found.insert(ranking[i]);
    }
    return static_cast<double>(found.size()) / static_cast<double>(rel.size());
}

// ---------------------------------------------------------------------------
// Student t oracle: two-tailed p by adaptive Simpson quadrature of the density.

inline double student_density(double x, double nu) {
    const double c = std::exp(std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0)) / std::sqrt(nu * M_PI);
    return c * std::pow(1.0 + x * x / nu, -(nu + 1.0) / 2.0);
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double eps,
                               double whole, double fa, double fm, double fb, int depth) {
    const double m = (a + b) / 2.0;
    const double lm = (a + m) / 2.0;
    const double rm = (m + b) / 2.0;
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::fabs(left + right - whole) <= 15.0 * eps) {
        return left + right + (left + right - whole) / 15.0;
    }
    return adaptive_simpson(f, a, m, eps / 2.0, left, fa, flm, fm, depth - 1) +
           adaptive_simpson(f, m, b, eps / 2.0, right, fm, frm, fb, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b, double eps = 1e-12) {
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f((a + b) / 2.0);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(f, a, b, eps, whole, fa, fm, fb, 50);
}

inline double oracle_t_two_tailed_p(double t, double nu) {
    // 1 - 2 * integral over [0, |t|], split into unit pieces for accuracy.
    const double T = std::fabs(t);
    double mass = 0.0;
    auto f = [nu](double x) { return student_density(x, nu); };
    for (double a = 0.0; a < T; a += 1.0) mass += integrate(f, a, std::min(T, a + 1.0));
    return std::max(0.0, 1.0 - 2.0 * mass);
}

/// t statistic and p straight from the textbook formula.
inline std::pair<double, double> oracle_paired_t(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += (a[i] - b[i]);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += std::pow((a[i] - b[i]) - mean, 2);
    var /= static_cast<double>(n - 1);
    const double t = mean / std::sqrt(var / static_cast<double>(n));
    return {t, oracle_t_two_tailed_p(t, static_cast<double>(n - 1))};
}

// ---------------------------------------------------------------------------
// BM25 oracle over raw token lists.

inline double oracle_bm25(const std::map<std::string, std::vector<std::string>>& docs,
                          const std::vector<std::string>& query, const std::string& doc_id, double k1,
                          double b) {
    const double N = static_cast<double>(docs.size());
    double total = 0.0;
    for (const auto& [id, toks] : docs) total += static_cast<double>(toks.size());
    const double avg = total / N;
    const auto& d = docs.at(doc_id);
    double score = 0.0;
    for (const auto& q : query) {
        double df = 0.0;
        for (const auto& [id, toks] : docs) df += std::count(toks.begin(), toks.end(), q) > 0 ? 1.0 : 0.0;
        const double tf = static_cast<double>(std::count(d.begin(), d.end(), q));
        if (tf == 0.0) continue;
        const double idf = std::log(1.0 + (N - df + 0.5) / (df + 0.5));
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * static_cast<double>(d.size()) / avg));
    }
    return score;
}

}  // namespace testsupport
