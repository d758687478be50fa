#include "frec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace frec {

RankMetrics rank_metrics(double pos_score, const std::vector<double>& neg_scores,
                         const std::vector<int>& ks) {
    if (neg_scores.empty()) throw std::invalid_argument("rank_metrics: no negatives");
    RankMetrics m;
    int worse_or_tied = 0;
    for (double s : neg_scores)
        if (s >= pos_score) ++worse_or_tied;
    m.rank = 1 + worse_or_tied;
    for (int k : ks) {
        m.hr[k] = m.rank <= k ? 1.0 : 0.0;
        m.ndcg[k] = m.rank <= k ? 1.0 / std::log2(static_cast<double>(m.rank) + 1.0) : 0.0;
    }
    m.mrr = 1.0 / m.rank;
    return m;
}

double auc(const std::vector<std::pair<double, int>>& scored) {
    std::size_t n_pos = 0, n_neg = 0;
    for (const auto& [s, l] : scored) (l ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("auc: needs both classes");
    // Rank-sum formulation; ties get the average rank, which yields half
    // credit per tied pair.
    std::vector<std::size_t> order(scored.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scored[a].first < scored[b].first; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scored[order[j]].first == scored[order[i]].first) ++j;
        double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k)
            if (scored[order[k]].second) rank_sum_pos += avg_rank;
        i = j;
    }
    double n_pos_d = static_cast<double>(n_pos);
    return (rank_sum_pos - n_pos_d * (n_pos_d + 1.0) / 2.0) /
           (n_pos_d * static_cast<double>(n_neg));
}

double gauc(const std::map<std::string, std::vector<std::pair<double, int>>>& per_user) {
    double weighted = 0.0;
    double weight = 0.0;
    for (const auto& [user, scored] : per_user) {
        std::size_t n_pos = 0, n_neg = 0;
        for (const auto& [s, l] : scored) (l ? n_pos : n_neg)++;
        if (n_pos == 0 || n_neg == 0) continue;
        double w = static_cast<double>(scored.size());
        weighted += w * auc(scored);
        weight += w;
    }
    if (weight == 0.0) throw std::invalid_argument("gauc: no user with both classes");
    return weighted / weight;
}

std::string format_report(const MetricReport& r, const std::string& prefix) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed;
    os << prefix << "auc=" << r.auc_v << "\n";
    os << prefix << "gauc=" << r.gauc_v << "\n";
    for (const auto& [k, v] : r.hr) os << prefix << "hr@" << k << "=" << v << "\n";
    for (const auto& [k, v] : r.ndcg) os << prefix << "ndcg@" << k << "=" << v << "\n";
    os << prefix << "mrr=" << r.mrr << "\n";
    os << prefix << "instances=" << r.n_instances << "\n";
    return os.str();
}

void write_report(const std::string& path, const std::string& body) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << body;
    if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<EvtrPoint> evtr_curve(const InteractionLog& exposures,
                                  const std::vector<bool>& engaged,
                                  int window, int max_repetitions) {
    if (exposures.events.size() != engaged.size())
        throw std::invalid_argument("evtr_curve: flag vector length mismatch");
    std::vector<std::size_t> total(max_repetitions + 1, 0), hits(max_repetitions + 1, 0);
    std::unordered_map<std::string, std::deque<std::string>> recent;
    for (std::size_t i = 0; i < exposures.events.size(); ++i) {
        const Event& e = exposures.events[i];
        auto& dq = recent[e.user];
        int reps = static_cast<int>(std::count(dq.begin(), dq.end(), e.category));
        int bucket = std::min(reps, max_repetitions);
        ++total[bucket];
        if (engaged[i]) {
            ++hits[bucket];
            dq.push_back(e.category);
            if (static_cast<int>(dq.size()) > window) dq.pop_front();
        }
    }
    std::vector<EvtrPoint> out;
    double base = total[0] ? static_cast<double>(hits[0]) / total[0] : 0.0;
    for (int b = 0; b <= max_repetitions; ++b) {
        if (total[b] == 0) continue;
        EvtrPoint p;
        p.repetitions = b;
        p.exposures = total[b];
        p.engaged = hits[b];
        double rate = static_cast<double>(hits[b]) / total[b];
        p.normalized_rate = base > 0.0 ? rate / base : 0.0;
        out.push_back(p);
    }
    return out;
}

}  // namespace frec
