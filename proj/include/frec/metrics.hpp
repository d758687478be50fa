#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "frec/data.hpp"

namespace frec {

struct RankMetrics {
    int rank = 0;                 // 1-based, ties rank the positive last
    std::map<int, double> hr;     // k -> 0/1
    std::map<int, double> ndcg;   // k -> gain
    double mrr = 0.0;
};

// 1 positive vs n negatives. Ties are pessimistic: tied negatives outrank
// the positive.
RankMetrics rank_metrics(double pos_score, const std::vector<double>& neg_scores,
                         const std::vector<int>& ks = {2, 4});

// Fraction of (positive, negative) pairs ranked correctly, ties half credit.
// scored: (score, label) with label 1 for positives.
double auc(const std::vector<std::pair<double, int>>& scored);

// Impression-weighted mean of per-user AUC; single-class users are skipped
// together with their weight.
double gauc(const std::map<std::string, std::vector<std::pair<double, int>>>& per_user);

struct MetricReport {
    double auc_v = 0.0;
    double gauc_v = 0.0;
    std::map<int, double> hr;
    std::map<int, double> ndcg;
    double mrr = 0.0;
    std::size_t n_instances = 0;
};

// Stable key=value serialization, diffable across runs.
std::string format_report(const MetricReport& r, const std::string& prefix = "");
void write_report(const std::string& path, const std::string& body);

struct EvtrPoint {
    int repetitions = 0;
    std::size_t exposures = 0;
    std::size_t engaged = 0;
    double normalized_rate = 0.0;  // bucket rate / bucket-0 rate
};

// Empirical engagement rate against the count of same-category engaged events
// within the last `window` engaged events, normalized by the zero-repetition
// bucket. Exposures must be in per-user chronological order.
std::vector<EvtrPoint> evtr_curve(const InteractionLog& exposures,
                                  const std::vector<bool>& engaged,
                                  int window, int max_repetitions = 10);

}  // namespace frec
