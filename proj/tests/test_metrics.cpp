#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "frec/metrics.hpp"
#include "frec/rng.hpp"

using namespace frec;

namespace {

// Rank by sorting, positives losing every tie: count of negatives scoring
// >= the positive, plus one.
int sort_rank(double pos, const std::vector<double>& negs) {
    std::vector<double> all = negs;
    all.push_back(pos);
    std::sort(all.begin(), all.end(), std::greater<double>());
    auto it = std::upper_bound(all.begin(), all.end(), pos, std::greater<double>());
    return static_cast<int>(it - all.begin());
}

// Pair-counting AUC, half credit for ties.
double pair_auc(const std::vector<std::pair<double, int>>& scored) {
    double credit = 0.0;
    std::size_t pairs = 0;
    for (const auto& [sp, lp] : scored) {
        if (!lp) continue;
        for (const auto& [sn, ln] : scored) {
            if (ln) continue;
            ++pairs;
            if (sp > sn) credit += 1.0;
            else if (sp == sn) credit += 0.5;
        }
    }
    return credit / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("rank: positive on top") {
    RankMetrics m = rank_metrics(3.0, {1.0, 2.0, 0.5});
    CHECK(m.rank == 1);
    CHECK(m.hr.at(2) == 1.0);
    CHECK(m.ndcg.at(2) == 1.0);
    CHECK(m.mrr == 1.0);
}

TEST_CASE("rank: ties count against the positive") {
    RankMetrics m = rank_metrics(2.0, {2.0, 1.0, 2.0});
    CHECK(m.rank == 3);
    CHECK(m.hr.at(2) == 0.0);
    CHECK(m.hr.at(4) == 1.0);
    CHECK(m.ndcg.at(4) == doctest::Approx(1.0 / std::log2(4.0)).epsilon(1e-12));
    CHECK(m.mrr == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("rank: positive last") {
    RankMetrics m = rank_metrics(-1.0, {0.0, 1.0, 2.0, 3.0});
    CHECK(m.rank == 5);
    CHECK(m.hr.at(2) == 0.0);
    CHECK(m.hr.at(4) == 0.0);
    CHECK(m.ndcg.at(4) == 0.0);
    CHECK(m.mrr == 0.2);
}

TEST_CASE("rank: custom cutoffs and dcg discount") {
    RankMetrics m = rank_metrics(1.0, {2.0, 0.0, 0.5}, {1, 2, 3});
    CHECK(m.rank == 2);
    CHECK(m.hr.at(1) == 0.0);
    CHECK(m.hr.at(2) == 1.0);
    CHECK(m.ndcg.at(2) == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-12));
    CHECK(m.ndcg.at(3) == m.ndcg.at(2));
}

TEST_CASE("rank: no negatives is an error") {
    CHECK_THROWS_AS(rank_metrics(1.0, {}), std::invalid_argument);
}

TEST_CASE("rank agrees with a sort oracle on random inputs") {
    Rng rng(404);
    for (int trial = 0; trial < 10000; ++trial) {
        int n = 1 + static_cast<int>(rng.index(12));
        double pos = std::floor(rng.uniform(-4.0, 4.0));  // coarse grid forces ties
        std::vector<double> negs(n);
        for (double& v : negs) v = std::floor(rng.uniform(-4.0, 4.0));
        RankMetrics m = rank_metrics(pos, negs, {1, 3});
        int want = sort_rank(pos, negs);
        REQUIRE(m.rank == want);
        REQUIRE(m.mrr == 1.0 / want);
        REQUIRE(m.hr.at(3) == (want <= 3 ? 1.0 : 0.0));
    }
}

TEST_CASE("auc: three of four pairs correct gives 0.75") {
    std::vector<std::pair<double, int>> scored = {
        {0.9, 1}, {0.4, 1}, {0.5, 0}, {0.1, 0}};
    CHECK(auc(scored) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("auc: perfect and inverted orderings") {
    CHECK(auc({{2.0, 1}, {1.0, 0}, {0.5, 0}}) == 1.0);
    CHECK(auc({{0.0, 1}, {1.0, 0}, {2.0, 0}}) == 0.0);
}

TEST_CASE("auc: all tied scores give one half") {
    std::vector<std::pair<double, int>> scored = {
        {0.5, 1}, {0.5, 0}, {0.5, 1}, {0.5, 0}, {0.5, 0}};
    CHECK(auc(scored) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("auc needs both classes") {
    CHECK_THROWS_AS(auc({{1.0, 1}, {2.0, 1}}), std::invalid_argument);
    CHECK_THROWS_AS(auc({{1.0, 0}}), std::invalid_argument);
    CHECK_THROWS_AS(auc({}), std::invalid_argument);
}

TEST_CASE("auc agrees with pair counting on random inputs") {
    Rng rng(505);
    for (int trial = 0; trial < 2000; ++trial) {
        int n = 2 + static_cast<int>(rng.index(14));
        std::vector<std::pair<double, int>> scored;
        int n_pos = 0;
        for (int i = 0; i < n; ++i) {
            int label = rng.index(2) == 0 ? 0 : 1;
            n_pos += label;
            scored.emplace_back(std::floor(rng.uniform(-3.0, 3.0)), label);
        }
        if (n_pos == 0 || n_pos == n) continue;
        REQUIRE(auc(scored) == doctest::Approx(pair_auc(scored)).epsilon(1e-12));
    }
}

TEST_CASE("auc is invariant under monotone score transforms") {
    Rng rng(606);
    std::vector<std::pair<double, int>> scored;
    for (int i = 0; i < 40; ++i)
        scored.emplace_back(rng.uniform(-2.0, 2.0), rng.index(2) == 0 ? 0 : 1);
    scored[0].second = 1;
    scored[1].second = 0;
    double base = auc(scored);
    auto mapped = scored;
    for (auto& [s, l] : mapped) s = std::exp(3.0 * s) - 7.0;
    CHECK(auc(mapped) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("gauc: impression-weighted mean of per-user auc") {
    std::map<std::string, std::vector<std::pair<double, int>>> per_user;
    per_user["a"] = {{0.9, 1}, {0.4, 1}, {0.5, 0}, {0.1, 0}};  // auc 0.75, weight 4
    per_user["b"] = {{2.0, 1}, {1.0, 0}};                      // auc 1.00, weight 2
    CHECK(gauc(per_user) == doctest::Approx((4.0 * 0.75 + 2.0 * 1.0) / 6.0).epsilon(1e-12));
}

TEST_CASE("gauc skips single-class users together with their weight") {
    std::map<std::string, std::vector<std::pair<double, int>>> per_user;
    per_user["a"] = {{0.9, 1}, {0.4, 1}, {0.5, 0}, {0.1, 0}};
    per_user["only_pos"] = {{1.0, 1}, {2.0, 1}, {3.0, 1}};
    per_user["only_neg"] = {{1.0, 0}};
    CHECK(gauc(per_user) == doctest::Approx(0.75).epsilon(1e-12));
    per_user.erase("a");
    CHECK_THROWS_AS(gauc(per_user), std::invalid_argument);
}

TEST_CASE("report formatting is stable and diffable") {
    MetricReport r;
    r.auc_v = 0.75;
    r.gauc_v = 0.5;
    r.hr[2] = 0.25;
    r.hr[4] = 1.0;
    r.ndcg[2] = 0.125;
    r.mrr = 1.0 / 3.0;
    r.n_instances = 7;
    CHECK(format_report(r) ==
          "auc=0.750000\n"
          "gauc=0.500000\n"
          "hr@2=0.250000\n"
          "hr@4=1.000000\n"
          "ndcg@2=0.125000\n"
          "mrr=0.333333\n"
          "instances=7\n");
    CHECK(format_report(r, "test.") ==
          "test.auc=0.750000\n"
          "test.gauc=0.500000\n"
          "test.hr@2=0.250000\n"
          "test.hr@4=1.000000\n"
          "test.ndcg@2=0.125000\n"
          "test.mrr=0.333333\n"
          "test.instances=7\n");
}

TEST_CASE("exposure curve: hand-built log with two repetition levels") {
    // User sees category A three times and engages each time: buckets 0,1,2
    // collect one exposure each. A second user never engages: bucket 0 only.
    InteractionLog log;
    std::vector<bool> engaged;
    for (int i = 0; i < 3; ++i) {
        log.events.push_back({"u1", "i" + std::to_string(i), "A", 100 * (i + 1)});
        engaged.push_back(true);
    }
    log.events.push_back({"u2", "i9", "A", 100});
    engaged.push_back(false);
    auto curve = evtr_curve(log, engaged, 10);
    REQUIRE(curve.size() == 3);
    CHECK(curve[0].repetitions == 0);
    CHECK(curve[0].exposures == 2);  // u1 first view + u2 only view
    CHECK(curve[0].engaged == 1);
    CHECK(curve[0].normalized_rate == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(curve[1].exposures == 1);
    CHECK(curve[1].normalized_rate == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(curve[2].exposures == 1);
    CHECK(curve[2].normalized_rate == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("exposure curve: only engaged events enter the repetition window") {
    InteractionLog log;
    std::vector<bool> engaged;
    log.events.push_back({"u", "a", "A", 100});
    engaged.push_back(false);  // skipped, must not count as a repetition
    log.events.push_back({"u", "b", "A", 200});
    engaged.push_back(true);
    log.events.push_back({"u", "c", "A", 300});
    engaged.push_back(true);
    auto curve = evtr_curve(log, engaged, 10);
    REQUIRE(curve.size() == 2);
    CHECK(curve[0].exposures == 2);  // the miss and the first engagement
    CHECK(curve[1].exposures == 1);
}

TEST_CASE("exposure curve: the window forgets old engagements") {
    InteractionLog log;
    std::vector<bool> engaged;
    for (int i = 0; i < 4; ++i) {
        log.events.push_back({"u", "x" + std::to_string(i), "A", 100 * (i + 1)});
        engaged.push_back(true);
    }
    auto narrow = evtr_curve(log, engaged, 1);  // only the last engagement counts
    REQUIRE(narrow.size() == 2);
    CHECK(narrow[0].exposures == 1);
    CHECK(narrow[1].exposures == 3);
}

TEST_CASE("exposure curve: repetitions beyond the cap share the last bucket") {
    InteractionLog log;
    std::vector<bool> engaged;
    for (int i = 0; i < 6; ++i) {
        log.events.push_back({"u", "x" + std::to_string(i), "A", 100 * (i + 1)});
        engaged.push_back(true);
    }
    auto curve = evtr_curve(log, engaged, 10, 3);
    REQUIRE(curve.size() == 4);
    CHECK(curve[3].repetitions == 3);
    CHECK(curve[3].exposures == 3);  // views 4, 5, 6
}

TEST_CASE("exposure curve: users do not interfere") {
    InteractionLog one;
    std::vector<bool> e_one;
    for (int i = 0; i < 3; ++i) {
        one.events.push_back({"u1", "a" + std::to_string(i), "A", 100 * (i + 1)});
        e_one.push_back(true);
    }
    InteractionLog two = one;
    std::vector<bool> e_two = e_one;
    for (int i = 0; i < 3; ++i) {
        two.events.push_back({"u2", "b" + std::to_string(i), "A", 100 * (i + 1)});
        e_two.push_back(true);
    }
    auto c1 = evtr_curve(one, e_one, 10);
    auto c2 = evtr_curve(two, e_two, 10);
    REQUIRE(c1.size() == c2.size());
    for (std::size_t i = 0; i < c1.size(); ++i)
        CHECK(c2[i].exposures == 2 * c1[i].exposures);
}

TEST_CASE("exposure curve: flat when engagement ignores repetitions") {
    // Engage with fixed probability one half regardless of history.
    Rng rng(808);
    InteractionLog log;
    std::vector<bool> engaged;
    for (int i = 0; i < 20000; ++i) {
        log.events.push_back({"u" + std::to_string(i % 20), "x", "A", 10 * (i + 1)});
        engaged.push_back(rng.index(2) == 0);
    }
    auto curve = evtr_curve(log, engaged, 5);
    for (const auto& p : curve)
        if (p.exposures >= 100)
            CHECK(p.normalized_rate == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("exposure curve rejects mismatched flag vectors") {
    InteractionLog log;
    log.events.push_back({"u", "i", "c", 1});
    CHECK_THROWS_AS(evtr_curve(log, {}, 5), std::invalid_argument);
}
