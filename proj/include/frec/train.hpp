#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "frec/data.hpp"
#include "frec/metrics.hpp"
#include "frec/model.hpp"
#include "frec/params.hpp"

namespace frec {

// Instances mapped to dense item indices, negatives attached from the seeded
// "negatives" sub-stream (4 for train, 9 for valid/test).
struct Dataset {
    std::vector<std::string> item_ids;        // dense -> original id
    std::vector<std::string> item_category;   // dense -> category
    std::unordered_map<std::string, int> item_index;
    std::vector<DenseInstance> train, valid, test;
};

Dataset build_dataset(const std::vector<TrainingInstance>& instances,
                      const ModelConfig& cfg, std::uint64_t seed);

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double l2 = 1e-4;
    int batch_size = 500;
    int max_epochs = 100;
    bool clip = false;
    double clip_norm = 5.0;
    bool parallel = true;  // OpenMP across instances; serial path kept for tests
    std::uint64_t seed = 1;
    std::size_t max_train_instances = 0;  // 0 = all
};

class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps) :
        lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // Applies one step. Gradients missing from `grads` are treated as zero
    // (their moments still decay). L2 is added as lambda*w for names outside
    // params.no_decay.
    void step(ParamStore& params, const std::map<std::string, Tensor>& grads,
              double l2, bool clip, double clip_norm);

private:
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

struct BatchResult {
    std::map<std::string, Tensor> grads;  // mean over instances
    double loss = 0.0, rec_loss = 0.0, con_loss = 0.0;
    BnBatchStats bn_stats;  // folded across instances in instance order
    int degenerate_interests = 0;
};

// Forward+backward over a span of instances. Per-instance work runs on
// OpenMP threads when parallel; the reduction is always in instance order so
// serial and parallel results are bit-identical. epoch/base_index key the
// augmentation sub-streams.
BatchResult batch_gradients(const Model& model, const ParamStore& params,
                            const std::vector<DenseInstance>& instances,
                            std::size_t first, std::size_t count,
                            int epoch, std::uint64_t seed, bool parallel);

// Scores every instance (1 positive + its negatives) in eval mode and
// aggregates ranking metrics. Parallel across instances.
MetricReport evaluate(const Model& model, const ParamStore& params,
                      const std::vector<DenseInstance>& instances, bool parallel);

// Per-bucket reports keyed by the fatigue-importance proxy m.
std::map<std::string, MetricReport> grouped_evaluate(const Model& model,
                                                     const ParamStore& params,
                                                     const Dataset& data,
                                                     const std::vector<DenseInstance>& instances,
                                                     bool parallel,
                                                     std::int64_t horizon = 10800);

int m_proxy_dense(const DenseInstance& inst, const std::vector<std::string>& item_category,
                  std::int64_t horizon = 10800);

struct EpochRecord {
    int epoch = 0;
    long steps = 0;
    double loss = 0.0, rec_loss = 0.0, con_loss = 0.0;
    double valid_gauc = 0.0;
};

// Validation tracker: remembers the best epoch and calls for a stop once the
// metric has decreased for `patience` consecutive epochs.
struct EarlyStop {
    int patience = 2;
    double best = -1.0;
    int best_epoch = 0;
    double prev = -1.0;
    int decreases = 0;

    // Returns true when this epoch sets a new best.
    bool record(int epoch, double value);
    bool should_stop() const { return decreases >= patience; }
};

struct TrainResult {
    ParamStore params;  // best validation-GAUC checkpoint
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    int epochs_run = 0;
};

// Mini-batch Adam with per-epoch validation GAUC; stops when the GAUC drops
// for two consecutive epochs and keeps the best checkpoint.
TrainResult train(const Model& model, const Dataset& data, const TrainConfig& cfg,
                  ParamStore initial, const std::string& history_path = "");

std::string format_history(const std::vector<EpochRecord>& history);

}  // namespace frec
