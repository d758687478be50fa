#include "frec/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace frec {

Dataset build_dataset(const std::vector<TrainingInstance>& instances,
                      const ModelConfig& cfg, std::uint64_t seed) {
    Dataset ds;
    for (const auto& inst : instances) {
        auto intern = [&](const std::string& item, const std::string& cat) {
            auto it = ds.item_index.find(item);
            if (it != ds.item_index.end()) return it->second;
            int id = static_cast<int>(ds.item_ids.size());
            ds.item_index.emplace(item, id);
            ds.item_ids.push_back(item);
            ds.item_category.push_back(cat);
            return id;
        };
        for (std::size_t i = 0; i < inst.prefix.length(); ++i)
            intern(inst.prefix.items[i], inst.prefix.categories[i]);
        intern(inst.target, inst.target_category);
    }
    std::uint64_t idx = 0;
    for (const auto& inst : instances) {
        DenseInstance d;
        d.user = inst.user;
        d.target = ds.item_index.at(inst.target);
        d.target_ts = inst.target_timestamp;
        d.prefix.reserve(inst.prefix.length());
        for (const auto& it : inst.prefix.items) d.prefix.push_back(ds.item_index.at(it));
        d.prefix_ts = inst.prefix.timestamps;
        int n_neg = inst.split == Split::Train ? cfg.train_negatives : cfg.eval_negatives;
        Rng rng(substream_seed(seed, "negatives", idx));
        std::unordered_map<int, bool> seen;
        if (static_cast<int>(ds.item_ids.size()) <= n_neg)
            throw std::invalid_argument("build_dataset: item vocabulary too small for " +
                                        std::to_string(n_neg) + " negatives");
        while (static_cast<int>(d.negatives.size()) < n_neg) {
            int cand = static_cast<int>(rng.index(ds.item_ids.size()));
            if (cand == d.target || seen[cand]) continue;
            seen[cand] = true;
            d.negatives.push_back(cand);
        }
        switch (inst.split) {
            case Split::Train: ds.train.push_back(std::move(d)); break;
            case Split::Valid: ds.valid.push_back(std::move(d)); break;
            case Split::Test: ds.test.push_back(std::move(d)); break;
        }
        ++idx;
    }
    return ds;
}

void Adam::step(ParamStore& params, const std::map<std::string, Tensor>& grads,
                double l2, bool clip, double clip_norm) {
    ++t_;
    // Effective gradient per tensor: grad + l2 * w on decayed weights.
    std::map<std::string, Tensor> eff;
    for (auto& [name, w] : params.tensors) {
        if (params.non_trainable.count(name)) continue;
        Tensor g(w.rows, w.cols);
        if (auto it = grads.find(name); it != grads.end()) {
            check_same_shape("Adam::step", it->second, w);
            g = it->second;
        }
        if (l2 > 0.0 && !params.no_decay.count(name))
            for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += l2 * w.data[i];
        eff.emplace(name, std::move(g));
    }
    if (clip) {
        double sq = 0.0;
        for (const auto& [name, g] : eff)
            for (double v : g.data) sq += v * v;
        double norm = std::sqrt(sq);
        if (norm > clip_norm && norm > 0.0) {
            double scale = clip_norm / norm;
            for (auto& [name, g] : eff)
                for (double& v : g.data) v *= scale;
        }
    }
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto& [name, g] : eff) {
        Tensor& w = params.get(name);
        Tensor& m = m_.try_emplace(name, Tensor::zeros(w.rows, w.cols)).first->second;
        Tensor& v = v_.try_emplace(name, Tensor::zeros(w.rows, w.cols)).first->second;
        for (std::size_t i = 0; i < w.size(); ++i) {
            m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * g.data[i];
            v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * g.data[i] * g.data[i];
            double mhat = m.data[i] / bc1;
            double vhat = v.data[i] / bc2;
            w.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

namespace {

struct InstanceOut {
    std::map<std::string, Tensor> grads;
    double loss = 0.0, rec = 0.0, con = 0.0;
    BnBatchStats bn;
    int degenerate = 0;
};

InstanceOut instance_gradients(const Model& model, const ParamStore& params,
                               const DenseInstance& inst, int epoch,
                               std::uint64_t seed, std::uint64_t key) {
    ad::Tape tape;
    Rng aug(substream_seed(seed, "augment", static_cast<std::uint64_t>(epoch), key));
    ForwardResult fr = model.forward(tape, params, inst, Mode::Train, &aug);
    InstanceOut out;
    out.loss = tape.val(fr.loss).at(0, 0);
    out.rec = tape.val(fr.rec_loss).at(0, 0);
    out.con = tape.val(fr.con_loss).at(0, 0);
    if (!std::isfinite(out.loss))
        throw std::runtime_error("training diverged: non-finite loss for user " + inst.user);
    tape.backward(fr.loss);
    out.grads = tape.param_grads();
    out.bn = std::move(fr.bn_stats);
    out.degenerate = fr.degenerate_interests;
    return out;
}

}  // namespace

BatchResult batch_gradients(const Model& model, const ParamStore& params,
                            const std::vector<DenseInstance>& instances,
                            std::size_t first, std::size_t count,
                            int epoch, std::uint64_t seed, bool parallel) {
    std::vector<InstanceOut> outs(count);
    std::exception_ptr err;
#ifdef _OPENMP
    #pragma omp parallel for schedule(dynamic) if (parallel)
#endif
    for (long i = 0; i < static_cast<long>(count); ++i) {
        try {
            outs[i] = instance_gradients(model, params, instances[first + i], epoch, seed,
                                         first + i);
        } catch (...) {
#ifdef _OPENMP
            #pragma omp critical
#endif
            { if (!err) err = std::current_exception(); }
        }
    }
    if (err) std::rethrow_exception(err);

    // Deterministic reduction in instance order, independent of thread count.
    BatchResult res;
    for (auto& o : outs) {
        for (auto& [name, g] : o.grads) {
            auto it = res.grads.find(name);
            if (it == res.grads.end()) res.grads.emplace(name, g);
            else
                for (std::size_t i = 0; i < g.size(); ++i) it->second.data[i] += g.data[i];
        }
        res.loss += o.loss;
        res.rec_loss += o.rec;
        res.con_loss += o.con;
        res.degenerate_interests += o.degenerate;
        if (res.bn_stats.means.empty()) {
            res.bn_stats = o.bn;
        } else {
            for (std::size_t l = 0; l < o.bn.means.size(); ++l) {
                for (std::size_t i = 0; i < o.bn.means[l].size(); ++i) {
                    res.bn_stats.means[l].data[i] += o.bn.means[l].data[i];
                    res.bn_stats.vars[l].data[i] += o.bn.vars[l].data[i];
                }
            }
        }
    }
    double inv = count ? 1.0 / static_cast<double>(count) : 0.0;
    for (auto& [name, g] : res.grads)
        for (double& v : g.data) v *= inv;
    res.loss *= inv;
    res.rec_loss *= inv;
    res.con_loss *= inv;
    for (auto& m : res.bn_stats.means)
        for (double& v : m.data) v *= inv;
    for (auto& m : res.bn_stats.vars)
        for (double& v : m.data) v *= inv;
    return res;
}

MetricReport evaluate(const Model& model, const ParamStore& params,
                      const std::vector<DenseInstance>& instances, bool parallel) {
    std::vector<std::vector<double>> all_scores(instances.size());
    std::exception_ptr err;
#ifdef _OPENMP
    #pragma omp parallel for schedule(dynamic) if (parallel)
#endif
    for (long i = 0; i < static_cast<long>(instances.size()); ++i) {
        try {
            ad::Tape tape;
            ForwardResult fr = model.forward(tape, params, instances[i], Mode::Eval);
            all_scores[i] = fr.scores;
        } catch (...) {
#ifdef _OPENMP
            #pragma omp critical
#endif
            { if (!err) err = std::current_exception(); }
        }
    }
    if (err) std::rethrow_exception(err);

    MetricReport rep;
    std::vector<std::pair<double, int>> global;
    std::map<std::string, std::vector<std::pair<double, int>>> per_user;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto& s = all_scores[i];
        std::vector<double> negs(s.begin() + 1, s.end());
        RankMetrics rm = rank_metrics(s[0], negs);
        for (const auto& [k, v] : rm.hr) rep.hr[k] += v;
        for (const auto& [k, v] : rm.ndcg) rep.ndcg[k] += v;
        rep.mrr += rm.mrr;
        global.emplace_back(s[0], 1);
        per_user[instances[i].user].emplace_back(s[0], 1);
        for (double n : negs) {
            global.emplace_back(n, 0);
            per_user[instances[i].user].emplace_back(n, 0);
        }
        ++rep.n_instances;
    }
    if (rep.n_instances == 0) throw std::invalid_argument("evaluate: empty instance set");
    double inv = 1.0 / static_cast<double>(rep.n_instances);
    for (auto& [k, v] : rep.hr) v *= inv;
    for (auto& [k, v] : rep.ndcg) v *= inv;
    rep.mrr *= inv;
    rep.auc_v = auc(global);
    rep.gauc_v = gauc(per_user);
    return rep;
}

int m_proxy_dense(const DenseInstance& inst, const std::vector<std::string>& item_category,
                  std::int64_t horizon) {
    std::unordered_map<std::string, int> counts;
    for (std::size_t i = 0; i < inst.prefix.size(); ++i) {
        if (inst.target_ts - inst.prefix_ts[i] <= horizon && inst.prefix_ts[i] <= inst.target_ts)
            ++counts[item_category[inst.prefix[i]]];
    }
    auto m_of = [&](int item) {
        auto it = counts.find(item_category[item]);
        return it == counts.end() ? 0 : it->second;
    };
    int m_pos = m_of(inst.target);
    int m = 0;
    for (int n : inst.negatives) m += m_of(n) - m_pos;
    return m;
}

std::map<std::string, MetricReport> grouped_evaluate(const Model& model,
                                                     const ParamStore& params,
                                                     const Dataset& data,
                                                     const std::vector<DenseInstance>& instances,
                                                     bool parallel, std::int64_t horizon) {
    std::map<std::string, std::vector<DenseInstance>> buckets;
    for (const auto& inst : instances) {
        int m = m_proxy_dense(inst, data.item_category, horizon);
        std::string key = m < 0 ? "m<0" : (m == 0 ? "m=0" : (m < 5 ? "1<=m<5" : "m>=5"));
        buckets[key].push_back(inst);
    }
    std::map<std::string, MetricReport> out;
    for (const auto& [key, insts] : buckets)
        out.emplace(key, evaluate(model, params, insts, parallel));
    return out;
}

std::string format_history(const std::vector<EpochRecord>& history) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed;
    os << "epoch\tstep\tloss\trec_loss\tcon_loss\tvalid_gauc\n";
    for (const auto& r : history)
        os << r.epoch << '\t' << r.steps << '\t' << r.loss << '\t' << r.rec_loss << '\t'
           << r.con_loss << '\t' << r.valid_gauc << '\n';
    return os.str();
}

bool EarlyStop::record(int epoch, double value) {
    bool improved = value > best;
    if (improved) {
        best = value;
        best_epoch = epoch;
    }
    if (prev >= 0.0 && value < prev) ++decreases;
    else decreases = 0;
    prev = value;
    return improved;
}

TrainResult train(const Model& model, const Dataset& data, const TrainConfig& cfg,
                  ParamStore initial, const std::string& history_path) {
    if (data.train.empty() || data.valid.empty())
        throw std::invalid_argument("train: empty train or validation split");
    ParamStore params = std::move(initial);
    Adam opt(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);

    std::vector<DenseInstance> train_set = data.train;
    if (cfg.max_train_instances > 0 && train_set.size() > cfg.max_train_instances)
        train_set.resize(cfg.max_train_instances);

    TrainResult result;
    long steps = 0;
    EarlyStop stop;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        // Deterministic shuffle from the "shuffle" sub-stream.
        Rng shuffle(substream_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        std::vector<DenseInstance> order = train_set;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle.index(i)]);

        double ep_loss = 0.0, ep_rec = 0.0, ep_con = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
            std::size_t count = std::min<std::size_t>(cfg.batch_size, order.size() - first);
            BatchResult br = batch_gradients(model, params, order, first, count, epoch,
                                             cfg.seed, cfg.parallel);
            opt.step(params, br.grads, cfg.l2, cfg.clip, cfg.clip_norm);
            // Fold batch statistics into the running estimates.
            for (int l = 0; l < static_cast<int>(br.bn_stats.means.size()); ++l) {
                std::string bn = "mlp4.bn" + std::to_string(l + 1) + ".";
                Tensor& rm = params.get(bn + "mean");
                Tensor& rv = params.get(bn + "var");
                double mom = model.config().bn_momentum;
                for (std::size_t i = 0; i < rm.size(); ++i) {
                    rm.data[i] = mom * rm.data[i] + (1.0 - mom) * br.bn_stats.means[l].data[i];
                    rv.data[i] = mom * rv.data[i] + (1.0 - mom) * br.bn_stats.vars[l].data[i];
                }
            }
            ep_loss += br.loss;
            ep_rec += br.rec_loss;
            ep_con += br.con_loss;
            ++steps;
            ++n_batches;
        }
        MetricReport val = evaluate(model, params, data.valid, cfg.parallel);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.steps = steps;
        rec.loss = n_batches ? ep_loss / n_batches : 0.0;
        rec.rec_loss = n_batches ? ep_rec / n_batches : 0.0;
        rec.con_loss = n_batches ? ep_con / n_batches : 0.0;
        rec.valid_gauc = val.gauc_v;
        result.history.push_back(rec);
        result.epochs_run = epoch;

        if (stop.record(epoch, val.gauc_v)) {
            result.params = params;
            result.best_epoch = epoch;
        }
        if (stop.should_stop()) break;
    }
    if (result.best_epoch == 0) result.params = params;
    if (!history_path.empty()) {
        std::ofstream os(history_path, std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open " + history_path);
        os << format_history(result.history);
    }
    return result;
}

}  // namespace frec
