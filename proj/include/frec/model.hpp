#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frec/params.hpp"
#include "frec/rng.hpp"
#include "frec/tape.hpp"

namespace frec {

struct ModelConfig {
    int embed_dim = 40;          // d
    int n_interests = 4;         // K
    int n_cross = 2;             // C, shared by cross and conv stacks
    int kernel_size = 5;         // s
    int window = 50;             // T, truncation threshold
    int max_len = 250;           // maximum sequence length kept per prefix
    std::vector<int> conv_widths = {20, 40};
    std::vector<int> mlp4_hidden = {100, 64};
    double alpha = 0.4;          // contrastive weight
    double bn_eps = 1e-5;
    double bn_momentum = 0.9;
    double leaky_slope = 0.01;
    int train_negatives = 4;
    int eval_negatives = 9;
    int n_augmentations = 4;
    // Ablation switches.
    bool no_fusion = false;      // uniform interest weights instead of learned fusion
    bool no_fru = false;         // vanilla GRU, conv fatigue features removed
    bool no_cross = false;       // dense layers instead of cross layers
    bool no_cl = false;          // alpha treated as 0

    int mlp1_hidden() const { return std::max(1, embed_dim / 2); }
    int conv_out() const { return conv_widths.empty() ? 2 * n_interests : conv_widths.back(); }
    int mlp4_input() const { return 3 * embed_dim; }
    void validate() const;
};

// Instance with item ids already mapped to dense indices.
struct DenseInstance {
    std::vector<int> prefix;
    std::vector<std::int64_t> prefix_ts;
    int target = -1;
    std::int64_t target_ts = 0;
    std::vector<int> negatives;
    std::string user;
};

struct RecentWindow {
    std::vector<int> items;  // last T_u items, original order
    int T_u = 0;
    int T = 0;
};

RecentWindow truncate_recent(const std::vector<int>& items, int T);

int count_repetitions(const RecentWindow& window, int target);

struct AugmentationSpec {
    int n_rep = 0;
    int n_replace = 0;
    std::vector<int> positions;
};

// Replaces N in [max(N_r,1), T_u] uniformly chosen real positions by the
// target item; N itself is drawn uniformly from that interval.
AugmentationSpec augment_window(RecentWindow& window, int target, Rng& rng);

enum class Mode { Train, Eval };

// Batch statistics captured in train mode so the trainer can fold them into
// the running estimates deterministically.
struct BnBatchStats {
    std::vector<Tensor> means;
    std::vector<Tensor> vars;
};

struct ForwardResult {
    ad::Value loss;      // L = L_rec + alpha * L_con (train); unset in eval
    ad::Value rec_loss;
    ad::Value con_loss;  // 1x1 zero when contrastive branch is off
    std::vector<double> scores;  // positive first, then negatives
    double fatigue_pos = 0.0;
    BnBatchStats bn_stats;
    int degenerate_interests = 0;
};

class Model {
public:
    Model(ModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

    const ModelConfig& config() const { return cfg_; }

    ParamStore init_params(int vocab_size, std::uint64_t seed) const;

    // Full pipeline for one instance. In train mode aug_rng drives the
    // contrastive augmentations (required unless the branch is off).
    ForwardResult forward(ad::Tape& tape, const ParamStore& params,
                          const DenseInstance& inst, Mode mode,
                          Rng* aug_rng = nullptr) const;

    // ---- pipeline stages, exposed for tests ----

    struct Interests {
        ad::Value H;  // d x K
        ad::Value A;  // L x K
    };
    Interests extract_interests(ad::Tape& tape, ad::Value S, const ParamStore& params) const;

    // F in R^{T x K}; rows beyond T_u are exact zeros. Degenerate interest
    // directions (norm below 1e-12) fall back to the first unit vector and
    // bump *degenerate.
    ad::Value compute_ism(ad::Tape& tape, ad::Value target_emb, ad::Value window_embs,
                          ad::Value H, int T, int* degenerate = nullptr) const;

    ad::Value cross_rows(ad::Tape& tape, ad::Value F, const ParamStore& params) const;
    ad::Value cross_cols(ad::Tape& tape, ad::Value F, const ParamStore& params) const;

    struct Fusion {
        ad::Value h;  // d x 1
        ad::Value w;  // K x 1
    };
    Fusion fuse_interests(ad::Tape& tape, ad::Value H, ad::Value P_C, ad::Value P_0,
                          const ParamStore& params) const;

    ad::Value causal_conv_stack(ad::Tape& tape, ad::Value Qhat0, const ParamStore& params) const;

    // x_cols: d x T_u embeddings of the real window items; Qhat rows beyond
    // T_u are never consumed. vanilla=true drops the fatigue gate inputs.
    ad::Value fru_forward(ad::Tape& tape, ad::Value x_cols, ad::Value Qhat, ad::Value h0,
                          const ParamStore& params, bool vanilla) const;

    // Mean of the per-position MLP3 output over the T_u real positions.
    ad::Value predict_fatigue(ad::Tape& tape, ad::Value Q_C, ad::Value Q_0, int T_u,
                              const ParamStore& params) const;

    // Rows of `features` are candidate vectors [h; h_T; e_t]; returns the
    // MLP4 outputs as an n x 1 column.
    ad::Value mlp4_scores(ad::Tape& tape, ad::Value features, const ParamStore& params,
                          Mode mode, BnBatchStats* stats) const;

private:
    ModelConfig cfg_;
};

// Score combination y = g - tanh(f).
ad::Value score_from(ad::Value g, ad::Value f);

// Softmax losses, max-shifted. `scores`/`fatigues` are n x 1 columns with the
// positive entry first.
ad::Value rec_loss(ad::Tape& tape, ad::Value scores);
ad::Value contrastive_loss(ad::Tape& tape, ad::Value fatigues);

ad::Value total_loss(ad::Value l_rec, ad::Value l_con, double alpha);

}  // namespace frec
