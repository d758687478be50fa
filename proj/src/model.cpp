#include "frec/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace frec {

using namespace ad;

void ModelConfig::validate() const {
    if (embed_dim < 1 || n_interests < 1 || window < 1 || max_len < 1 || kernel_size < 1)
        throw std::invalid_argument("ModelConfig: dimensions must be >= 1");
    if (n_cross < 0) throw std::invalid_argument("ModelConfig: n_cross must be >= 0");
    if (alpha < 0.0) throw std::invalid_argument("ModelConfig: alpha must be >= 0");
    if (!no_fru && static_cast<int>(conv_widths.size()) != n_cross)
        throw std::invalid_argument("ModelConfig: conv_widths must have n_cross entries");
    if (mlp4_hidden.size() != 2)
        throw std::invalid_argument("ModelConfig: mlp4_hidden must have 2 entries");
    if (train_negatives < 1 || eval_negatives < 1 || n_augmentations < 1)
        throw std::invalid_argument("ModelConfig: candidate counts must be >= 1");
}

RecentWindow truncate_recent(const std::vector<int>& items, int T) {
    if (T < 1) throw std::invalid_argument("truncate_recent: T must be >= 1");
    RecentWindow w;
    w.T = T;
    w.T_u = std::min<int>(T, static_cast<int>(items.size()));
    w.items.assign(items.end() - w.T_u, items.end());
    return w;
}

int count_repetitions(const RecentWindow& window, int target) {
    return static_cast<int>(std::count(window.items.begin(), window.items.end(), target));
}

AugmentationSpec augment_window(RecentWindow& window, int target, Rng& rng) {
    if (window.T_u < 1) throw std::invalid_argument("augment_window: empty window");
    AugmentationSpec spec;
    spec.n_rep = count_repetitions(window, target);
    int lo = std::max(spec.n_rep, 1);
    spec.n_replace = lo + static_cast<int>(rng.index(window.T_u - lo + 1));
    auto picks = rng.sample_without_replacement(spec.n_replace, window.T_u);
    for (auto p : picks) spec.positions.push_back(static_cast<int>(p));
    std::sort(spec.positions.begin(), spec.positions.end());
    for (int p : spec.positions) window.items[p] = target;
    return spec;
}

ParamStore Model::init_params(int vocab_size, std::uint64_t seed) const {
    const auto& c = cfg_;
    ParamStore ps;
    auto rng_for = [&](const std::string& name) {
        return Rng(substream_seed(seed, "init/" + name));
    };
    auto glorot = [&](const std::string& name, int r, int co, bool decay = true) {
        Rng r0 = rng_for(name);
        ps.add(name, glorot_init(r, co, r0), decay);
    };
    {
        Rng r0 = rng_for("embed");
        double lim = 1.0 / std::sqrt(static_cast<double>(c.embed_dim));
        ps.add("embed", uniform_init(c.embed_dim, vocab_size, -lim, lim, r0), false);
    }
    int d = c.embed_dim, K = c.n_interests, T = c.window, h1 = c.mlp1_hidden();
    glorot("mlp1.W1", d, h1);
    ps.add("mlp1.b1", Tensor::zeros(1, h1), false);
    glorot("mlp1.W2", h1, K);
    glorot("mlp2.W1", 2 * T, T);
    ps.add("mlp2.b1", Tensor::zeros(1, T), false);
    glorot("mlp2.W2", T, 1);
    ps.add("mlp2.b2", Tensor::zeros(1, 1), false);
    glorot("mlp3.W1", 2 * K, K);
    ps.add("mlp3.b1", Tensor::zeros(1, K), false);
    glorot("mlp3.W2", K, 1);
    ps.add("mlp3.b2", Tensor::zeros(1, 1), false);
    for (int l = 0; l < c.n_cross; ++l) {
        Rng rr = rng_for("cross_row." + std::to_string(l));
        ps.add("cross_row." + std::to_string(l), uniform_init(T, T, -0.01, 0.01, rr));
        Rng rc = rng_for("cross_col." + std::to_string(l));
        ps.add("cross_col." + std::to_string(l), uniform_init(K, K, -0.01, 0.01, rc));
    }
    int din = 2 * K;
    for (std::size_t l = 0; l < c.conv_widths.size(); ++l) {
        glorot("conv." + std::to_string(l), c.conv_widths[l], din * c.kernel_size);
        din = c.conv_widths[l];
    }
    for (const char* g : {"Wz", "Wr", "Wh", "Uz", "Ur", "Uh"})
        glorot(std::string("fru.") + g, d, d);
    glorot("fru.Vz", d, c.conv_out());
    glorot("fru.Vr", d, c.conv_out());
    for (const char* b : {"bz", "br", "bh"})
        ps.add(std::string("fru.") + b, Tensor::zeros(d, 1), false);
    int in4 = c.mlp4_input(), a = c.mlp4_hidden[0], b = c.mlp4_hidden[1];
    // The two hidden layers feed batch norm, which cancels any bias, so they
    // are bias-free; only the output layer keeps one.
    glorot("mlp4.W1", in4, a);
    ps.add("mlp4.bn1.gamma", Tensor::full(1, a, 1.0), false);
    ps.add("mlp4.bn1.beta", Tensor::zeros(1, a), false);
    ps.add("mlp4.bn1.mean", Tensor::zeros(1, a), false, false);
    ps.add("mlp4.bn1.var", Tensor::full(1, a, 1.0), false, false);
    glorot("mlp4.W2", a, b);
    ps.add("mlp4.bn2.gamma", Tensor::full(1, b, 1.0), false);
    ps.add("mlp4.bn2.beta", Tensor::zeros(1, b), false);
    ps.add("mlp4.bn2.mean", Tensor::zeros(1, b), false, false);
    ps.add("mlp4.bn2.var", Tensor::full(1, b, 1.0), false, false);
    glorot("mlp4.W3", b, 1);
    ps.add("mlp4.b3", Tensor::zeros(1, 1), false);
    return ps;
}

namespace {

Value ones_col(Tape& t, int n) { return t.input(Tensor::full(n, 1, 1.0)); }

Value with_bias(Tape& t, Value x, Value b) {
    // x: n x f, b: 1 x f
    return add(x, matmul(ones_col(t, x.tape->val(x).rows), b));
}

}  // namespace

Model::Interests Model::extract_interests(Tape& tape, Value S, const ParamStore& params) const {
    Value X = transpose(S);  // L x d
    Value W1 = tape.param("mlp1.W1", params.get("mlp1.W1"));
    Value b1 = tape.param("mlp1.b1", params.get("mlp1.b1"));
    Value W2 = tape.param("mlp1.W2", params.get("mlp1.W2"));
    Value hid = tanh_op(with_bias(tape, matmul(X, W1), b1));
    Value logits = matmul(hid, W2);                 // L x K
    Value A = softmax(logits, Axis::Rows);          // normalized over positions
    return {matmul(S, A), A};
}

Value Model::compute_ism(Tape& tape, Value target_emb, Value window_embs, Value H, int T,
                         int* degenerate) const {
    const Tensor& Hv = tape.val(H);
    int d = Hv.rows, K = Hv.cols;
    int T_u = tape.val(window_embs).cols;
    if (tape.val(target_emb).rows != d || tape.val(target_emb).cols != 1)
        throw std::invalid_argument("compute_ism: target embedding must be " +
                                    std::to_string(d) + "x1");
    std::vector<int> bad;
    for (int k = 0; k < K; ++k) {
        double ss = 0.0;
        for (int i = 0; i < d; ++i) ss += Hv.at(i, k) * Hv.at(i, k);
        if (ss < 1e-24) bad.push_back(k);
    }
    Value H_use = H;
    if (!bad.empty()) {
        if (degenerate) *degenerate += static_cast<int>(bad.size());
        Tensor fallback(d, K);
        for (int k = 0; k < K; ++k) fallback.at(0, k) = 1.0;  // unit direction e1
        H_use = column_patch(H, bad, fallback);
    }
    Value ss = matmul(tape.input(Tensor::full(1, d, 1.0)), mul(H_use, H_use));  // 1 x K
    Value ninv = reciprocal(sqrt_op(ss));
    Value E = concat_cols(target_emb, window_embs);        // d x (1+T_u)
    Value P = matmul(transpose(E), H_use);                 // (1+T_u) x K
    Value pt = slice_rows(P, 0, 1);
    Value Ph = slice_rows(P, 1, 1 + T_u);
    Value ones = ones_col(tape, T_u);
    Value D = sub(Ph, matmul(ones, pt));
    Value Ds = mul(D, matmul(ones, ninv));
    Value F = reciprocal(add_scalar(abs_op(Ds), 1.0));
    if (T > T_u) F = concat_rows(F, tape.input(Tensor::zeros(T - T_u, K)));
    return F;
}

Value Model::cross_rows(Tape& tape, Value F, const ParamStore& params) const {
    Value P = F;
    for (int c = 0; c < cfg_.n_cross; ++c) {
        Value W = tape.param("cross_row." + std::to_string(c),
                             params.get("cross_row." + std::to_string(c)));
        P = cfg_.no_cross ? matmul(W, P) : add(mul(F, matmul(W, P)), P);
    }
    return P;
}

Value Model::cross_cols(Tape& tape, Value F, const ParamStore& params) const {
    Value Q = F;
    for (int c = 0; c < cfg_.n_cross; ++c) {
        Value W = tape.param("cross_col." + std::to_string(c),
                             params.get("cross_col." + std::to_string(c)));
        Q = cfg_.no_cross ? matmul(Q, W) : add(mul(F, matmul(Q, W)), Q);
    }
    return Q;
}

Model::Fusion Model::fuse_interests(Tape& tape, Value H, Value P_C, Value P_0,
                                    const ParamStore& params) const {
    int K = tape.val(H).cols;
    if (cfg_.no_fusion) {
        Value w = tape.input(Tensor::full(K, 1, 1.0 / K));
        return {matmul(H, w), w};
    }
    Value X = concat_cols(transpose(P_C), transpose(P_0));  // K x 2T
    Value W1 = tape.param("mlp2.W1", params.get("mlp2.W1"));
    Value b1 = tape.param("mlp2.b1", params.get("mlp2.b1"));
    Value W2 = tape.param("mlp2.W2", params.get("mlp2.W2"));
    Value b2 = tape.param("mlp2.b2", params.get("mlp2.b2"));
    Value hid = tanh_op(with_bias(tape, matmul(X, W1), b1));
    Value logits = with_bias(tape, matmul(hid, W2), b2);    // K x 1
    Value w = softmax(logits, Axis::Rows);
    return {matmul(H, w), w};
}

Value Model::causal_conv_stack(Tape& tape, Value Qhat0, const ParamStore& params) const {
    Value X = Qhat0;
    for (std::size_t l = 0; l < cfg_.conv_widths.size(); ++l) {
        Value W = tape.param("conv." + std::to_string(l),
                             params.get("conv." + std::to_string(l)));
        X = leaky_relu(causal_conv(X, W, cfg_.kernel_size), cfg_.leaky_slope);
    }
    return X;
}

Value Model::fru_forward(Tape& tape, Value x_cols, Value Qhat, Value h0,
                         const ParamStore& params, bool vanilla) const {
    int T_u = tape.val(x_cols).cols;
    auto P = [&](const char* n) { return tape.param(std::string("fru.") + n,
                                                    params.get(std::string("fru.") + n)); };
    Value Wz = P("Wz"), Wr = P("Wr"), Wh = P("Wh");
    Value Uz = P("Uz"), Ur = P("Ur"), Uh = P("Uh");
    Value Vz{}, Vr{};
    if (!vanilla) { Vz = P("Vz"); Vr = P("Vr"); }
    Value bz = P("bz"), br = P("br"), bh = P("bh");
    Value h = h0;
    for (int l = 0; l < T_u; ++l) {
        Value x = slice_cols(x_cols, l, l + 1);
        Value az = add(add(matmul(Wz, x), matmul(Uz, h)), bz);
        Value ar = add(add(matmul(Wr, x), matmul(Ur, h)), br);
        if (!vanilla) {
            Value q = transpose(slice_rows(Qhat, l, l + 1));  // conv_out x 1
            az = add(az, matmul(Vz, q));
            ar = add(ar, matmul(Vr, q));
        }
        Value z = sigmoid(az);
        Value r = sigmoid(ar);
        Value cand = tanh_op(add(add(matmul(Wh, x), matmul(Uh, mul(r, h))), bh));
        h = add(h, mul(z, sub(cand, h)));  // (1-z) h + z cand
    }
    return h;
}

Value Model::predict_fatigue(Tape& tape, Value Q_C, Value Q_0, int T_u,
                             const ParamStore& params) const {
    if (T_u < 1) throw std::invalid_argument("predict_fatigue: empty window");
    Value X = concat_cols(Q_C, Q_0);  // T x 2K
    Value W1 = tape.param("mlp3.W1", params.get("mlp3.W1"));
    Value b1 = tape.param("mlp3.b1", params.get("mlp3.b1"));
    Value W2 = tape.param("mlp3.W2", params.get("mlp3.W2"));
    Value b2 = tape.param("mlp3.b2", params.get("mlp3.b2"));
    Value hid = tanh_op(with_bias(tape, matmul(X, W1), b1));
    Value out = with_bias(tape, matmul(hid, W2), b2);  // T x 1
    return mean_all(slice_rows(out, 0, T_u));          // padded rows masked out
}

Value Model::mlp4_scores(Tape& tape, Value features, const ParamStore& params,
                         Mode mode, BnBatchStats* stats) const {
    auto P = [&](const std::string& n) { return tape.param(n, params.get(n)); };
    Value x = features;
    for (int layer = 1; layer <= 2; ++layer) {
        std::string p = "mlp4.";
        std::string bn = p + "bn" + std::to_string(layer) + ".";
        Value a = matmul(x, P(p + "W" + std::to_string(layer)));
        Value gamma = P(bn + "gamma");
        Value beta = P(bn + "beta");
        Value normed;
        if (mode == Mode::Train) {
            Tensor bm, bv;
            normed = batchnorm_train(a, gamma, beta, cfg_.bn_eps, &bm, &bv);
            if (stats) {
                stats->means.push_back(bm);
                stats->vars.push_back(bv);
            }
        } else {
            normed = batchnorm_eval(a, gamma, beta, params.get(bn + "mean"),
                                    params.get(bn + "var"), cfg_.bn_eps);
        }
        x = relu(normed);
    }
    return with_bias(tape, matmul(x, P("mlp4.W3")), P("mlp4.b3"));
}

Value score_from(Value g, Value f) { return sub(g, tanh_op(f)); }

Value rec_loss(Tape& tape, Value scores) {
    (void)tape;
    return sub(logsumexp(scores), slice_rows(scores, 0, 1));
}

Value contrastive_loss(Tape& tape, Value fatigues) {
    (void)tape;
    Value negated = neg(fatigues);
    return sub(logsumexp(negated), slice_rows(negated, 0, 1));
}

Value total_loss(Value l_rec, Value l_con, double alpha) {
    return add(l_rec, mul_scalar(l_con, alpha));
}

ForwardResult Model::forward(Tape& tape, const ParamStore& params, const DenseInstance& inst,
                             Mode mode, Rng* aug_rng) const {
    if (inst.prefix.empty()) throw std::invalid_argument("forward: empty prefix");
    if (inst.target < 0) throw std::invalid_argument("forward: missing target");
    const auto& c = cfg_;
    std::vector<int> prefix = inst.prefix;
    if (static_cast<int>(prefix.size()) > c.max_len)
        prefix.erase(prefix.begin(), prefix.end() - c.max_len);

    ForwardResult res;
    Value embed = tape.param("embed", params.get("embed"));
    Value S = lookup(embed, prefix);
    Interests in = extract_interests(tape, S, params);

    RecentWindow window = truncate_recent(prefix, c.window);
    Value window_embs = lookup(embed, window.items);

    std::vector<int> candidates{inst.target};
    candidates.insert(candidates.end(), inst.negatives.begin(), inst.negatives.end());

    Value features{}, fatigues{};
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
        Value e_t = lookup(embed, {candidates[ci]});
        Value F = compute_ism(tape, e_t, window_embs, in.H, c.window,
                              &res.degenerate_interests);
        Value P_C = cross_rows(tape, F, params);
        Fusion fu = fuse_interests(tape, in.H, P_C, F, params);
        Value Q_C = cross_cols(tape, F, params);
        Value Qhat = F;
        if (!c.no_fru) Qhat = causal_conv_stack(tape, concat_cols(Q_C, F), params);
        Value h_T = fru_forward(tape, window_embs, Qhat, fu.h, params, c.no_fru);
        Value f = predict_fatigue(tape, Q_C, F, window.T_u, params);
        Value row = transpose(concat_rows(concat_rows(fu.h, h_T), e_t));  // 1 x 3d
        features = ci == 0 ? row : concat_rows(features, row);
        fatigues = ci == 0 ? f : concat_rows(fatigues, f);
    }

    Value g = mlp4_scores(tape, features, params, mode, &res.bn_stats);
    Value y = score_from(g, fatigues);
    const Tensor& yv = tape.val(y);
    res.scores.assign(yv.data.begin(), yv.data.end());
    res.fatigue_pos = tape.val(fatigues).at(0, 0);

    if (mode == Mode::Eval) {
        res.loss = res.rec_loss = res.con_loss = tape.input(Tensor::zeros(1, 1));
        return res;
    }

    res.rec_loss = rec_loss(tape, y);
    bool contrastive_on = !c.no_cl && c.alpha > 0.0;
    if (contrastive_on) {
        if (!aug_rng)
            throw std::invalid_argument("forward: contrastive branch needs an rng");
        Value f_col = slice_rows(fatigues, 0, 1);
        for (int j = 0; j < c.n_augmentations; ++j) {
            RecentWindow aug = window;
            augment_window(aug, inst.target, *aug_rng);
            Value aug_embs = lookup(embed, aug.items);
            Value e_t = lookup(embed, {inst.target});
            Value F_aug = compute_ism(tape, e_t, aug_embs, in.H, c.window,
                                      &res.degenerate_interests);
            Value Qc_aug = cross_cols(tape, F_aug, params);
            Value f_aug = predict_fatigue(tape, Qc_aug, F_aug, aug.T_u, params);
            f_col = concat_rows(f_col, f_aug);
        }
        res.con_loss = contrastive_loss(tape, f_col);
    } else {
        res.con_loss = tape.input(Tensor::zeros(1, 1));
    }
    res.loss = total_loss(res.rec_loss, res.con_loss, contrastive_on ? c.alpha : 0.0);
    return res;
}

}  // namespace frec
