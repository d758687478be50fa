#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "frec/fdcheck.hpp"
#include "frec/model.hpp"

using namespace frec;
using namespace frec::ad;

namespace {

ModelConfig small_config(int d, int K, int T, int C = 1, int s = 2) {
    ModelConfig cfg;
    cfg.embed_dim = d;
    cfg.n_interests = K;
    cfg.window = T;
    cfg.n_cross = C;
    cfg.kernel_size = s;
    cfg.conv_widths.assign(C, 2 * K);
    cfg.mlp4_hidden = {4, 3};
    return cfg;
}

Tensor random_tensor(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(r, c);
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Plain reference GRU, coded from the standard update equations with no
// shared code beyond the tensor type.
Tensor reference_gru(const Tensor& x_cols, const Tensor& h0,
                     const std::map<std::string, Tensor>& p) {
    int d = h0.rows;
    Tensor h = h0;
    auto mat = [&](const Tensor& W, const Tensor& v) {
        Tensor out(W.rows, 1);
        for (int i = 0; i < W.rows; ++i) {
            double acc = 0.0;
            for (int j = 0; j < W.cols; ++j) acc += W.at(i, j) * v.at(j, 0);
            out.at(i, 0) = acc;
        }
        return out;
    };
    for (int l = 0; l < x_cols.cols; ++l) {
        Tensor x(d, 1);
        for (int i = 0; i < d; ++i) x.at(i, 0) = x_cols.at(i, l);
        Tensor wzx = mat(p.at("Wz"), x), uzh = mat(p.at("Uz"), h);
        Tensor wrx = mat(p.at("Wr"), x), urh = mat(p.at("Ur"), h);
        Tensor z(d, 1), r(d, 1);
        for (int i = 0; i < d; ++i) {
            z.at(i, 0) = 1.0 / (1.0 + std::exp(-(wzx.at(i, 0) + uzh.at(i, 0) +
                                                 p.at("bz").at(i, 0))));
            r.at(i, 0) = 1.0 / (1.0 + std::exp(-(wrx.at(i, 0) + urh.at(i, 0) +
                                                 p.at("br").at(i, 0))));
        }
        Tensor rh(d, 1);
        for (int i = 0; i < d; ++i) rh.at(i, 0) = r.at(i, 0) * h.at(i, 0);
        Tensor whx = mat(p.at("Wh"), x), uhrh = mat(p.at("Uh"), rh);
        for (int i = 0; i < d; ++i) {
            double cand = std::tanh(whx.at(i, 0) + uhrh.at(i, 0) + p.at("bh").at(i, 0));
            h.at(i, 0) = (1.0 - z.at(i, 0)) * h.at(i, 0) + z.at(i, 0) * cand;
        }
    }
    return h;
}

}  // namespace

TEST_CASE("column cross hand case: scalar 2 with weight 3 gives 14") {
    ModelConfig cfg = small_config(2, 1, 1, 1);
    Model model(cfg);
    ParamStore params = model.init_params(4, 1);
    params.get("cross_col.0") = Tensor::full(1, 1, 3.0);
    Tape tape;
    Value F = tape.input(Tensor::full(1, 1, 2.0));
    CHECK(tape.val(model.cross_cols(tape, F, params)).at(0, 0) == 14.0);
}

TEST_CASE("column cross with zero weights is the identity") {
    ModelConfig cfg = small_config(2, 3, 4, 2);
    Model model(cfg);
    ParamStore params = model.init_params(4, 1);
    params.get("cross_col.0") = Tensor::zeros(3, 3);
    params.get("cross_col.1") = Tensor::zeros(3, 3);
    Rng rng(3);
    Tensor Fv = random_tensor(4, 3, rng);
    Tape tape;
    const Tensor& out = tape.val(model.cross_cols(tape, tape.input(Fv), params));
    for (std::size_t i = 0; i < Fv.size(); ++i) CHECK(out.data[i] == Fv.data[i]);
}

TEST_CASE("zero similarity is absorbing for the column cross") {
    ModelConfig cfg = small_config(2, 3, 4, 2);
    Model model(cfg);
    ParamStore params = model.init_params(4, 2);
    Tape tape;
    const Tensor& out =
        tape.val(model.cross_cols(tape, tape.input(Tensor::zeros(4, 3)), params));
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("conv stack hand case with kernel [1,1]") {
    // One layer, 1 input channel, width-2 kernel of ones: y_l = x_{l-1} + x_l.
    ModelConfig cfg = small_config(2, 1, 3, 1, 2);
    cfg.conv_widths = {1};
    Model model(cfg);
    ParamStore params = model.init_params(4, 1);
    // Layer 0 consumes 2K = 2 channels; silence the second channel.
    params.get("conv.0") = Tensor::from_rows({{1.0, 1.0, 0.0, 0.0}});
    Tensor in(3, 2);
    in.at(0, 0) = 1.0;
    in.at(1, 0) = 2.0;
    in.at(2, 0) = 3.0;
    Tape tape;
    const Tensor& out = tape.val(model.causal_conv_stack(tape, tape.input(in), params));
    CHECK(out.at(0, 0) == 1.0);
    CHECK(out.at(1, 0) == 3.0);
    CHECK(out.at(2, 0) == 5.0);
}

TEST_CASE("zero kernels produce a zero conv output") {
    ModelConfig cfg = small_config(2, 2, 5, 2, 3);
    Model model(cfg);
    ParamStore params = model.init_params(4, 3);
    params.get("conv.0") = Tensor::zeros(4, 4 * 3);
    params.get("conv.1") = Tensor::zeros(4, 4 * 3);
    Rng rng(5);
    Tape tape;
    const Tensor& out =
        tape.val(model.causal_conv_stack(tape, tape.input(random_tensor(5, 4, rng)), params));
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("conv stack is causal") {
    ModelConfig cfg = small_config(2, 2, 6, 2, 3);
    Model model(cfg);
    ParamStore params = model.init_params(4, 4);
    Rng rng(7);
    Tensor base_in = random_tensor(6, 4, rng);
    Tape t0;
    const Tensor base = t0.val(model.causal_conv_stack(t0, t0.input(base_in), params));
    for (int l = 0; l < 5; ++l) {
        Tensor perturbed = base_in;
        for (int j = l + 1; j < 6; ++j)
            for (int c = 0; c < 4; ++c) perturbed.at(j, c) += rng.uniform(-2.0, 2.0);
        Tape t1;
        const Tensor& out = t1.val(model.causal_conv_stack(t1, t1.input(perturbed), params));
        for (int j = 0; j <= l; ++j)
            for (int c = 0; c < base.cols; ++c) CHECK(out.at(j, c) == base.at(j, c));
    }
}

TEST_CASE("FRU hand case at d=1") {
    ModelConfig cfg = small_config(1, 1, 1, 1, 2);
    cfg.conv_widths = {1};
    Model model(cfg);
    ParamStore params = model.init_params(4, 5);
    for (const char* n : {"Wz", "Wr", "Wh", "Uz", "Ur", "Uh", "Vz", "Vr"})
        params.get(std::string("fru.") + n) = Tensor::full(1, 1, 1.0);
    for (const char* n : {"bz", "br", "bh"})
        params.get(std::string("fru.") + n) = Tensor::zeros(1, 1);
    Tape tape;
    Value x = tape.input(Tensor::full(1, 1, 1.0));
    Value Qhat = tape.input(Tensor::full(1, 1, 1.0));
    Value h0 = tape.input(Tensor::zeros(1, 1));
    Value h = model.fru_forward(tape, x, Qhat, h0, params, false);
    // z = sigma(1*1 + 1*0 + 1*1) = sigma(2); candidate = tanh(1); h = z*tanh(1).
    double want = (1.0 / (1.0 + std::exp(-2.0))) * std::tanh(1.0);  // 0.6708096
    CHECK(tape.val(h).at(0, 0) == doctest::Approx(want).epsilon(1e-9));
    CHECK(tape.val(h).at(0, 0) == doctest::Approx(0.6708).epsilon(1e-4));
}

TEST_CASE("FRU with zero fatigue weights matches an independent GRU") {
    ModelConfig cfg = small_config(3, 2, 4, 1, 2);
    Model model(cfg);
    for (std::uint64_t draw = 1; draw <= 100; ++draw) {
        CAPTURE(draw);
        Rng rng(draw * 131);
        ParamStore params = model.init_params(4, draw);
        params.get("fru.Vz") = Tensor::zeros(3, cfg.conv_out());
        params.get("fru.Vr") = Tensor::zeros(3, cfg.conv_out());
        for (const char* n : {"bz", "br", "bh"})
            params.get(std::string("fru.") + n) = random_tensor(3, 1, rng);
        int T_u = 1 + static_cast<int>(rng.index(4));
        Tensor x_cols = random_tensor(3, T_u, rng);
        Tensor h0 = random_tensor(3, 1, rng);
        Tensor Qhat = random_tensor(4, cfg.conv_out(), rng);

        Tape tape;
        Value h = model.fru_forward(tape, tape.input(x_cols), tape.input(Qhat),
                                    tape.input(h0), params, false);
        std::map<std::string, Tensor> ref;
        for (const char* n : {"Wz", "Wr", "Wh", "Uz", "Ur", "Uh", "bz", "br", "bh"})
            ref[n] = params.get(std::string("fru.") + n);
        Tensor want = reference_gru(x_cols, h0, ref);
        for (int i = 0; i < 3; ++i)
            CHECK(std::abs(tape.val(h).at(i, 0) - want.at(i, 0)) <= 1e-12);
    }
}

TEST_CASE("the vanilla flag ignores the fatigue weights entirely") {
    ModelConfig cfg = small_config(3, 2, 4, 1, 2);
    Model model(cfg);
    Rng rng(17);
    ParamStore params = model.init_params(4, 6);
    params.get("fru.Vz") = random_tensor(3, cfg.conv_out(), rng, 5.0, 9.0);
    params.get("fru.Vr") = random_tensor(3, cfg.conv_out(), rng, 5.0, 9.0);
    Tensor x_cols = random_tensor(3, 3, rng);
    Tensor h0 = random_tensor(3, 1, rng);
    Tensor Qhat = random_tensor(4, cfg.conv_out(), rng);
    Tape tape;
    Value h = model.fru_forward(tape, tape.input(x_cols), tape.input(Qhat),
                                tape.input(h0), params, true);
    std::map<std::string, Tensor> ref;
    for (const char* n : {"Wz", "Wr", "Wh", "Uz", "Ur", "Uh", "bz", "br", "bh"})
        ref[n] = params.get(std::string("fru.") + n);
    Tensor want = reference_gru(x_cols, h0, ref);
    for (int i = 0; i < 3; ++i)
        CHECK(std::abs(tape.val(h).at(i, 0) - want.at(i, 0)) <= 1e-12);
}

TEST_CASE("a saturated-closed update gate carries the state through") {
    ModelConfig cfg = small_config(2, 1, 3, 1, 2);
    Model model(cfg);
    Rng rng(19);
    ParamStore params = model.init_params(4, 7);
    params.get("fru.Wz") = Tensor::zeros(2, 2);
    params.get("fru.Uz") = Tensor::zeros(2, 2);
    params.get("fru.Vz") = Tensor::zeros(2, cfg.conv_out());
    params.get("fru.bz") = Tensor::full(2, 1, -1e6);
    Tensor x_cols = random_tensor(2, 3, rng);
    Tensor h0 = random_tensor(2, 1, rng);
    Tensor Qhat = random_tensor(3, cfg.conv_out(), rng);
    Tape tape;
    Value h = model.fru_forward(tape, tape.input(x_cols), tape.input(Qhat),
                                tape.input(h0), params, false);
    for (int i = 0; i < 2; ++i)
        CHECK(std::abs(tape.val(h).at(i, 0) - h0.at(i, 0)) <= 1e-9);
}

TEST_CASE("FRU never reads padded fatigue rows") {
    ModelConfig cfg = small_config(2, 2, 5, 1, 2);
    Model model(cfg);
    Rng rng(23);
    ParamStore params = model.init_params(4, 8);
    int T_u = 3;
    Tensor x_cols = random_tensor(2, T_u, rng);
    Tensor h0 = random_tensor(2, 1, rng);
    Tensor Qhat = random_tensor(5, cfg.conv_out(), rng);
    Tape t0;
    const Tensor a = t0.val(model.fru_forward(t0, t0.input(x_cols), t0.input(Qhat),
                                              t0.input(h0), params, false));
    for (int l = T_u; l < 5; ++l)
        for (int c = 0; c < Qhat.cols; ++c) Qhat.at(l, c) = rng.uniform(-50.0, 50.0);
    Tape t1;
    const Tensor b = t1.val(model.fru_forward(t1, t1.input(x_cols), t1.input(Qhat),
                                              t1.input(h0), params, false));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("an empty window returns the initial state unchanged") {
    ModelConfig cfg = small_config(2, 1, 3, 1, 2);
    Model model(cfg);
    Rng rng(27);
    ParamStore params = model.init_params(4, 9);
    Tensor h0 = random_tensor(2, 1, rng);
    Tape tape;
    Value h = model.fru_forward(tape, tape.input(Tensor(2, 0)),
                                tape.input(random_tensor(3, cfg.conv_out(), rng)),
                                tape.input(h0), params, false);
    for (int i = 0; i < 2; ++i) CHECK(tape.val(h).at(i, 0) == h0.at(i, 0));
}

TEST_CASE("count_repetitions counts only real positions") {
    RecentWindow w;
    w.items = {1, 2, 1, 3};
    w.T_u = 4;
    w.T = 6;
    CHECK(count_repetitions(w, 1) == 2);
    CHECK(count_repetitions(w, 9) == 0);
    w.items = {5, 5, 5};
    w.T_u = 3;
    CHECK(count_repetitions(w, 5) == 3);
}

TEST_CASE("augmentation replaces between max(N_r,1) and T_u positions") {
    Rng rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        RecentWindow w;
        w.items = {7, 8, 7, 9, 10};
        w.T_u = 5;
        w.T = 5;
        RecentWindow aug = w;
        AugmentationSpec spec = augment_window(aug, 7, rng);
        CHECK(spec.n_rep == 2);
        CHECK(spec.n_replace >= 2);
        CHECK(spec.n_replace <= 5);
        CHECK(static_cast<int>(spec.positions.size()) == spec.n_replace);
        std::set<int> uniq(spec.positions.begin(), spec.positions.end());
        CHECK(uniq.size() == spec.positions.size());
        int replaced = 0;
        for (int l = 0; l < 5; ++l) {
            if (uniq.count(l)) {
                CHECK(aug.items[l] == 7);
                ++replaced;
            } else {
                CHECK(aug.items[l] == w.items[l]);
            }
        }
        CHECK(replaced == spec.n_replace);
    }
}

TEST_CASE("full replacement yields a window of target copies") {
    Rng rng(5);
    RecentWindow w;
    w.items = {4, 4, 4};
    w.T_u = 3;
    w.T = 3;
    AugmentationSpec spec = augment_window(w, 4, rng);  // N_r = T_u forces N = T_u
    CHECK(spec.n_replace == 3);
    for (int it : w.items) CHECK(it == 4);
}

TEST_CASE("the replacement count is uniform over its interval") {
    Rng rng(777);
    std::map<int, int> freq;
    const int draws = 100000;
    for (int t = 0; t < draws; ++t) {
        RecentWindow w;
        w.items = {1, 2, 1, 3, 4};  // N_r(target=1) = 2
        w.T_u = 5;
        w.T = 5;
        freq[augment_window(w, 1, rng).n_replace]++;
    }
    CHECK(freq.size() == 4);  // {2,3,4,5}
    for (int n = 2; n <= 5; ++n)
        CHECK(std::abs(freq[n] / static_cast<double>(draws) - 0.25) < 0.01);
}

TEST_CASE("full replacement saturates the similarity rows at one") {
    ModelConfig cfg = small_config(3, 2, 4, 1, 2);
    Model model(cfg);
    ParamStore params = model.init_params(6, 11);
    Rng aug_rng(13);
    RecentWindow w;
    w.items = {2, 2, 2};  // every item is already the target: N = T_u
    w.T_u = 3;
    w.T = 4;
    augment_window(w, 2, aug_rng);
    Tape tape;
    Value embed = tape.param("embed", params.get("embed"));
    Value e_t = lookup(embed, {2});
    Value win = lookup(embed, w.items);
    Rng hr(1);
    Tensor Hv = random_tensor(3, 2, hr);
    Value F = model.compute_ism(tape, e_t, win, tape.input(Hv), 4);
    for (int l = 0; l < 3; ++l)
        for (int k = 0; k < 2; ++k) CHECK(tape.val(F).at(l, k) == 1.0);
}

TEST_CASE("constant fatigue head predicts that constant") {
    ModelConfig cfg = small_config(3, 2, 5, 1, 2);
    Model model(cfg);
    ParamStore params = model.init_params(4, 12);
    params.get("mlp3.W1") = Tensor::zeros(4, 2);
    params.get("mlp3.W2") = Tensor::zeros(2, 1);
    params.get("mlp3.b2") = Tensor::full(1, 1, 0.42);
    Rng rng(29);
    Tape tape;
    Value Q = tape.input(random_tensor(5, 2, rng));
    Value f = model.predict_fatigue(tape, Q, Q, 3, params);
    CHECK(tape.val(f).at(0, 0) == doctest::Approx(0.42).epsilon(1e-12));
}

TEST_CASE("fatigue ignores padded rows") {
    ModelConfig cfg = small_config(3, 2, 5, 1, 2);
    Model model(cfg);
    ParamStore params = model.init_params(4, 13);
    Rng rng(31);
    Tensor Qc = random_tensor(5, 2, rng), Q0 = random_tensor(5, 2, rng);
    Tape t0;
    double a = t0.val(model.predict_fatigue(t0, t0.input(Qc), t0.input(Q0), 3, params))
                   .at(0, 0);
    for (int l = 3; l < 5; ++l)
        for (int k = 0; k < 2; ++k) {
            Qc.at(l, k) = rng.uniform(-9.0, 9.0);
            Q0.at(l, k) = rng.uniform(-9.0, 9.0);
        }
    Tape t1;
    double b = t1.val(model.predict_fatigue(t1, t1.input(Qc), t1.input(Q0), 3, params))
                   .at(0, 0);
    CHECK(a == b);
}

TEST_CASE("fatigue of an empty window is an error") {
    ModelConfig cfg = small_config(3, 2, 5, 1, 2);
    Model model(cfg);
    ParamStore params = model.init_params(4, 14);
    Tape tape;
    Value Q = tape.input(Tensor::zeros(5, 2));
    CHECK_THROWS(model.predict_fatigue(tape, Q, Q, 0, params));
}

TEST_CASE("contrastive loss is ln 5 under symmetry") {
    Tape tape;
    Value f = tape.input(Tensor::full(5, 1, 0.37));
    CHECK(tape.val(contrastive_loss(tape, f)).at(0, 0) ==
          doctest::Approx(std::log(5.0)).epsilon(1e-9));
}

TEST_CASE("contrastive loss hand case f=0, f'=1") {
    Tape tape;
    Tensor fs(5, 1, 1.0);
    fs.at(0, 0) = 0.0;
    Value f = tape.input(fs);
    CHECK(tape.val(contrastive_loss(tape, f)).at(0, 0) ==
          doctest::Approx(std::log(1.0 + 4.0 * std::exp(-1.0))).epsilon(1e-9));
    CHECK(tape.val(contrastive_loss(tape, f)).at(0, 0) ==
          doctest::Approx(0.90483).epsilon(1e-4));
}

TEST_CASE("contrastive loss vanishes when augmentations are strongly fatigued") {
    Tape tape;
    Tensor fs(5, 1, 30.0);
    fs.at(0, 0) = 0.0;
    double l = tape.val(contrastive_loss(tape, tape.input(fs))).at(0, 0);
    CHECK(l > 0.0);  // log(1 + 4 e^-30)
    CHECK(l < 1e-12);

    Tape t2;
    Tensor fs2(5, 1, 200.0);  // so fatigued the loss underflows entirely
    fs2.at(0, 0) = 0.0;
    CHECK(t2.val(contrastive_loss(t2, t2.input(fs2))).at(0, 0) == 0.0);
}

TEST_CASE("contrastive loss is monotone in its arguments") {
    auto loss_of = [](double f, double fa) {
        Tape t;
        Tensor fs(5, 1, fa);
        fs.at(0, 0) = f;
        return t.val(contrastive_loss(t, t.input(fs))).at(0, 0);
    };
    CHECK(loss_of(0.5, 1.0) > loss_of(0.4, 1.0));  // increasing in f
    CHECK(loss_of(0.5, 1.0) > loss_of(0.5, 1.2));  // decreasing in f'
}

TEST_CASE("contrastive gradients pass finite differences") {
    ParamStore ps;
    Tensor fs = Tensor::column({0.2, 0.9, -0.3, 0.5, 1.4});
    ps.add("f", fs);
    auto eval = [](const ParamStore& p) {
        Tape t;
        Value l = contrastive_loss(t, t.param("f", p.get("f")));
        return FdEval{t.val(l).at(0, 0), t.kink_margin()};
    };
    Tape t;
    t.backward(contrastive_loss(t, t.param("f", ps.get("f"))));
    FdReport rep = finite_difference_check(eval, ps, t.param_grads());
    CHECK(rep.checked == 5);
    CHECK(rep.max_rel_error <= 1e-6);
}

TEST_CASE("short-term path end to end passes finite differences") {
    ModelConfig cfg = small_config(3, 2, 4, 2, 2);
    Model model(cfg);
    ParamStore full = model.init_params(4, 15);
    Rng rng(37);
    ParamStore ps;
    for (const auto& [name, t] : full.tensors)
        if (name.rfind("cross_col.", 0) == 0 || name.rfind("conv.", 0) == 0 ||
            name.rfind("fru.", 0) == 0 || name.rfind("mlp3.", 0) == 0)
            ps.add(name, t);
    ps.add("F", random_tensor(4, 2, rng, 0.05, 1.0));
    ps.add("x", random_tensor(3, 3, rng));
    ps.add("h0", random_tensor(3, 1, rng));

    auto build = [&](Tape& t, const ParamStore& p) {
        Value F = t.param("F", p.get("F"));
        Value Qc = model.cross_cols(t, F, p);
        Value Qhat = model.causal_conv_stack(t, concat_cols(Qc, F), p);
        Value h = model.fru_forward(t, t.param("x", p.get("x")), Qhat,
                                    t.param("h0", p.get("h0")), p, false);
        Value f = model.predict_fatigue(t, Qc, F, 3, p);
        return add(mean_all(h), f);
    };
    auto eval = [&](const ParamStore& p) {
        Tape t;
        Value loss = build(t, p);
        return FdEval{t.val(loss).at(0, 0), t.kink_margin()};
    };
    Tape t;
    t.backward(build(t, ps));
    FdReport rep = finite_difference_check(eval, ps, t.param_grads());
    CHECK(rep.checked > 0);
    CHECK(rep.max_rel_error <= 1e-4);
}
