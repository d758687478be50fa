#include "frec/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace frec::ad {

namespace {

Tensor& ensure_grad(Tape& t, int id) {
    auto& n = t.node(id);
    if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.rows, n.value.cols);
    return n.grad;
}

void check_finite_scalar(const char* op, double v) {
    if (!std::isfinite(v)) throw std::runtime_error(std::string(op) + ": non-finite result");
}

}  // namespace

Value make_node(Tape& t, Tensor out, std::vector<int> parents,
                std::function<void(Tape&, int)> back) {
    int id = static_cast<int>(t.nodes_.size());
    t.nodes_.push_back({std::move(out), Tensor(), std::move(parents), std::move(back), {}});
    return Value{&t, id};
}

Value Tape::input(Tensor v) { return make_node(*this, std::move(v), {}, nullptr); }

Value Tape::param(const std::string& name, const Tensor& v) {
    Value r = make_node(*this, v, {}, nullptr);
    nodes_[r.id].param_name = name;
    return r;
}

void Tape::backward(Value loss) {
    if (loss.tape != this) throw std::invalid_argument("backward: value from another tape");
    const auto& ln = nodes_[loss.id];
    if (ln.value.rows != 1 || ln.value.cols != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " + ln.value.shape_str());
    for (auto& n : nodes_) n.grad = Tensor();
    nodes_[loss.id].grad = Tensor::full(1, 1, 1.0);
    for (int id = loss.id; id >= 0; --id) {
        auto& n = nodes_[id];
        if (n.grad.data.empty() || !n.back) continue;
        n.back(*this, id);
    }
}

std::map<std::string, Tensor> Tape::param_grads() const {
    std::map<std::string, Tensor> out;
    for (const auto& n : nodes_) {
        if (n.param_name.empty() || n.grad.data.empty()) continue;
        auto it = out.find(n.param_name);
        if (it == out.end()) {
            out.emplace(n.param_name, n.grad);
        } else {
            check_same_shape("param_grads", it->second, n.grad);
            for (std::size_t i = 0; i < n.grad.size(); ++i) it->second.data[i] += n.grad.data[i];
        }
    }
    return out;
}

// ---- elementwise ----

namespace {

template <typename F, typename G>
Value binary_ew(const char* name, Value a, Value b, F f, G back_fn) {
    Tape& t = *a.tape;
    const Tensor& va = t.node(a.id).value;
    const Tensor& vb = t.node(b.id).value;
    check_same_shape(name, va, vb);
    Tensor out(va.rows, va.cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = f(va.data[i], vb.data[i]);
    int ia = a.id, ib = b.id;
    return make_node(t, std::move(out), {ia, ib},
                     [ia, ib, back_fn](Tape& tp, int self) {
                         const Tensor& g = tp.node(self).grad;
                         const Tensor& xa = tp.node(ia).value;
                         const Tensor& xb = tp.node(ib).value;
                         Tensor& ga = ensure_grad(tp, ia);
                         Tensor& gb = ensure_grad(tp, ib);
                         for (std::size_t i = 0; i < g.size(); ++i) {
                             auto [da, db] = back_fn(xa.data[i], xb.data[i]);
                             ga.data[i] += g.data[i] * da;
                             gb.data[i] += g.data[i] * db;
                         }
                     });
}

template <typename F, typename D>
Value unary_ew(Value a, F f, D df) {
    Tape& t = *a.tape;
    const Tensor& va = t.node(a.id).value;
    Tensor out(va.rows, va.cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = f(va.data[i]);
    int ia = a.id;
    return make_node(t, std::move(out), {ia},
                     [ia, df](Tape& tp, int self) {
                         const Tensor& g = tp.node(self).grad;
                         const Tensor& x = tp.node(ia).value;
                         const Tensor& y = tp.node(self).value;
                         Tensor& ga = ensure_grad(tp, ia);
                         for (std::size_t i = 0; i < g.size(); ++i)
                             ga.data[i] += g.data[i] * df(x.data[i], y.data[i]);
                     });
}

}  // namespace

Value add(Value a, Value b) {
    return binary_ew("add", a, b, [](double x, double y) { return x + y; },
                     [](double, double) { return std::pair<double, double>{1.0, 1.0}; });
}

Value sub(Value a, Value b) {
    return binary_ew("sub", a, b, [](double x, double y) { return x - y; },
                     [](double, double) { return std::pair<double, double>{1.0, -1.0}; });
}

Value mul(Value a, Value b) {
    return binary_ew("mul", a, b, [](double x, double y) { return x * y; },
                     [](double x, double y) { return std::pair<double, double>{y, x}; });
}

Value div(Value a, Value b) {
    const Tensor& vb = a.tape->node(b.id).value;
    for (double v : vb.data)
        if (v == 0.0) throw std::runtime_error("div: division by zero");
    return binary_ew("div", a, b, [](double x, double y) { return x / y; },
                     [](double x, double y) {
                         return std::pair<double, double>{1.0 / y, -x / (y * y)};
                     });
}

Value add_scalar(Value a, double c) {
    return unary_ew(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Value mul_scalar(Value a, double c) {
    return unary_ew(a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Value neg(Value a) { return mul_scalar(a, -1.0); }

Value tanh_op(Value a) {
    return unary_ew(a, [](double x) { return std::tanh(x); },
                    [](double, double y) { return 1.0 - y * y; });
}

Value sigmoid(Value a) {
    return unary_ew(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                    [](double, double y) { return y * (1.0 - y); });
}

Value relu(Value a) {
    for (double v : a.tape->node(a.id).value.data) a.tape->note_kink(std::abs(v));
    return unary_ew(a, [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double) { return x >= 0.0 ? 1.0 : 0.0; });
}

Value leaky_relu(Value a, double slope) {
    for (double v : a.tape->node(a.id).value.data) a.tape->note_kink(std::abs(v));
    return unary_ew(a, [slope](double x) { return x > 0.0 ? x : slope * x; },
                    [slope](double x, double) { return x >= 0.0 ? 1.0 : slope; });
}

Value abs_op(Value a) {
    // An input of exactly 0 is a structural zero (e.g. comparing an item with
    // itself); both the analytic and the central-difference derivative vanish
    // there, so it is not treated as a kink.
    for (double v : a.tape->node(a.id).value.data)
        if (v != 0.0) a.tape->note_kink(std::abs(v));
    return unary_ew(a, [](double x) { return std::abs(x); },
                    [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Value sqrt_op(Value a) {
    for (double v : a.tape->node(a.id).value.data)
        if (v < 0.0) throw std::runtime_error("sqrt: negative input");
    return unary_ew(a, [](double x) { return std::sqrt(x); },
                    [](double, double y) { return 0.5 / y; });
}

Value reciprocal(Value a) {
    for (double v : a.tape->node(a.id).value.data)
        if (v == 0.0) throw std::runtime_error("reciprocal: division by zero");
    return unary_ew(a, [](double x) { return 1.0 / x; },
                    [](double, double y) { return -y * y; });
}

// ---- structural ----

Value matmul(Value a, Value b) {
    Tape& t = *a.tape;
    const Tensor& va = t.node(a.id).value;
    const Tensor& vb = t.node(b.id).value;
    if (va.cols != vb.rows)
        throw std::invalid_argument("matmul: shape mismatch " + va.shape_str() + " * " +
                                    vb.shape_str());
    Tensor out(va.rows, vb.cols);
    for (int i = 0; i < va.rows; ++i)
        for (int k = 0; k < va.cols; ++k) {
            double x = va.at(i, k);
            if (x == 0.0) continue;
            for (int j = 0; j < vb.cols; ++j) out.at(i, j) += x * vb.at(k, j);
        }
    int ia = a.id, ib = b.id;
    return make_node(t, std::move(out), {ia, ib},
                     [ia, ib](Tape& tp, int self) {
                         const Tensor& g = tp.node(self).grad;
                         const Tensor& xa = tp.node(ia).value;
                         const Tensor& xb = tp.node(ib).value;
                         Tensor& ga = ensure_grad(tp, ia);
                         Tensor& gb = ensure_grad(tp, ib);
                         // dA += G * B^T
                         for (int i = 0; i < ga.rows; ++i)
                             for (int j = 0; j < g.cols; ++j) {
                                 double gv = g.at(i, j);
                                 if (gv == 0.0) continue;
                                 for (int k = 0; k < ga.cols; ++k)
                                     ga.at(i, k) += gv * xb.at(k, j);
                             }
                         // dB += A^T * G
                         for (int i = 0; i < xa.rows; ++i)
                             for (int k = 0; k < xa.cols; ++k) {
                                 double av = xa.at(i, k);
                                 if (av == 0.0) continue;
                                 for (int j = 0; j < g.cols; ++j)
                                     gb.at(k, j) += av * g.at(i, j);
                             }
                     });
}

Value transpose(Value a) {
    Tape& t = *a.tape;
    const Tensor& va = t.node(a.id).value;
    Tensor out(va.cols, va.rows);
    for (int i = 0; i < va.rows; ++i)
        for (int j = 0; j < va.cols; ++j) out.at(j, i) = va.at(i, j);
    int ia = a.id;
    return make_node(t, std::move(out), {ia},
                     [ia](Tape& tp, int self) {
                         const Tensor& g = tp.node(self).grad;
                         Tensor& ga = ensure_grad(tp, ia);
                         for (int i = 0; i < g.rows; ++i)
                             for (int j = 0; j < g.cols; ++j) ga.at(j, i) += g.at(i, j);
                     });
}

Value concat_cols(Value a, Value b) {
    Tape& t = *a.tape;
    const Tensor& va = t.node(a.id).value;
    const Tensor& vb = t.node(b.id).value;
    if (va.rows != vb.rows)
        throw std::invalid_argument("concat_cols: row mismatch " + va.shape_str() + " vs " +
                                    vb.shape_str());
    Tensor out(va.rows, va.cols + vb.cols);
    for (int i = 0; i < va.rows; ++i) {
        for (int j = 0; j < va.cols; ++j) out.at(i, j) = va.at(i, j);
        for (int j = 0; j < vb.cols; ++j) out.at(i, va.cols + j) = vb.at(i, j);
    }
    int ia = a.id, ib = b.id, ca = va.cols;
    return make_node(t, std::move(out), {ia, ib},
                     [ia, ib, ca](Tape& tp, int self) {
                         const Tensor& g = tp.node(self).grad;
                         Tensor& ga = ensure_grad(tp, ia);
                         Tensor& gb = ensure_grad(tp, ib);
                         for (int i = 0; i < g.rows; ++i) {
                             for (int j = 0; j < ca; ++j) ga.at(i, j) += g.at(i, j);
                             for (int j = ca; j < g.cols; ++j) gb.at(i, j - ca) += g.at(i, j);
                         }
                     });
}

Value concat_rows(Value a, Value b) {
    Tape& t = *a.tape;
    const Tensor& va = t.node(a.id).value;
    const Tensor& vb = t.node(b.id).value;
    if (va.cols != vb.cols)
        throw std::invalid_argument("concat_rows: col mismatch " + va.shape_str() + " vs " +
                                    vb.shape_str());
    Tensor out(va.rows + vb.rows, va.cols);
    std::copy(va.data.begin(), va.data.end(), out.data.begin());
    std::copy(vb.data.begin(), vb.data.end(), out.data.begin() + va.size());
    int ia = a.id, ib = b.id, ra = va.rows;
    return make_node(t, std::move(out), {ia, ib},
                     [ia, ib, ra](Tape& tp, int self) {
                         const Tensor& g = tp.node(self).grad;
                         Tensor& ga = ensure_grad(tp, ia);
                         Tensor& gb = ensure_grad(tp, ib);
                         std::size_t na = ga.size();
                         for (std::size_t i = 0; i < na; ++i) ga.data[i] += g.data[i];
                         for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] += g.data[na + i];
                         (void)ra;
                     });
}

Value slice_rows(Value a, int r0, int r1) {
    Tape& t = *a.tape;
    const Tensor& va = t.node(a.id).value;
    if (r0 < 0 || r1 > va.rows || r0 >= r1)
        throw std::invalid_argument("slice_rows: bad range on " + va.shape_str());
    Tensor out(r1 - r0, va.cols);
    for (int i = r0; i < r1; ++i)
        for (int j = 0; j < va.cols; ++j) out.at(i - r0, j) = va.at(i, j);
    int ia = a.id;
    return make_node(t, std::move(out), {ia},
                     [ia, r0](Tape& tp, int self) {
                         const Tensor& g = tp.node(self).grad;
                         Tensor& ga = ensure_grad(tp, ia);
                         for (int i = 0; i < g.rows; ++i)
                             for (int j = 0; j < g.cols; ++j) ga.at(r0 + i, j) += g.at(i, j);
                     });
}

Value slice_cols(Value a, int c0, int c1) {
    Tape& t = *a.tape;
    const Tensor& va = t.node(a.id).value;
    if (c0 < 0 || c1 > va.cols || c0 >= c1)
        throw std::invalid_argument("slice_cols: bad range on " + va.shape_str());
    Tensor out(va.rows, c1 - c0);
    for (int i = 0; i < va.rows; ++i)
        for (int j = c0; j < c1; ++j) out.at(i, j - c0) = va.at(i, j);
    int ia = a.id;
    return make_node(t, std::move(out), {ia},
                     [ia, c0](Tape& tp, int self) {
                         const Tensor& g = tp.node(self).grad;
                         Tensor& ga = ensure_grad(tp, ia);
                         for (int i = 0; i < g.rows; ++i)
                             for (int j = 0; j < g.cols; ++j) ga.at(i, c0 + j) += g.at(i, j);
                     });
}

// ---- reductions / softmax ----

Value softmax(Value a, Axis axis) {
    Tape& t = *a.tape;
    const Tensor& va = t.node(a.id).value;
    Tensor out(va.rows, va.cols);
    int nslices = axis == Axis::Rows ? va.cols : va.rows;
    int len = axis == Axis::Rows ? va.rows : va.cols;
    auto idx = [&](int slice, int k) {
        return axis == Axis::Rows ? std::pair<int, int>{k, slice} : std::pair<int, int>{slice, k};
    };
    for (int s = 0; s < nslices; ++s) {
        double mx = -1e300;
        for (int k = 0; k < len; ++k) {
            auto [i, j] = idx(s, k);
            mx = std::max(mx, va.at(i, j));
        }
        double sum = 0.0;
        for (int k = 0; k < len; ++k) {
            auto [i, j] = idx(s, k);
            double e = std::exp(va.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (int k = 0; k < len; ++k) {
            auto [i, j] = idx(s, k);
            out.at(i, j) /= sum;
        }
    }
    int ia = a.id;
    return make_node(t, std::move(out), {ia},
                     [ia, axis](Tape& tp, int self) {
                         const Tensor& g = tp.node(self).grad;
                         const Tensor& y = tp.node(self).value;
                         Tensor& ga = ensure_grad(tp, ia);
                         int nslices = axis == Axis::Rows ? y.cols : y.rows;
                         int len = axis == Axis::Rows ? y.rows : y.cols;
                         auto idx = [&](int slice, int k) {
                             return axis == Axis::Rows ? std::pair<int, int>{k, slice}
                                                       : std::pair<int, int>{slice, k};
                         };
                         for (int s = 0; s < nslices; ++s) {
                             double dot = 0.0;
                             for (int k = 0; k < len; ++k) {
                                 auto [i, j] = idx(s, k);
                                 dot += g.at(i, j) * y.at(i, j);
                             }
                             for (int k = 0; k < len; ++k) {
                                 auto [i, j] = idx(s, k);
                                 ga.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
                             }
                         }
                     });
}

Value sum_all(Value a) {
    Tape& t = *a.tape;
    const Tensor& va = t.node(a.id).value;
    double s = 0.0;
    for (double v : va.data) s += v;
    int ia = a.id;
    return make_node(t, Tensor::full(1, 1, s), {ia},
                     [ia](Tape& tp, int self) {
                         double g = tp.node(self).grad.data[0];
                         Tensor& ga = ensure_grad(tp, ia);
                         for (double& v : ga.data) v += g;
                     });
}

Value mean_all(Value a) {
    const Tensor& va = a.tape->node(a.id).value;
    if (va.size() == 0) throw std::invalid_argument("mean_all: empty tensor");
    return mul_scalar(sum_all(a), 1.0 / static_cast<double>(va.size()));
}

Value mean_axis(Value a, Axis axis) {
    Tape& t = *a.tape;
    const Tensor& va = t.node(a.id).value;
    int len = axis == Axis::Rows ? va.rows : va.cols;
    if (len == 0) throw std::invalid_argument("mean_axis: empty axis");
    Tensor out = axis == Axis::Rows ? Tensor(1, va.cols) : Tensor(va.rows, 1);
    for (int i = 0; i < va.rows; ++i)
        for (int j = 0; j < va.cols; ++j) {
            if (axis == Axis::Rows) out.at(0, j) += va.at(i, j) / len;
            else out.at(i, 0) += va.at(i, j) / len;
        }
    int ia = a.id;
    return make_node(t, std::move(out), {ia},
                     [ia, axis, len](Tape& tp, int self) {
                         const Tensor& g = tp.node(self).grad;
                         Tensor& ga = ensure_grad(tp, ia);
                         for (int i = 0; i < ga.rows; ++i)
                             for (int j = 0; j < ga.cols; ++j) {
                                 double gv = axis == Axis::Rows ? g.at(0, j) : g.at(i, 0);
                                 ga.at(i, j) += gv / len;
                             }
                     });
}

Value logsumexp(Value a) {
    Tape& t = *a.tape;
    const Tensor& va = t.node(a.id).value;
    double mx = -1e300;
    for (double v : va.data) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : va.data) sum += std::exp(v - mx);
    double lse = mx + std::log(sum);
    check_finite_scalar("logsumexp", lse);
    int ia = a.id;
    return make_node(t, Tensor::full(1, 1, lse), {ia},
                     [ia](Tape& tp, int self) {
                         double g = tp.node(self).grad.data[0];
                         double lse = tp.node(self).value.data[0];
                         const Tensor& x = tp.node(ia).value;
                         Tensor& ga = ensure_grad(tp, ia);
                         for (std::size_t i = 0; i < x.size(); ++i)
                             ga.data[i] += g * std::exp(x.data[i] - lse);
                     });
}

// ---- gather / conv / batchnorm ----

Value lookup(Value table, const std::vector<int>& ids) {
    Tape& t = *table.tape;
    const Tensor& vt = t.node(table.id).value;
    for (int id : ids)
        if (id < 0 || id >= vt.cols)
            throw std::out_of_range("lookup: unknown item id " + std::to_string(id));
    Tensor out(vt.rows, static_cast<int>(ids.size()));
    for (int j = 0; j < out.cols; ++j)
        for (int i = 0; i < out.rows; ++i) out.at(i, j) = vt.at(i, ids[j]);
    int it = table.id;
    return make_node(t, std::move(out), {it},
                     [it, ids](Tape& tp, int self) {
                         const Tensor& g = tp.node(self).grad;
                         Tensor& gt = ensure_grad(tp, it);
                         for (int j = 0; j < g.cols; ++j)
                             for (int i = 0; i < g.rows; ++i) gt.at(i, ids[j]) += g.at(i, j);
                     });
}

Value causal_conv(Value x, Value kernels, int s) {
    Tape& t = *x.tape;
    const Tensor& vx = t.node(x.id).value;
    const Tensor& vw = t.node(kernels.id).value;
    int din = vx.cols;
    if (s < 1 || vw.cols != din * s)
        throw std::invalid_argument("causal_conv: kernel shape " + vw.shape_str() +
                                    " incompatible with input " + vx.shape_str() +
                                    " and kernel size " + std::to_string(s));
    int T = vx.rows, dout = vw.rows;
    Tensor out(T, dout);
    for (int l = 0; l < T; ++l)
        for (int n = 0; n < dout; ++n) {
            double acc = 0.0;
            for (int j = 0; j < s; ++j) {
                int src = l - s + 1 + j;
                if (src < 0) continue;  // left zero padding
                for (int c = 0; c < din; ++c) acc += vx.at(src, c) * vw.at(n, c * s + j);
            }
            out.at(l, n) = acc;
        }
    int ix = x.id, iw = kernels.id;
    return make_node(t, std::move(out), {ix, iw},
                     [ix, iw, s, din](Tape& tp, int self) {
                         const Tensor& g = tp.node(self).grad;
                         const Tensor& vx = tp.node(ix).value;
                         const Tensor& vw = tp.node(iw).value;
                         Tensor& gx = ensure_grad(tp, ix);
                         Tensor& gw = ensure_grad(tp, iw);
                         int T = vx.rows, dout = vw.rows;
                         for (int l = 0; l < T; ++l)
                             for (int n = 0; n < dout; ++n) {
                                 double gv = g.at(l, n);
                                 if (gv == 0.0) continue;
                                 for (int j = 0; j < s; ++j) {
                                     int src = l - s + 1 + j;
                                     if (src < 0) continue;
                                     for (int c = 0; c < din; ++c) {
                                         gx.at(src, c) += gv * vw.at(n, c * s + j);
                                         gw.at(n, c * s + j) += gv * vx.at(src, c);
                                     }
                                 }
                             }
                     });
}

Value batchnorm_train(Value x, Value gamma, Value beta, double eps,
                      Tensor* batch_mean, Tensor* batch_var) {
    Tape& t = *x.tape;
    const Tensor& vx = t.node(x.id).value;
    const Tensor& vg = t.node(gamma.id).value;
    const Tensor& vb = t.node(beta.id).value;
    int N = vx.rows, F = vx.cols;
    if (vg.rows != 1 || vg.cols != F || vb.rows != 1 || vb.cols != F)
        throw std::invalid_argument("batchnorm: gamma/beta must be 1x" + std::to_string(F));
    if (N < 1) throw std::invalid_argument("batchnorm: empty batch");
    Tensor mean(1, F), var(1, F);
    for (int j = 0; j < F; ++j) {
        double m = 0.0;
        for (int i = 0; i < N; ++i) m += vx.at(i, j);
        m /= N;
        double v = 0.0;
        for (int i = 0; i < N; ++i) {
            double d = vx.at(i, j) - m;
            v += d * d;
        }
        mean.at(0, j) = m;
        var.at(0, j) = v / N;
    }
    if (batch_mean) *batch_mean = mean;
    if (batch_var) *batch_var = var;
    Tensor out(N, F);
    for (int j = 0; j < F; ++j) {
        double inv = 1.0 / std::sqrt(var.at(0, j) + eps);
        for (int i = 0; i < N; ++i)
            out.at(i, j) = vg.at(0, j) * (vx.at(i, j) - mean.at(0, j)) * inv + vb.at(0, j);
    }
    int ix = x.id, ig = gamma.id, ib = beta.id;
    return make_node(t, std::move(out), {ix, ig, ib},
                     [ix, ig, ib, mean, var, eps](Tape& tp, int self) {
                         const Tensor& g = tp.node(self).grad;
                         const Tensor& vx = tp.node(ix).value;
                         const Tensor& vg = tp.node(ig).value;
                         Tensor& gx = ensure_grad(tp, ix);
                         Tensor& gg = ensure_grad(tp, ig);
                         Tensor& gb = ensure_grad(tp, ib);
                         int N = vx.rows, F = vx.cols;
                         for (int j = 0; j < F; ++j) {
                             double inv = 1.0 / std::sqrt(var.at(0, j) + eps);
                             double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                             for (int i = 0; i < N; ++i) {
                                 double xh = (vx.at(i, j) - mean.at(0, j)) * inv;
                                 double dxh = g.at(i, j) * vg.at(0, j);
                                 sum_dxh += dxh;
                                 sum_dxh_xh += dxh * xh;
                                 gg.at(0, j) += g.at(i, j) * xh;
                                 gb.at(0, j) += g.at(i, j);
                             }
                             for (int i = 0; i < N; ++i) {
                                 double xh = (vx.at(i, j) - mean.at(0, j)) * inv;
                                 double dxh = g.at(i, j) * vg.at(0, j);
                                 gx.at(i, j) += inv / N * (N * dxh - sum_dxh - xh * sum_dxh_xh);
                             }
                         }
                     });
}

Value batchnorm_eval(Value x, Value gamma, Value beta,
                     const Tensor& running_mean, const Tensor& running_var, double eps) {
    Tape& t = *x.tape;
    int N = t.node(x.id).value.rows;
    int F = t.node(x.id).value.cols;
    if (running_mean.cols != F || running_var.cols != F)
        throw std::invalid_argument("batchnorm_eval: running stats width mismatch");
    // y = gamma * (x - mean) / sqrt(var + eps) + beta, stats held constant.
    Tensor scale(1, F), shift(1, F);
    for (int j = 0; j < F; ++j)
        scale.at(0, j) = 1.0 / std::sqrt(running_var.at(0, j) + eps);
    Value mean_c = t.input(running_mean);
    Value scale_c = t.input(scale);
    Value ones = t.input(Tensor::full(N, 1, 1.0));
    Value centered = sub(x, matmul(ones, mean_c));
    Value normed = mul(centered, matmul(ones, scale_c));
    return add(mul(normed, matmul(ones, gamma)), matmul(ones, beta));
}

Value column_patch(Value a, const std::vector<int>& cols, const Tensor& fallback) {
    Tape& t = *a.tape;
    const Tensor& va = t.node(a.id).value;
    check_same_shape("column_patch", va, fallback);
    Tensor out = va;
    std::vector<char> patched(va.cols, 0);
    for (int c : cols) {
        if (c < 0 || c >= va.cols) throw std::out_of_range("column_patch: bad column");
        patched[c] = 1;
        for (int i = 0; i < va.rows; ++i) out.at(i, c) = fallback.at(i, c);
    }
    int ia = a.id;
    return make_node(t, std::move(out), {ia},
                     [ia, patched](Tape& tp, int self) {
                         const Tensor& g = tp.node(self).grad;
                         Tensor& ga = ensure_grad(tp, ia);
                         for (int i = 0; i < g.rows; ++i)
                             for (int j = 0; j < g.cols; ++j)
                                 if (!patched[j]) ga.at(i, j) += g.at(i, j);
                     });
}

}  // namespace frec::ad
