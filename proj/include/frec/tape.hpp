#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "frec/tensor.hpp"

namespace frec::ad {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Value {
    Tape* tape = nullptr;
    int id = -1;
};

// Eager reverse-mode tape. Each op computes its output immediately and
// records a closure that scatters the output gradient to its parents.
// Single-threaded per tape; independent instances each build their own.
class Tape {
public:
    Value input(Tensor v);
    Value param(const std::string& name, const Tensor& v);

    const Tensor& val(Value v) const { return nodes_[v.id].value; }
    const Tensor& grad(Value v) const { return nodes_[v.id].grad; }

    // Seeds d(loss)/d(loss) = 1 and walks the tape in reverse creation order.
    // loss must be 1x1.
    void backward(Value loss);

    // Gradients of named parameters after backward. Parameters never touched
    // by the graph are absent (treated as zero by callers).
    std::map<std::string, Tensor> param_grads() const;

    // Smallest |input| seen by any kink op (abs, relu, leaky_relu) during the
    // forward pass. Used by the finite-difference checker to skip coordinates
    // evaluated near a non-differentiable point.
    double kink_margin() const { return kink_margin_; }

    std::size_t node_count() const { return nodes_.size(); }

private:
    friend Value make_node(Tape& t, Tensor out, std::vector<int> parents,
                           std::function<void(Tape&, int)> back);
    friend struct NodeAccess;

    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<int> parents;
        std::function<void(Tape&, int)> back;  // (tape, own id)
        std::string param_name;                 // nonempty for parameter leaves
    };

    std::vector<Node> nodes_;
    double kink_margin_ = 1e300;

public:
    // Internal accessors for op implementations.
    Node& node(int id) { return nodes_[id]; }
    void note_kink(double margin) { if (margin < kink_margin_) kink_margin_ = margin; }
};

Value make_node(Tape& t, Tensor out, std::vector<int> parents,
                std::function<void(Tape&, int)> back);

// ---- op set ----

Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);        // elementwise
Value div(Value a, Value b);        // elementwise; errors on zero divisor
Value add_scalar(Value a, double c);
Value mul_scalar(Value a, double c);
Value neg(Value a);

Value matmul(Value a, Value b);
Value transpose(Value a);
Value concat_cols(Value a, Value b);
Value concat_rows(Value a, Value b);
Value slice_rows(Value a, int r0, int r1);  // rows [r0, r1)
Value slice_cols(Value a, int c0, int c1);

Value tanh_op(Value a);
Value sigmoid(Value a);
Value relu(Value a);                 // derivative at 0 taken as 1
Value leaky_relu(Value a, double slope = 0.01);  // derivative at 0 taken as 1
Value abs_op(Value a);               // derivative at 0 taken as 0
Value sqrt_op(Value a);
Value reciprocal(Value a);

enum class Axis { Rows = 0, Cols = 1 };
// softmax along the given axis: Rows normalizes each column over row index.
Value softmax(Value a, Axis axis);
Value sum_all(Value a);              // 1x1
Value mean_all(Value a);             // 1x1
Value mean_axis(Value a, Axis axis); // Rows -> 1xC, Cols -> Rx1
// log(sum(exp(x))) over all entries, max-shifted. 1x1.
Value logsumexp(Value a);

// Columns of `table` (d x V) gathered by id: output d x |ids|.
Value lookup(Value table, const std::vector<int>& ids);

// Causal 1-D convolution. x: T x d_in, kernels: d_out rows of d_in*s
// (kernel n, channel c, offset j at column c*s + j). Output T x d_out where
// row l sees x rows l-s+1 .. l, zero-padded on the left.
Value causal_conv(Value x, Value kernels, int s);

// Batch norm over rows (per-feature). Train mode uses batch statistics and
// reports them through batch_mean/batch_var (biased variance, 1 x F).
Value batchnorm_train(Value x, Value gamma, Value beta, double eps,
                      Tensor* batch_mean, Tensor* batch_var);
Value batchnorm_eval(Value x, Value gamma, Value beta,
                     const Tensor& running_mean, const Tensor& running_var, double eps);

// Copy of `a` with the listed columns replaced by the matching columns of
// `fallback` (plain tensor, no gradient). Gradient flows only through the
// untouched columns.
Value column_patch(Value a, const std::vector<int>& cols, const Tensor& fallback);

}  // namespace frec::ad
