#pragma once

#include <functional>
#include <map>
#include <string>

#include "frec/params.hpp"
#include "frec/tensor.hpp"

namespace frec {

// One evaluation of a scalar function of the parameters. kink_margin is the
// smallest |input| any kink op (abs / relu / leaky_relu) saw in the forward
// pass; the checker skips coordinates whose perturbed evaluations come within
// 10*eps of a kink.
struct FdEval {
    double value = 0.0;
    double kink_margin = 1e300;
};

struct FdReport {
    double max_rel_error = 0.0;
    std::string worst_coordinate;
    std::size_t checked = 0;
    std::size_t skipped = 0;
};

using ScalarFn = std::function<FdEval(const ParamStore&)>;

// Central-difference check of analytic gradients against f. `grads` maps
// parameter name to the analytic gradient (missing entries mean zero).
// Relative error per coordinate: |a - n| / max(1e-8, |a| + |n|).
FdReport finite_difference_check(const ScalarFn& f, ParamStore params,
                                 const std::map<std::string, Tensor>& grads,
                                 double eps = 1e-6);

}  // namespace frec
