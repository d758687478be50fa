#include "frec/fdcheck.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace frec {

FdReport finite_difference_check(const ScalarFn& f, ParamStore params,
                                 const std::map<std::string, Tensor>& grads,
                                 double eps) {
    FdReport report;
    for (auto& [name, tensor] : params.tensors) {
        if (params.non_trainable.count(name)) continue;
        const Tensor* g = nullptr;
        if (auto it = grads.find(name); it != grads.end()) g = &it->second;
        for (std::size_t i = 0; i < tensor.size(); ++i) {
            double orig = tensor.data[i];
            tensor.data[i] = orig + eps;
            FdEval up = f(params);
            tensor.data[i] = orig - eps;
            FdEval dn = f(params);
            tensor.data[i] = orig;
            if (!std::isfinite(up.value) || !std::isfinite(dn.value))
                throw std::runtime_error("finite_difference_check: non-finite evaluation at " +
                                         name);
            if (up.kink_margin < 10.0 * eps || dn.kink_margin < 10.0 * eps) {
                ++report.skipped;
                continue;
            }
            double numeric = (up.value - dn.value) / (2.0 * eps);
            double analytic = g ? g->data[i] : 0.0;
            // Central differences cannot resolve gradients below the rounding
            // noise of the two function evaluations; a discrepancy within that
            // noise is agreement, not error.
            double noise = 50.0 * (std::abs(up.value) + std::abs(dn.value)) *
                           std::numeric_limits<double>::epsilon() / (2.0 * eps);
            double diff = std::abs(analytic - numeric);
            double rel = diff <= noise
                             ? 0.0
                             : diff / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
            ++report.checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_coordinate = name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return report;
}

}  // namespace frec
