// Compares the serial reference path against the OpenMP batch kernels on a
// synthetic workload and checks the reductions agree bit-for-bit.

#include <chrono>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "frec/model.hpp"
#include "frec/train.hpp"

using namespace frec;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main() {
    SyntheticConfig sc;
    sc.n_users = 300;
    sc.n_items = 200;
    sc.n_categories = 10;
    sc.interests_per_user = 3;
    sc.steps_per_user = 60;
    sc.seed = 7;
    SyntheticResult synth = generate_synthetic(sc);

    ModelConfig mc;
    mc.embed_dim = 16;
    mc.n_interests = 4;
    mc.window = 10;
    mc.max_len = 30;
    mc.kernel_size = 3;
    mc.conv_widths = {8, 16};
    mc.mlp4_hidden = {32, 16};
    Model model(mc);

    auto sequences = build_sequences(synth.engaged);
    std::vector<TrainingInstance> instances;
    for (const auto& seq : sequences) {
        auto part = chronological_split(seq, mc.max_len);
        instances.insert(instances.end(), part.begin(), part.end());
    }
    Dataset ds = build_dataset(instances, mc, 7);
    ParamStore params = model.init_params(static_cast<int>(ds.item_ids.size()), 7);

    std::size_t n = std::min<std::size_t>(ds.train.size(), 500);
    std::printf("batch of %zu instances, %zu parameters\n", n, params.scalar_count());
#ifdef _OPENMP
    std::printf("omp max threads: %d\n", omp_get_max_threads());
#endif

    auto t0 = std::chrono::steady_clock::now();
    BatchResult serial = batch_gradients(model, params, ds.train, 0, n, 1, 7, false);
    double t_serial = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    BatchResult parallel = batch_gradients(model, params, ds.train, 0, n, 1, 7, true);
    double t_parallel = seconds_since(t0);

    bool identical = serial.grads.size() == parallel.grads.size();
    for (const auto& [name, g] : serial.grads) {
        auto it = parallel.grads.find(name);
        if (it == parallel.grads.end() || it->second.data != g.data) {
            identical = false;
            break;
        }
    }
    std::printf("gradients   serial %.3fs | parallel %.3fs | speedup %.2fx | %s\n",
                t_serial, t_parallel, t_serial / t_parallel,
                identical ? "bit-identical" : "MISMATCH");

    t0 = std::chrono::steady_clock::now();
    MetricReport es = evaluate(model, params, ds.valid, false);
    double e_serial = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    MetricReport ep = evaluate(model, params, ds.valid, true);
    double e_parallel = seconds_since(t0);
    std::printf("evaluation  serial %.3fs | parallel %.3fs | speedup %.2fx | %s\n",
                e_serial, e_parallel, e_serial / e_parallel,
                es.gauc_v == ep.gauc_v ? "bit-identical" : "MISMATCH");
    return identical && es.gauc_v == ep.gauc_v ? 0 : 1;
}
