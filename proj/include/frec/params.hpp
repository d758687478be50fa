#pragma once

#include <map>
#include <set>
#include <string>

#include "frec/rng.hpp"
#include "frec/tensor.hpp"

namespace frec {

// Named parameter tensors plus bookkeeping for the optimizer. std::map keeps
// iteration order deterministic, which checkpointing and Adam rely on.
struct ParamStore {
    std::map<std::string, Tensor> tensors;
    std::set<std::string> no_decay;       // biases, embeddings, bn affine
    std::set<std::string> non_trainable;  // bn running statistics

    Tensor& add(const std::string& name, Tensor t, bool decay = true, bool trainable = true);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const { return tensors.count(name) != 0; }
    std::size_t scalar_count() const;
};

Tensor uniform_init(int rows, int cols, double lo, double hi, Rng& rng);
Tensor glorot_init(int rows, int cols, Rng& rng);

// Flat binary checkpoint: magic, manifest (key=value text), then tensors in
// name order as (name, rows, cols, little-endian f64 payload).
void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::map<std::string, std::string>& manifest);
ParamStore load_checkpoint(const std::string& path,
                           std::map<std::string, std::string>* manifest = nullptr);

}  // namespace frec
