#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "frec/data.hpp"
#include "frec/model.hpp"
#include "frec/train.hpp"

namespace frec {

// Plain-text key=value run configuration. Unknown keys are rejected; defaults
// match the published hyper-parameter settings.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    SyntheticConfig synth;
    int k_core = 10;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_map(const std::map<std::string, std::string>& kv);
    std::map<std::string, std::string> to_map() const;
    std::string to_text() const;
    void apply(const std::string& key, const std::string& value);
};

}  // namespace frec
