#include "frec/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace frec {

namespace {

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(std::stoi(tok));
    return out;
}

std::string join_int_list(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

bool parse_bool(const std::string& s) {
    if (s == "1" || s == "true" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "no") return false;
    throw std::invalid_argument("bad boolean value: " + s);
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
    // model
    if (key == "embed_dim") model.embed_dim = std::stoi(value);
    else if (key == "n_interests") model.n_interests = std::stoi(value);
    else if (key == "n_cross") model.n_cross = std::stoi(value);
    else if (key == "kernel_size") model.kernel_size = std::stoi(value);
    else if (key == "window") model.window = std::stoi(value);
    else if (key == "max_len") model.max_len = std::stoi(value);
    else if (key == "conv_widths") model.conv_widths = parse_int_list(value);
    else if (key == "mlp4_hidden") model.mlp4_hidden = parse_int_list(value);
    else if (key == "alpha") model.alpha = std::stod(value);
    else if (key == "train_negatives") model.train_negatives = std::stoi(value);
    else if (key == "eval_negatives") model.eval_negatives = std::stoi(value);
    else if (key == "n_augmentations") model.n_augmentations = std::stoi(value);
    else if (key == "no_fusion") model.no_fusion = parse_bool(value);
    else if (key == "no_fru") model.no_fru = parse_bool(value);
    else if (key == "no_cross") model.no_cross = parse_bool(value);
    else if (key == "no_cl") model.no_cl = parse_bool(value);
    // training
    else if (key == "lr") train.lr = std::stod(value);
    else if (key == "l2") train.l2 = std::stod(value);
    else if (key == "batch_size") train.batch_size = std::stoi(value);
    else if (key == "max_epochs") train.max_epochs = std::stoi(value);
    else if (key == "clip") train.clip = parse_bool(value);
    else if (key == "clip_norm") train.clip_norm = std::stod(value);
    else if (key == "parallel") train.parallel = parse_bool(value);
    else if (key == "seed") { train.seed = std::stoull(value); synth.seed = train.seed; }
    else if (key == "max_train_instances") train.max_train_instances = std::stoull(value);
    // data
    else if (key == "k_core") k_core = std::stoi(value);
    // synthetic
    else if (key == "n_users") synth.n_users = std::stoi(value);
    else if (key == "n_items") synth.n_items = std::stoi(value);
    else if (key == "n_categories") synth.n_categories = std::stoi(value);
    else if (key == "interests_per_user") synth.interests_per_user = std::stoi(value);
    else if (key == "base_engage_prob") synth.base_engage_prob = std::stod(value);
    else if (key == "fatigue_decay") synth.fatigue_decay = std::stod(value);
    else if (key == "synth_window") synth.window = std::stoi(value);
    else if (key == "steps_per_user") synth.steps_per_user = std::stoi(value);
    else if (key == "interest_bias") synth.interest_bias = std::stod(value);
    else if (key == "step_seconds") synth.step_seconds = std::stoll(value);
    else throw std::invalid_argument("unknown config key: " + key);
}

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& kv) {
    RunConfig cfg;
    for (const auto& [k, v] : kv) cfg.apply(k, v);
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config " + path);
    RunConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) continue;
        line = line.substr(start);
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key=value");
        try {
            cfg.apply(line.substr(0, eq), line.substr(eq + 1));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

std::map<std::string, std::string> RunConfig::to_map() const {
    std::map<std::string, std::string> kv;
    std::ostringstream tmp;
    auto fmt = [&](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    kv["embed_dim"] = std::to_string(model.embed_dim);
    kv["n_interests"] = std::to_string(model.n_interests);
    kv["n_cross"] = std::to_string(model.n_cross);
    kv["kernel_size"] = std::to_string(model.kernel_size);
    kv["window"] = std::to_string(model.window);
    kv["max_len"] = std::to_string(model.max_len);
    kv["conv_widths"] = join_int_list(model.conv_widths);
    kv["mlp4_hidden"] = join_int_list(model.mlp4_hidden);
    kv["alpha"] = fmt(model.alpha);
    kv["train_negatives"] = std::to_string(model.train_negatives);
    kv["eval_negatives"] = std::to_string(model.eval_negatives);
    kv["n_augmentations"] = std::to_string(model.n_augmentations);
    kv["no_fusion"] = model.no_fusion ? "1" : "0";
    kv["no_fru"] = model.no_fru ? "1" : "0";
    kv["no_cross"] = model.no_cross ? "1" : "0";
    kv["no_cl"] = model.no_cl ? "1" : "0";
    kv["lr"] = fmt(train.lr);
    kv["l2"] = fmt(train.l2);
    kv["batch_size"] = std::to_string(train.batch_size);
    kv["max_epochs"] = std::to_string(train.max_epochs);
    kv["clip"] = train.clip ? "1" : "0";
    kv["clip_norm"] = fmt(train.clip_norm);
    kv["parallel"] = train.parallel ? "1" : "0";
    kv["seed"] = std::to_string(train.seed);
    kv["max_train_instances"] = std::to_string(train.max_train_instances);
    kv["k_core"] = std::to_string(k_core);
    kv["n_users"] = std::to_string(synth.n_users);
    kv["n_items"] = std::to_string(synth.n_items);
    kv["n_categories"] = std::to_string(synth.n_categories);
    kv["interests_per_user"] = std::to_string(synth.interests_per_user);
    kv["base_engage_prob"] = fmt(synth.base_engage_prob);
    kv["fatigue_decay"] = fmt(synth.fatigue_decay);
    kv["synth_window"] = std::to_string(synth.window);
    kv["steps_per_user"] = std::to_string(synth.steps_per_user);
    kv["interest_bias"] = fmt(synth.interest_bias);
    kv["step_seconds"] = std::to_string(synth.step_seconds);
    return kv;
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const auto& [k, v] : to_map()) out += k + "=" + v + "\n";
    return out;
}

}  // namespace frec
