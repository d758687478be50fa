#include "frec/data.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace frec {

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Valid: return "valid";
        case Split::Test: return "test";
    }
    throw std::logic_error("split_name: bad enum");
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "valid") return Split::Valid;
    if (s == "test") return Split::Test;
    throw std::invalid_argument("unknown split label: " + s);
}

void SyntheticConfig::validate() const {
    if (n_users < 1 || n_items < 1 || n_categories < 1 || interests_per_user < 1 ||
        window < 1 || steps_per_user < 1)
        throw std::invalid_argument("SyntheticConfig: counts must be >= 1");
    if (base_engage_prob <= 0.0 || base_engage_prob > 1.0)
        throw std::invalid_argument("SyntheticConfig: base_engage_prob must be in (0,1]");
    if (fatigue_decay <= 0.0 || fatigue_decay > 1.0)
        throw std::invalid_argument("SyntheticConfig: fatigue_decay must be in (0,1]");
    if (interest_bias < 0.0 || interest_bias > 1.0)
        throw std::invalid_argument("SyntheticConfig: interest_bias must be in [0,1]");
    if (interests_per_user > n_categories)
        throw std::invalid_argument("SyntheticConfig: interests_per_user > n_categories");
}

namespace {

bool numeric_token(const std::string& s) {
    if (s.empty()) return false;
    std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
    if (i == s.size()) return false;
    for (; i < s.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    return true;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t tab = line.find('\t', pos);
        if (tab == std::string::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, tab - pos));
        pos = tab + 1;
    }
    return out;
}

Event parse_event_fields(const std::vector<std::string>& f, std::size_t lineno) {
    if (f.size() < 4)
        throw std::runtime_error("line " + std::to_string(lineno) + ": expected 4 fields, got " +
                                 std::to_string(f.size()));
    if (!numeric_token(f[3]))
        throw std::runtime_error("line " + std::to_string(lineno) + ": non-numeric timestamp '" +
                                 f[3] + "'");
    return Event{f[0], f[1], f[2], std::stoll(f[3])};
}

}  // namespace

InteractionLog load_interactions(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    InteractionLog log;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = split_tabs(line);
        if (lineno == 1 && f.size() >= 4 && !numeric_token(f[3])) continue;  // header
        log.events.push_back(parse_event_fields(f, lineno));
    }
    if (log.events.empty()) throw std::runtime_error("empty interaction log: " + path);
    return log;
}

void save_interactions(const std::string& path, const InteractionLog& log) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path);
    for (const auto& e : log.events)
        os << e.user << '\t' << e.item << '\t' << e.category << '\t' << e.timestamp << '\n';
    if (!os) throw std::runtime_error("write failed: " + path);
}

void save_split_file(const std::string& path, const std::vector<TrainingInstance>& instances) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path);
    // One event per line; each row's label is the split of the instance it is
    // the target of. Position 1 of every user is never a target and carries
    // `train`. Instances arrive grouped per user in position order, so the
    // last instance of a user holds the full truncated sequence.
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto& inst = instances[i];
        bool last_of_user =
            i + 1 == instances.size() || instances[i + 1].user != inst.user;
        if (!last_of_user) continue;
        std::size_t first = i;
        while (first > 0 && instances[first - 1].user == inst.user) --first;
        const auto& p = inst.prefix;
        for (std::size_t pos = 0; pos < p.length(); ++pos) {
            Split label = pos == 0 ? Split::Train : instances[first + pos - 1].split;
            os << inst.user << '\t' << p.items[pos] << '\t' << p.categories[pos] << '\t'
               << p.timestamps[pos] << '\t' << split_name(label) << '\n';
        }
        os << inst.user << '\t' << inst.target << '\t' << inst.target_category << '\t'
           << inst.target_timestamp << '\t' << split_name(inst.split) << '\n';
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<TrainingInstance> load_split_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::string line;
    std::size_t lineno = 0;
    std::vector<TrainingInstance> out;
    ItemSequence seq;
    std::vector<Split> labels;
    auto flush = [&]() {
        for (std::size_t pos = 1; pos < seq.length(); ++pos) {
            TrainingInstance inst;
            inst.user = seq.user;
            inst.prefix.user = seq.user;
            inst.prefix.items.assign(seq.items.begin(), seq.items.begin() + pos);
            inst.prefix.categories.assign(seq.categories.begin(), seq.categories.begin() + pos);
            inst.prefix.timestamps.assign(seq.timestamps.begin(), seq.timestamps.begin() + pos);
            inst.target = seq.items[pos];
            inst.target_category = seq.categories[pos];
            inst.target_timestamp = seq.timestamps[pos];
            inst.split = labels[pos];
            out.push_back(std::move(inst));
        }
        seq = ItemSequence{};
        labels.clear();
    };
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = split_tabs(line);
        if (f.size() < 5)
            throw std::runtime_error("line " + std::to_string(lineno) + ": expected 5 fields");
        Event e = parse_event_fields(f, lineno);
        if (!seq.user.empty() && seq.user != e.user) flush();
        seq.user = e.user;
        seq.items.push_back(e.item);
        seq.categories.push_back(e.category);
        seq.timestamps.push_back(e.timestamp);
        labels.push_back(parse_split(f[4]));
    }
    if (!seq.user.empty()) flush();
    return out;
}

void save_exposures(const std::string& path, const SyntheticResult& synth) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path);
    for (std::size_t i = 0; i < synth.exposures.events.size(); ++i) {
        const auto& e = synth.exposures.events[i];
        os << e.user << '\t' << e.item << '\t' << e.category << '\t' << e.timestamp << '\t'
           << (synth.exposure_engaged[i] ? 1 : 0) << '\n';
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

void load_exposures(const std::string& path, InteractionLog* log, std::vector<bool>* engaged) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    log->events.clear();
    engaged->clear();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = split_tabs(line);
        if (f.size() < 5)
            throw std::runtime_error("line " + std::to_string(lineno) + ": expected 5 fields");
        log->events.push_back(parse_event_fields(f, lineno));
        engaged->push_back(f[4] == "1");
    }
}

InteractionLog apply_k_core(const InteractionLog& log, int k) {
    if (k < 1) throw std::invalid_argument("apply_k_core: k must be >= 1");
    std::vector<char> keep(log.events.size(), 1);
    bool changed = true;
    while (changed) {
        changed = false;
        std::unordered_map<std::string, int> user_count, item_count;
        for (std::size_t i = 0; i < log.events.size(); ++i) {
            if (!keep[i]) continue;
            ++user_count[log.events[i].user];
            ++item_count[log.events[i].item];
        }
        for (std::size_t i = 0; i < log.events.size(); ++i) {
            if (!keep[i]) continue;
            if (user_count[log.events[i].user] < k || item_count[log.events[i].item] < k) {
                keep[i] = 0;
                changed = true;
            }
        }
    }
    InteractionLog out;
    for (std::size_t i = 0; i < log.events.size(); ++i)
        if (keep[i]) out.events.push_back(log.events[i]);
    return out;
}

std::vector<ItemSequence> build_sequences(const InteractionLog& log) {
    std::vector<std::size_t> order(log.events.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (log.events[a].user != log.events[b].user) return log.events[a].user < log.events[b].user;
        return log.events[a].timestamp < log.events[b].timestamp;
    });
    std::vector<ItemSequence> out;
    for (std::size_t idx : order) {
        const Event& e = log.events[idx];
        if (out.empty() || out.back().user != e.user) {
            out.push_back(ItemSequence{e.user, {}, {}, {}});
        }
        out.back().items.push_back(e.item);
        out.back().categories.push_back(e.category);
        out.back().timestamps.push_back(e.timestamp);
    }
    return out;
}

std::vector<TrainingInstance> chronological_split(const ItemSequence& seq, int max_len) {
    if (max_len < 1) throw std::invalid_argument("chronological_split: max_len must be >= 1");
    ItemSequence s = seq;
    if (static_cast<int>(s.length()) > max_len) {
        std::size_t drop = s.length() - static_cast<std::size_t>(max_len);
        s.items.erase(s.items.begin(), s.items.begin() + drop);
        s.categories.erase(s.categories.begin(), s.categories.begin() + drop);
        s.timestamps.erase(s.timestamps.begin(), s.timestamps.begin() + drop);
    }
    std::vector<TrainingInstance> out;
    std::size_t L = s.length();
    if (L < 3) return out;  // too short, caller logs
    std::size_t n = L - 1;  // target positions 2..L
    std::size_t n_train = static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(n)));
    std::size_t n_valid =
        std::min(static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(n))), n - n_train);
    for (std::size_t pos = 1; pos < L; ++pos) {
        TrainingInstance inst;
        inst.user = s.user;
        inst.prefix.user = s.user;
        inst.prefix.items.assign(s.items.begin(), s.items.begin() + pos);
        inst.prefix.categories.assign(s.categories.begin(), s.categories.begin() + pos);
        inst.prefix.timestamps.assign(s.timestamps.begin(), s.timestamps.begin() + pos);
        inst.target = s.items[pos];
        inst.target_category = s.categories[pos];
        inst.target_timestamp = s.timestamps[pos];
        std::size_t k = pos - 1;
        inst.split = k < n_train ? Split::Train
                                 : (k < n_train + n_valid ? Split::Valid : Split::Test);
        out.push_back(std::move(inst));
    }
    return out;
}

std::vector<std::string> sample_negatives(const std::string& target, int n,
                                          const std::vector<std::string>& vocab, Rng& rng) {
    std::size_t usable = vocab.size();
    for (const auto& v : vocab)
        if (v == target) { --usable; break; }
    if (usable < static_cast<std::size_t>(n))
        throw std::invalid_argument("sample_negatives: vocab too small (" +
                                    std::to_string(usable) + " usable, need " +
                                    std::to_string(n) + ")");
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    out.reserve(n);
    while (static_cast<int>(out.size()) < n) {
        const std::string& cand = vocab[rng.index(vocab.size())];
        if (cand == target) continue;
        if (seen.insert(cand).second) out.push_back(cand);
    }
    return out;
}

SyntheticResult generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    Rng setup(substream_seed(cfg.seed, "synth/setup"));
    // Items are spread over categories; every category gets at least one item
    // when n_items >= n_categories.
    std::vector<int> item_category(cfg.n_items);
    for (int i = 0; i < cfg.n_items; ++i)
        item_category[i] = i < cfg.n_categories ? i
                                                : static_cast<int>(setup.index(cfg.n_categories));
    std::vector<std::vector<int>> category_items(cfg.n_categories);
    for (int i = 0; i < cfg.n_items; ++i) category_items[item_category[i]].push_back(i);

    SyntheticResult res;
    for (int u = 0; u < cfg.n_users; ++u) {
        Rng rng(substream_seed(cfg.seed, "synth/user", static_cast<std::uint64_t>(u)));
        auto interests = rng.sample_without_replacement(cfg.interests_per_user, cfg.n_categories);
        std::deque<int> recent;  // categories of the last `window` engaged events
        for (int step = 0; step < cfg.steps_per_user; ++step) {
            int item;
            if (rng.uniform() < cfg.interest_bias) {
                int cat = static_cast<int>(interests[rng.index(interests.size())]);
                const auto& pool = category_items[cat];
                if (pool.empty()) continue;
                item = pool[rng.index(pool.size())];
            } else {
                item = static_cast<int>(rng.index(cfg.n_items));
            }
            int cat = item_category[item];
            int reps = 0;
            for (int c : recent)
                if (c == cat) ++reps;
            double p = cfg.base_engage_prob * std::pow(cfg.fatigue_decay, reps);
            bool engage = rng.uniform() < p;
            Event e{"u" + std::to_string(u), "i" + std::to_string(item),
                    "c" + std::to_string(cat),
                    static_cast<std::int64_t>(step) * cfg.step_seconds};
            res.exposures.events.push_back(e);
            res.exposure_engaged.push_back(engage);
            if (engage) {
                res.engaged.events.push_back(e);
                recent.push_back(cat);
                if (static_cast<int>(recent.size()) > cfg.window) recent.pop_front();
            }
        }
    }
    return res;
}

int compute_m_proxy(const TrainingInstance& instance,
                    const std::vector<std::string>& negative_categories,
                    std::int64_t horizon) {
    const auto& prefix = instance.prefix;
    if (prefix.categories.size() != prefix.items.size())
        throw std::invalid_argument("compute_m_proxy: missing category data");
    std::unordered_map<std::string, int> counts;
    for (std::size_t i = 0; i < prefix.length(); ++i) {
        if (instance.target_timestamp - prefix.timestamps[i] <= horizon &&
            prefix.timestamps[i] <= instance.target_timestamp)
            ++counts[prefix.categories[i]];
    }
    auto m_of = [&](const std::string& cat) {
        auto it = counts.find(cat);
        return it == counts.end() ? 0 : it->second;
    };
    int m_pos = m_of(instance.target_category);
    int m = 0;
    for (const auto& cat : negative_categories) m += m_of(cat) - m_pos;
    return m;
}

}  // namespace frec
