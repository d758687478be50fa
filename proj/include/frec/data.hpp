#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frec/rng.hpp"

namespace frec {

struct Event {
    std::string user;
    std::string item;
    std::string category;
    std::int64_t timestamp = 0;
};

struct InteractionLog {
    std::vector<Event> events;
};

enum class Split { Train, Valid, Test };

const char* split_name(Split s);
Split parse_split(const std::string& s);

struct ItemSequence {
    std::string user;
    std::vector<std::string> items;
    std::vector<std::string> categories;
    std::vector<std::int64_t> timestamps;

    std::size_t length() const { return items.size(); }
};

// One (prefix, target) pair. Negatives are attached later from the seeded
// "negatives" sub-stream so split files stay in the plain event format.
struct TrainingInstance {
    std::string user;
    ItemSequence prefix;
    std::string target;
    std::string target_category;
    std::int64_t target_timestamp = 0;
    std::vector<std::string> negatives;
    Split split = Split::Train;
};

struct SyntheticConfig {
    int n_users = 100;
    int n_items = 50;
    int n_categories = 10;
    int interests_per_user = 3;
    double base_engage_prob = 0.5;
    double fatigue_decay = 0.8;
    int window = 20;
    std::uint64_t seed = 1;
    // Artifact knobs beyond the core phenomenon: candidate draws per user,
    // probability a candidate comes from an interest category, and the
    // simulated seconds between consecutive steps.
    int steps_per_user = 100;
    double interest_bias = 0.8;
    std::int64_t step_seconds = 60;

    void validate() const;
};

struct SyntheticResult {
    InteractionLog engaged;                // same TSV schema as real logs
    InteractionLog exposures;              // every candidate draw
    std::vector<bool> exposure_engaged;    // parallel to exposures.events
};

// Tab-separated `user item category timestamp`; optional header detected by a
// non-numeric timestamp field on line 1. Errors carry the line number.
InteractionLog load_interactions(const std::string& path);
void save_interactions(const std::string& path, const InteractionLog& log);

// Split-annotated variant with a fifth column in {train,valid,test}.
void save_split_file(const std::string& path, const std::vector<TrainingInstance>& instances);
std::vector<TrainingInstance> load_split_file(const std::string& path);
// Exposure log with a fifth column engaged in {0,1}.
void save_exposures(const std::string& path, const SyntheticResult& synth);
void load_exposures(const std::string& path, InteractionLog* log, std::vector<bool>* engaged);

// Iterated removal of users/items with fewer than k events, to a fixed point.
InteractionLog apply_k_core(const InteractionLog& log, int k);

// Per-user chronological sequences, ties broken by input order.
std::vector<ItemSequence> build_sequences(const InteractionLog& log);

// Keeps the most recent max_len items of the sequence, then emits one
// instance per target position 2..L with an 8:1:1 chronological split
// (train bucket rounded up first). Sequences shorter than 3 yield nothing.
std::vector<TrainingInstance> chronological_split(const ItemSequence& seq, int max_len);

// n ids uniform without replacement from vocab \ {target}.
std::vector<std::string> sample_negatives(const std::string& target, int n,
                                          const std::vector<std::string>& vocab, Rng& rng);

SyntheticResult generate_synthetic(const SyntheticConfig& cfg);

// Fatigue-importance proxy m = sum over negatives of (m_neg - m_pos), where
// m_x counts prefix items within `horizon` seconds before the target that
// share x's category.
int compute_m_proxy(const TrainingInstance& instance,
                    const std::vector<std::string>& negative_categories,
                    std::int64_t horizon = 10800);

}  // namespace frec
