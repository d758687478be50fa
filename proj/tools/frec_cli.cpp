#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "frec/config.hpp"
#include "frec/data.hpp"
#include "frec/fdcheck.hpp"
#include "frec/metrics.hpp"
#include "frec/model.hpp"
#include "frec/train.hpp"

namespace {

using namespace frec;

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& sets,
                     const std::vector<std::string>& ablations) {
    for (const auto& kv : sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("--set expects key=value, got: " + kv);
        cfg.apply(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& a : ablations) {
        if (a == "no_fusion") cfg.model.no_fusion = true;
        else if (a == "no_fru") cfg.model.no_fru = true;
        else if (a == "no_cross") cfg.model.no_cross = true;
        else if (a == "no_cl") cfg.model.no_cl = true;
        else throw std::runtime_error("unknown ablation: " + a);
    }
}

int cmd_prepare(const std::string& input, const std::string& output_dir, int k_core,
                int max_len) {
    InteractionLog log = load_interactions(input);
    InteractionLog filtered = apply_k_core(log, k_core);
    auto sequences = build_sequences(filtered);
    std::vector<TrainingInstance> instances;
    std::size_t skipped = 0;
    std::size_t counts[3] = {0, 0, 0};
    for (const auto& seq : sequences) {
        auto part = chronological_split(seq, max_len);
        if (part.empty()) {
            ++skipped;
            continue;
        }
        for (auto& inst : part) ++counts[static_cast<int>(inst.split)];
        instances.insert(instances.end(), std::make_move_iterator(part.begin()),
                         std::make_move_iterator(part.end()));
    }
    std::string split_path = output_dir + "/split.tsv";
    save_split_file(split_path, instances);

    std::set<std::string> users, items;
    for (const auto& e : filtered.events) {
        users.insert(e.user);
        items.insert(e.item);
    }
    std::ostringstream stats;
    stats << "events_in=" << log.events.size() << "\n"
          << "events_kept=" << filtered.events.size() << "\n"
          << "users=" << users.size() << "\n"
          << "items=" << items.size() << "\n"
          << "instances_train=" << counts[0] << "\n"
          << "instances_valid=" << counts[1] << "\n"
          << "instances_test=" << counts[2] << "\n"
          << "sequences_skipped_too_short=" << skipped << "\n";
    write_report(output_dir + "/stats.txt", stats.str());
    std::cout << stats.str();
    if (instances.empty())
        std::cerr << "warning: no instances survived filtering (k_core=" << k_core << ")\n";
    return 0;
}

int cmd_synth(const RunConfig& cfg, const std::string& output,
              const std::string& exposures_path) {
    SyntheticResult synth = generate_synthetic(cfg.synth);
    save_interactions(output, synth.engaged);
    if (!exposures_path.empty()) save_exposures(exposures_path, synth);
    std::cout << "engaged_events=" << synth.engaged.events.size() << "\n"
              << "exposures=" << synth.exposures.events.size() << "\n";
    return 0;
}

// Finite-difference suite over a small end-to-end instance.
int run_grad_check(const RunConfig& cfg_in) {
    RunConfig cfg = cfg_in;
    cfg.model.embed_dim = 4;
    cfg.model.n_interests = 2;
    cfg.model.window = 4;
    cfg.model.max_len = 16;
    cfg.model.kernel_size = 2;
    cfg.model.conv_widths = {3, 4};
    cfg.model.mlp4_hidden = {6, 5};
    Model model(cfg.model);
    ParamStore params = model.init_params(6, cfg.train.seed);
    DenseInstance inst;
    inst.prefix = {0, 1, 2};
    inst.prefix_ts = {0, 1, 2};
    inst.target = 3;
    inst.negatives = {4, 5, 1, 2};
    inst.user = "u0";

    auto eval_loss = [&](const ParamStore& p) {
        ad::Tape tape;
        Rng aug(substream_seed(cfg.train.seed, "augment", 0, 0));
        ForwardResult fr = model.forward(tape, p, inst, Mode::Train, &aug);
        return FdEval{tape.val(fr.loss).at(0, 0), tape.kink_margin()};
    };
    ad::Tape tape;
    Rng aug(substream_seed(cfg.train.seed, "augment", 0, 0));
    ForwardResult fr = model.forward(tape, params, inst, Mode::Train, &aug);
    tape.backward(fr.loss);
    FdReport rep = finite_difference_check(eval_loss, params, tape.param_grads());
    std::cout << "grad_check max_rel_error=" << rep.max_rel_error
              << " checked=" << rep.checked << " skipped=" << rep.skipped
              << " worst=" << rep.worst_coordinate << "\n";
    if (rep.max_rel_error > 1e-4) {
        std::cerr << "grad check FAILED\n";
        return 1;
    }
    std::cout << "grad check passed\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& data_path,
              const std::string& checkpoint_path, const std::string& history_path,
              bool grad_check) {
    if (grad_check) return run_grad_check(cfg);
    auto instances = load_split_file(data_path);
    Dataset ds = build_dataset(instances, cfg.model, cfg.train.seed);
    Model model(cfg.model);
    ParamStore init = model.init_params(static_cast<int>(ds.item_ids.size()), cfg.train.seed);
    TrainResult result = train(model, ds, cfg.train, std::move(init), history_path);
    auto manifest = cfg.to_map();
    manifest["vocab_size"] = std::to_string(ds.item_ids.size());
    manifest["best_epoch"] = std::to_string(result.best_epoch);
    save_checkpoint(checkpoint_path, result.params, manifest);
    std::cout << "epochs=" << result.epochs_run << " best_epoch=" << result.best_epoch
              << " best_valid_gauc=" << result.history[result.best_epoch - 1].valid_gauc
              << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& split, const std::string& report_path, bool group_by_m,
             const std::string& evtr_path) {
    std::ostringstream body;
    if (!checkpoint_path.empty()) {
        std::map<std::string, std::string> manifest;
        ParamStore params = load_checkpoint(checkpoint_path, &manifest);
        manifest.erase("vocab_size");
        manifest.erase("best_epoch");
        RunConfig cfg = RunConfig::from_map(manifest);
        auto instances = load_split_file(data_path);
        Dataset ds = build_dataset(instances, cfg.model, cfg.train.seed);
        const std::vector<DenseInstance>* set = &ds.test;
        if (split == "train") set = &ds.train;
        else if (split == "valid") set = &ds.valid;
        else if (split != "test") throw std::runtime_error("unknown split: " + split);
        Model model(cfg.model);
        MetricReport rep = evaluate(model, params, *set, cfg.train.parallel);
        body << format_report(rep);
        if (group_by_m) {
            auto groups = grouped_evaluate(model, params, ds, *set, cfg.train.parallel);
            for (const auto& [key, grep] : groups)
                body << format_report(grep, "group[" + key + "].");
        }
    }
    if (!evtr_path.empty()) {
        InteractionLog exposures;
        std::vector<bool> engaged;
        load_exposures(evtr_path, &exposures, &engaged);
        auto curve = evtr_curve(exposures, engaged, 20);
        for (const auto& p : curve)
            body << "evtr[" << p.repetitions << "]=" << p.normalized_rate
                 << " (engaged " << p.engaged << "/" << p.exposures << ")\n";
    }
    if (!report_path.empty()) write_report(report_path, body.str());
    std::cout << body.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fatigue-aware sequential recommender"};
    app.require_subcommand(1);

    std::string config_path, input, output, output_dir = ".", data_path;
    std::string checkpoint = "checkpoint.bin", history = "history.tsv";
    std::string report_path, evtr_path, split = "test", exposures_path;
    std::vector<std::string> sets, ablations;
    int k_core = 10, max_len = 250;
    bool grad_check = false, group_by_m = false;

    auto* prepare = app.add_subcommand("prepare", "filter, sequence and split a log");
    prepare->add_option("--input", input)->required();
    prepare->add_option("--output-dir", output_dir);
    prepare->add_option("--k-core", k_core);
    prepare->add_option("--max-len", max_len);

    auto* synth = app.add_subcommand("synth", "generate a synthetic fatigue corpus");
    synth->add_option("--config", config_path);
    synth->add_option("--output", output)->required();
    synth->add_option("--exposures", exposures_path);
    synth->add_option("--set", sets, "override a config key (key=value)");

    auto* train_cmd = app.add_subcommand("train", "train a model");
    train_cmd->add_option("--config", config_path);
    train_cmd->add_option("--data", data_path);
    train_cmd->add_option("--checkpoint", checkpoint);
    train_cmd->add_option("--history", history);
    train_cmd->add_option("--ablation", ablations, "no_fusion|no_fru|no_cross|no_cl");
    train_cmd->add_option("--set", sets, "override a config key (key=value)");
    train_cmd->add_flag("--grad-check", grad_check, "run the finite-difference suite and exit");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", checkpoint);
    eval_cmd->add_option("--data", data_path);
    eval_cmd->add_option("--split", split);
    eval_cmd->add_option("--report", report_path);
    eval_cmd->add_flag("--group-by-m", group_by_m);
    eval_cmd->add_option("--evtr", evtr_path, "exposure log for the engagement-decay curve");

    auto* echo = app.add_subcommand("echo-config", "print the resolved configuration");
    echo->add_option("--config", config_path);
    echo->add_option("--set", sets);

    CLI11_PARSE(app, argc, argv);

    try {
        frec::RunConfig cfg;
        if (!config_path.empty()) cfg = frec::RunConfig::from_file(config_path);
        apply_overrides(cfg, sets, ablations);
        if (prepare->parsed()) return cmd_prepare(input, output_dir, k_core, max_len);
        if (synth->parsed()) return cmd_synth(cfg, output, exposures_path);
        if (train_cmd->parsed()) {
            if (!grad_check && data_path.empty())
                throw std::runtime_error("train: --data is required");
            return cmd_train(cfg, data_path, checkpoint, history, grad_check);
        }
        if (eval_cmd->parsed())
            return cmd_eval(data_path.empty() ? "" : checkpoint, data_path, split,
                            report_path, group_by_m, evtr_path);
        if (echo->parsed()) {
            std::cout << cfg.to_text();
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
