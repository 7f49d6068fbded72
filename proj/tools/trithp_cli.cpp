// Command-line front end: simulate, train, eval, gradcheck.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "trithp/trithp.hpp"

namespace fs = std::filesystem;
using namespace trithp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitNumeric = 2;

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

nlohmann::json read_config(const std::string& path) { return path.empty() ? nlohmann::json::object() : read_json_file(path); }

struct SimulateArgs {
    std::string config;
    std::optional<std::size_t> k, seqs, min_len, max_len;
    std::optional<std::uint64_t> seed;
    std::optional<double> horizon, mu, alpha, beta;
    std::string out;
};

int run_simulate(const SimulateArgs& a) {
    const nlohmann::json j = read_config(a.config);
    HawkesParams params;
    SyntheticOptions opt;
    try {
        const std::size_t k = a.k.value_or(j.value("K", std::size_t{5}));
        params = default_synthetic_params(k);
        if (j.contains("mu")) params.mu = j.at("mu").get<std::vector<double>>();
        if (j.contains("alpha")) params.alpha = j.at("alpha").get<std::vector<double>>();
        if (j.contains("beta")) params.beta = j.at("beta").get<std::vector<double>>();
        opt.num_sequences = a.seqs.value_or(j.value("seqs", opt.num_sequences));
        opt.seed = a.seed.value_or(j.value("seed", opt.seed));
        opt.horizon = a.horizon.value_or(j.value("horizon", opt.horizon));
        opt.min_length = a.min_len.value_or(j.value("min_length", opt.min_length));
        opt.max_length = a.max_len.value_or(j.value("max_length", opt.max_length));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid simulate config: ") + e.what());
    }
    if (a.mu) params.mu.assign(params.dim(), *a.mu);
    if (a.alpha) params.alpha.assign(params.dim() * params.dim(), *a.alpha);
    if (a.beta) params.beta.assign(params.dim() * params.dim(), *a.beta);
    if (a.out.empty()) throw ConfigError("simulate needs --out");
    params.require_stationary();

    const auto splits = make_synthetic_dataset(params, opt, a.out);
    std::cerr << "simulated " << opt.num_sequences << " sequences (K=" << params.dim() << ", branching radius "
              << params.branching_radius() << "): train " << splits.train.sequences.size() << ", dev "
              << splits.dev.sequences.size() << ", test " << splits.test.sequences.size() << " -> " << a.out << "\n";
    return kExitOk;
}

struct TrainArgs {
    std::string config, train, dev, out, method, resume, ablation;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> mc_samples, epochs, batch_size, k;
    std::optional<double> lr;
    bool rescale_times = false;
};

int run_train(const TrainArgs& a) {
    TrainConfig cfg = train_config_from_json(read_config(a.config));
    if (!a.train.empty()) cfg.train_path = a.train;
    if (!a.dev.empty()) cfg.dev_path = a.dev;
    if (!a.out.empty()) cfg.out_dir = a.out;
    if (!a.method.empty()) cfg.train_method = parse_method(a.method);
    if (a.seed) cfg.seed = *a.seed;
    if (a.mc_samples) cfg.mc_samples = *a.mc_samples;
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.batch_size) cfg.batch_size = *a.batch_size;
    if (a.lr) cfg.adam.lr = *a.lr;
    if (a.k) cfg.model.num_types = *a.k;
    if (a.rescale_times) cfg.rescale_times = true;
    if (a.ablation == "pri_only") {
        cfg.use_primary_only();
    } else if (!a.ablation.empty()) {
        throw ConfigError("unknown ablation '" + a.ablation + "' (expected pri_only)");
    }
    if (cfg.train_path.empty()) throw ConfigError("train needs a training set (--train or \"train\" in the config)");
    if (cfg.out_dir.empty()) throw ConfigError("train needs --out");

    LoadOptions load;
    load.rescale_times = cfg.rescale_times;
    load.num_types = cfg.model.num_types;
    const Dataset train_ds = load_dataset(cfg.train_path, load);
    if (cfg.model.num_types == 0) {
        cfg.model.num_types = train_ds.num_types;
        load.num_types = train_ds.num_types;
    }
    Dataset dev_ds;
    if (!cfg.dev_path.empty()) dev_ds = load_dataset(cfg.dev_path, load);
    for (const Dataset* ds : std::initializer_list<const Dataset*>{&train_ds, &dev_ds})
        for (std::size_t i = 0; i < ds->sequences.size(); ++i) {
            try {
                validate_sequence(ds->sequences[i], cfg.model.num_types);
            } catch (const DataError& e) {
                throw DataError(ds->name + ": sequence " + std::to_string(i) + ": " + e.what());
            }
        }
    cfg.validate();

    const fs::path out = cfg.out_dir;
    ensure_dir(out);
    write_json_file(out / "config.json", to_json(cfg), 2);

    TrainingState st = a.resume.empty() ? init_training(cfg) : training_state_from_json(read_json_file(a.resume), cfg);
    std::cerr << "training on " << train_ds.sequences.size() << " sequences (" << train_ds.total_events()
              << " events), dev " << dev_ds.sequences.size() << ", " << st.model.parameter_count() << " parameters\n";
    train(st, train_ds, dev_ds, cfg, [&](const TrainingState& s) {
        const EpochRecord& r = s.history.back();
        std::cerr << "epoch " << r.epoch << "  objective " << std::setprecision(6) << r.train_objective
                  << "  dev_ll " << r.dev_ll << "  dev_acc " << r.dev_accuracy << "  dev_rmse " << r.dev_rmse
                  << (s.best_epoch == r.epoch ? "  *" : "") << "\n";
        write_text(out / "history.csv", history_csv(s.history));
        save_model(out / "best_model.json", s.best_model);
        write_json_file(out / "training_state.json", training_state_to_json(s, cfg));
    });
    write_text(out / "history.csv", history_csv(st.history));
    save_model(out / "best_model.json", st.best_model);
    save_model(out / "final_model.json", st.model);
    write_json_file(out / "training_state.json", training_state_to_json(st, cfg));

    nlohmann::json summary = {{"epochs_done", st.epochs_done},
                              {"best_epoch", st.best_epoch},
                              {"stopped", st.stopped},
                              {"numeric_failure", st.numeric_failure},
                              {"stop_reason", st.stop_reason}};
    if (st.best_epoch > 0) {
        const EpochRecord& b = st.history[st.best_epoch - 1];
        summary["best_dev"] = {{"ll_per_event", b.dev_ll}, {"accuracy", b.dev_accuracy}, {"rmse", b.dev_rmse}};
    }
    write_json_file(out / "summary.json", summary, 2);
    if (!st.stop_reason.empty()) std::cerr << st.stop_reason << "\n";
    if (st.numeric_failure) {
        std::cerr << "error: training halted on a numeric failure; last good model kept in " << out / "best_model.json"
                  << "\n";
        return kExitNumeric;
    }
    std::cerr << "best epoch " << st.best_epoch << ", outputs in " << out << "\n";
    return kExitOk;
}

struct EvalArgs {
    std::string model, data, out, method = "ni";
    std::size_t mc_samples = 20;
    std::uint64_t seed = 0;
    bool rescale_times = false;
};

int run_eval(const EvalArgs& a) {
    const TriThpModel model = load_model(a.model);
    LoadOptions load;
    load.rescale_times = a.rescale_times;
    load.num_types = model.config.num_types;
    const Dataset ds = load_dataset(a.data, load);
    for (std::size_t i = 0; i < ds.sequences.size(); ++i) validate_sequence(ds.sequences[i], model.config.num_types);
    const EvalReport r = evaluate(model, ds, parse_method(a.method), a.mc_samples, a.seed);
    const std::string name = fs::path(a.data).stem().string();
    const nlohmann::json j = to_json(r, name);
    if (!a.out.empty()) {
        ensure_dir(a.out);
        write_json_file(fs::path(a.out) / "eval.json", j, 2);
        write_text(fs::path(a.out) / "eval.csv", eval_csv_header() + "\n" + eval_csv_row(r, name) + "\n");
    }
    std::cout << j.dump(2) << "\n";
    std::cerr << name << ": ll/event " << r.ll_per_event << ", accuracy " << r.accuracy << ", rmse " << r.rmse << "\n";
    return kExitOk;
}

struct GradcheckArgs {
    std::uint64_t seed = 1;
    std::string out;
    double tolerance = 1e-4;
};

int run_gradcheck(const GradcheckArgs& a) {
    GradCheckOptions opt;
    opt.tolerance = a.tolerance;
    const auto rows = run_gradient_suite(a.seed, opt);
    bool all = true;
    std::string csv = "name,parameters,max_rel_error,passed\n";
    std::printf("%-22s %10s %14s  %s\n", "case", "params", "max_rel_err", "result");
    for (const auto& r : rows) {
        all = all && r.passed;
        std::printf("%-22s %10zu %14.3e  %s\n", r.name.c_str(), r.parameters, r.max_rel_error, r.passed ? "PASS" : "FAIL");
        if (!r.passed && !r.diagnostic.empty()) std::fprintf(stderr, "  %s: %s\n", r.name.c_str(), r.diagnostic.c_str());
        char line[256];
        std::snprintf(line, sizeof line, "%s,%zu,%.17g,%d\n", r.name.c_str(), r.parameters, r.max_rel_error, r.passed ? 1 : 0);
        csv += line;
    }
    if (!a.out.empty()) {
        ensure_dir(a.out);
        write_text(fs::path(a.out) / "gradcheck.csv", csv);
    }
    std::fprintf(stderr, "%s\n", all ? "all gradients match finite differences" : "gradient check FAILED");
    return all ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tri-THP: transformer Hawkes process toolkit"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Simulate a multivariate Hawkes dataset");
    simulate->add_option("--config", sim.config, "JSON file with K, seqs, seed, horizon, min_length, max_length, mu, alpha, beta");
    simulate->add_option("--K", sim.k, "Number of event types");
    simulate->add_option("--seqs", sim.seqs, "Number of sequences");
    simulate->add_option("--seed", sim.seed, "Base seed (sequence s uses seed + s)");
    simulate->add_option("--horizon", sim.horizon, "Observation window length T");
    simulate->add_option("--min-len", sim.min_len, "Minimum events per sequence");
    simulate->add_option("--max-len", sim.max_len, "Maximum events per sequence");
    simulate->add_option("--mu", sim.mu, "Base rate for every type");
    simulate->add_option("--alpha", sim.alpha, "Excitation for every pair of types");
    simulate->add_option("--beta", sim.beta, "Decay for every pair of types");
    simulate->add_option("--out", sim.out, "Output directory")->required();

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    train_cmd->add_option("--config", tr.config, "JSON training config");
    train_cmd->add_option("--train", tr.train, "Training set (.jsonl)");
    train_cmd->add_option("--dev", tr.dev, "Dev set (.jsonl) for model selection");
    train_cmd->add_option("--out", tr.out, "Output directory");
    train_cmd->add_option("--seed", tr.seed, "Seed");
    train_cmd->add_option("--method", tr.method, "Training integral estimator")->check(CLI::IsMember({"mc", "ni"}));
    train_cmd->add_option("--mc-samples", tr.mc_samples, "Monte Carlo samples per interval");
    train_cmd->add_option("--epochs", tr.epochs, "Maximum epochs");
    train_cmd->add_option("--batch-size", tr.batch_size, "Sequences per batch");
    train_cmd->add_option("--lr", tr.lr, "Adam learning rate");
    train_cmd->add_option("--K", tr.k, "Number of event types (default: from the data)");
    train_cmd->add_option("--ablation", tr.ablation, "pri_only: keep only the primary branch");
    train_cmd->add_option("--resume", tr.resume, "Continue from a training_state.json");
    train_cmd->add_flag("--rescale-times", tr.rescale_times, "Rescale times to unit mean gap");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on a dataset");
    eval_cmd->add_option("--model", ev.model, "Model checkpoint (.json)")->required();
    eval_cmd->add_option("--data", ev.data, "Dataset (.jsonl)")->required();
    eval_cmd->add_option("--out", ev.out, "Output directory for eval.json and eval.csv");
    eval_cmd->add_option("--method", ev.method, "Integral estimator")->check(CLI::IsMember({"mc", "ni"}));
    eval_cmd->add_option("--mc-samples", ev.mc_samples, "Monte Carlo samples per interval");
    eval_cmd->add_option("--seed", ev.seed, "Seed for Monte Carlo");
    eval_cmd->add_flag("--rescale-times", ev.rescale_times, "Rescale times to unit mean gap");

    GradcheckArgs gc;
    auto* grad_cmd = app.add_subcommand("gradcheck", "Check every gradient against finite differences");
    grad_cmd->add_option("--seed", gc.seed, "Seed");
    grad_cmd->add_option("--out", gc.out, "Output directory for gradcheck.csv");
    grad_cmd->add_option("--tolerance", gc.tolerance, "Maximum relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kExitInvalid;
    }

    try {
        if (*simulate) return run_simulate(sim);
        if (*train_cmd) return run_train(tr);
        if (*eval_cmd) return run_eval(ev);
        if (*grad_cmd) return run_gradcheck(gc);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    }
    return kExitInvalid;
}
