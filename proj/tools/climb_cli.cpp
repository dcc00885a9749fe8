// Command-line front end: data generation, ingestion + model fitting,
// single-instance explanation, the full evaluation harness and the solver
// benchmark, all seeded and reproducible. Exit codes: 0 success, 1 runtime
// failure, 2 usage/config error.
#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "climb/core.hpp"
#include "climb/dataset.hpp"
#include "climb/eval.hpp"
#include "climb/explain.hpp"
#include "climb/model.hpp"

namespace {

using nlohmann::json;

json base_manifest(const std::string& command) {
    return json{{"command", command}, {"version", climb::kVersion}};
}

const climb::Instance& find_user(const climb::InteractionDataset& data,
                                 const std::string& user_id) {
    for (const climb::Instance& u : data.users)
        if (u.user_id() == user_id) return u;
    throw climb::Error("unknown user: " + user_id);
}

// Accepts a catalog label or, failing that, a raw item index.
int resolve_item(const climb::Catalog& catalog, const std::string& token) {
    for (int t = 0; t < catalog.item_count(); ++t)
        if (catalog.label(t) == token) return t;
    try {
        std::size_t pos = 0;
        const int idx = std::stoi(token, &pos);
        if (pos == token.size() && idx >= 0 && idx < catalog.item_count()) return idx;
    } catch (...) {
    }
    throw climb::Error("unknown item: " + token);
}

void check_model_matches_data(const climb::CoocModel& model,
                              const climb::InteractionDataset& data) {
    if (model.catalog().labels() != data.catalog.labels())
        throw climb::Error("model and dataset catalogs differ; retrain the model on this data");
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw climb::Error("cannot write " + path);
    out << content;
    if (!out) throw climb::Error("failed writing " + path);
}

// ---- gen-data -------------------------------------------------------------

struct GenDataArgs {
    int users = 1000;
    int items = 2000;
    double zipf = 1.1;
    double mean_basket = 20.0;
    double basket_sigma = 0.8;
    std::uint64_t seed = 7;
    std::string out;
};

int run_gen_data(const GenDataArgs& args) {
    const auto data = climb::generate_synthetic(args.users, args.items, args.zipf,
                                                args.mean_basket, args.seed, args.basket_sigma);
    json manifest = base_manifest("gen-data");
    manifest["users"] = args.users;
    manifest["items"] = args.items;
    manifest["zipf"] = args.zipf;
    manifest["mean_basket"] = args.mean_basket;
    manifest["basket_sigma"] = args.basket_sigma;
    manifest["seed"] = args.seed;
    climb::write_interactions_csv(data, args.out, manifest.dump());
    std::cerr << "wrote " << args.out << ": " << data.users.size() << " users, "
              << data.catalog.item_count() << " items\n";
    return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string out;
    double threshold = 4.0;
    double shrinkage = 10.0;
    double tau = 1.0;
    double alpha = 0.75;
};

int run_train(const TrainArgs& args) {
    climb::IngestStats stats;
    const auto data = climb::ingest_interactions(args.data, args.threshold, &stats);
    std::cerr << "ingested " << args.data << ": " << stats.rows_kept << "/" << stats.rows_total
              << " rows kept at threshold " << args.threshold << ", " << stats.users_dropped
              << " users dropped, " << data.users.size() << " users, "
              << data.catalog.item_count() << " items\n";
    const auto model = climb::fit_cooc(data, args.shrinkage, args.tau, args.alpha);
    json manifest = base_manifest("train");
    manifest["threshold"] = args.threshold;
    manifest["shrinkage"] = args.shrinkage;
    manifest["tau"] = args.tau;
    manifest["alpha"] = args.alpha;
    climb::save_model(model, args.out, manifest.dump());
    std::cerr << "wrote " << args.out << ": " << model.nonzero_count()
              << " nonzero affinity weights\n";
    return 0;
}

// ---- explain ----------------------------------------------------------------

struct ExplainArgs {
    std::string model;
    std::string data;
    std::string user;
    std::string method = "all";
    int samples = 5000;
    double sigma = 0.25;
    double ridge = 1e-6;
    std::uint64_t seed = 42;
    std::string target;  // label or index; empty = top recommendation
    std::string out;     // empty = stdout
};

int run_explain(const ExplainArgs& args) {
    const auto model = climb::load_model(args.model);
    const auto data = climb::ingest_interactions(args.data);
    check_model_matches_data(model, data);
    const climb::Instance& user = find_user(data, args.user);

    int target;
    if (args.target.empty()) {
        target = climb::top_recommendation(model, user, data.catalog);
    } else {
        target = resolve_item(data.catalog, args.target);
    }

    std::vector<climb::Method> methods;
    if (args.method == "all")
        methods = {climb::Method::Lime, climb::Method::Shap, climb::Method::Climb};
    else
        methods = {climb::method_from_string(args.method)};

    climb::ExplainOptions options;
    options.n_samples = args.samples;
    options.sigma = args.sigma;
    options.ridge = args.ridge;

    json manifest = base_manifest("explain");
    manifest["user"] = args.user;
    manifest["method"] = args.method;
    manifest["samples"] = args.samples;
    manifest["sigma"] = args.sigma;
    manifest["ridge"] = args.ridge;
    manifest["seed"] = args.seed;
    manifest["target"] = target;

    std::string output;
    for (const climb::Method m : methods) {
        const climb::Explanation e =
            climb::explain(model, m, user, target, options,
                           climb::derive_seed(args.seed,
                                              std::string("explain/") + climb::method_name(m), 0));
        json obj = climb::explanation_to_json(e, data.catalog);
        obj["manifest"] = manifest;
        output += obj.dump();
        output += "\n";
    }
    if (args.out.empty())
        std::cout << output;
    else
        write_text_file(args.out, output);
    return 0;
}

// ---- evaluate ----------------------------------------------------------------

struct EvaluateArgs {
    std::string model;
    std::string data;
    std::string config_path;
    std::string out_dir;
    // flag overrides (applied over the config file when explicitly set)
    std::uint64_t seed = 0;
    int samples = 0;
    int jobs = -1;
    std::vector<std::string> methods;
    std::vector<int> ks;
};

int run_evaluate(const EvaluateArgs& args, const CLI::App* cmd) {
    climb::EvalConfig config;
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path);
        if (!in) throw climb::ConfigError("cannot open config file: " + args.config_path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& ex) {
            throw climb::ConfigError(std::string("config file is not valid JSON: ") + ex.what());
        }
        config = climb::eval_config_from_json(j);
    }
    if (cmd->count("--seed") > 0) config.seed = args.seed;
    if (cmd->count("--samples") > 0) config.n_samples = args.samples;
    if (cmd->count("--jobs") > 0) config.jobs = args.jobs;
    if (cmd->count("--ks") > 0) config.ks = args.ks;
    if (cmd->count("--methods") > 0) {
        config.methods.clear();
        for (const std::string& name : args.methods)
            config.methods.push_back(climb::method_from_string(name));
    }

    const auto model = climb::load_model(args.model);
    const auto data = climb::ingest_interactions(args.data);
    check_model_matches_data(model, data);

    const auto result = climb::run_full_evaluation(data, model, config);

    json manifest = base_manifest("evaluate");
    manifest["config"] = climb::eval_config_to_json(config);
    const std::string compact = manifest.dump();

    namespace fs = std::filesystem;
    fs::create_directories(args.out_dir);
    write_text_file((fs::path(args.out_dir) / "delta_rank.csv").string(),
                    climb::delta_rank_csv(result.delta_rank, compact));
    write_text_file((fs::path(args.out_dir) / "bias_variance.csv").string(),
                    climb::bias_variance_csv(result.bias_variance, compact));
    write_text_file((fs::path(args.out_dir) / "timing.csv").string(),
                    climb::timing_csv(result.timing, compact));
    write_text_file((fs::path(args.out_dir) / "report.json").string(),
                    climb::evaluation_report_json(result, config, manifest).dump(2) + "\n");
    std::cerr << "evaluation complete: " << result.failures.size() << " per-user failures, "
              << result.skipped.size() << " users skipped; reports in " << args.out_dir << "\n";
    return 0;
}

// ---- bench --------------------------------------------------------------------

struct BenchArgs {
    std::string model;
    std::string data;
    int n_users = 8;
    int samples = 5000;
    int reps = 5;
    std::uint64_t seed = 42;
    std::string out;  // empty = stdout
};

int run_bench(const BenchArgs& args) {
    const auto model = climb::load_model(args.model);
    const auto data = climb::ingest_interactions(args.data);
    check_model_matches_data(model, data);
    if (args.n_users < 1) throw climb::ConfigError("--n-users must be >= 1");

    // users spread evenly across the sparsity spectrum
    std::vector<std::size_t> order(data.users.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const int da = data.users[a].feature_count();
        const int db = data.users[b].feature_count();
        if (da != db) return da < db;
        return data.users[a].user_id() < data.users[b].user_id();
    });
    const int m = std::min<int>(args.n_users, static_cast<int>(order.size()));
    std::vector<climb::Instance> users;
    for (int i = 0; i < m; ++i) {
        const std::size_t pos = (m == 1) ? order.size() - 1
                                         : (static_cast<std::size_t>(i) * (order.size() - 1)) /
                                               static_cast<std::size_t>(m - 1);
        users.push_back(data.users[order[pos]]);
    }

    climb::ExplainOptions options;
    options.n_samples = args.samples;
    const std::vector<climb::Method> methods{climb::Method::Lime, climb::Method::Shap,
                                             climb::Method::Climb};
    const auto report =
        climb::bench_explainers(model, users, options, args.reps, args.seed, methods);

    json manifest = base_manifest("bench");
    manifest["n_users"] = m;
    manifest["samples"] = args.samples;
    manifest["reps"] = args.reps;
    manifest["seed"] = args.seed;

    const std::string csv = climb::timing_csv(report, manifest.dump());
    if (args.out.empty())
        std::cout << csv;
    else
        write_text_file(args.out, csv);

    const auto& lime_solve = report.cells.at({"lime", "solve"});
    const auto& climb_solve = report.cells.at({"climb", "solve"});
    if (lime_solve.median_ms > 0.0)
        std::cerr << "climb/lime solve-phase median ratio: "
                  << climb_solve.median_ms / lime_solve.median_ms << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"local explanation toolkit for black-box recommenders"};
    app.require_subcommand(1);

    GenDataArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic interaction CSV");
    gen_cmd->add_option("--users", gen.users, "number of users")->capture_default_str();
    gen_cmd->add_option("--items", gen.items, "catalog size")->capture_default_str();
    gen_cmd->add_option("--zipf", gen.zipf, "popularity exponent")->capture_default_str();
    gen_cmd->add_option("--mean-basket", gen.mean_basket, "mean interactions per user")
        ->capture_default_str();
    gen_cmd->add_option("--basket-sigma", gen.basket_sigma, "log-normal spread of basket sizes")
        ->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
    gen_cmd->add_option("--out", gen.out, "output CSV path")->required();

    TrainArgs train;
    CLI::App* train_cmd = app.add_subcommand("train", "fit the co-occurrence model");
    train_cmd->add_option("--data", train.data, "interaction CSV")->required();
    train_cmd->add_option("--out", train.out, "model output path")->required();
    train_cmd->add_option("--threshold", train.threshold, "rating binarization threshold")
        ->capture_default_str();
    train_cmd->add_option("--shrinkage", train.shrinkage, "PMI shrinkage")->capture_default_str();
    train_cmd->add_option("--tau", train.tau, "softmax temperature")->capture_default_str();
    train_cmd->add_option("--alpha", train.alpha, "basket-size mixing exponent")
        ->capture_default_str();

    ExplainArgs expl;
    CLI::App* explain_cmd = app.add_subcommand("explain", "explain one recommendation");
    explain_cmd->add_option("--model", expl.model, "model file")->required();
    explain_cmd->add_option("--data", expl.data, "interaction CSV")->required();
    explain_cmd->add_option("--user", expl.user, "user id to explain")->required();
    explain_cmd->add_option("--method", expl.method, "lime|shap|climb|all")
        ->check(CLI::IsMember({"lime", "shap", "climb", "all"}))
        ->capture_default_str();
    explain_cmd->add_option("--samples", expl.samples, "perturbation budget")
        ->capture_default_str();
    explain_cmd->add_option("--sigma", expl.sigma, "proximity kernel width")
        ->capture_default_str();
    explain_cmd->add_option("--ridge", expl.ridge, "lime l2 penalty")->capture_default_str();
    explain_cmd->add_option("--seed", expl.seed, "sampler seed")->capture_default_str();
    explain_cmd->add_option("--target", expl.target, "target item (label or index)");
    explain_cmd->add_option("--out", expl.out, "output path (default stdout)");

    EvaluateArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("evaluate", "run the full evaluation harness");
    eval_cmd->add_option("--model", eval_args.model, "model file")->required();
    eval_cmd->add_option("--data", eval_args.data, "interaction CSV")->required();
    eval_cmd->add_option("--config", eval_args.config_path, "evaluation config JSON");
    eval_cmd->add_option("--out-dir", eval_args.out_dir, "report output directory")->required();
    eval_cmd->add_option("--seed", eval_args.seed, "master seed (overrides config)");
    eval_cmd->add_option("--samples", eval_args.samples, "perturbation budget (overrides config)");
    eval_cmd->add_option("--jobs", eval_args.jobs, "worker threads (0 = hardware)");
    eval_cmd->add_option("--methods", eval_args.methods, "methods to run (overrides config)");
    eval_cmd->add_option("--ks", eval_args.ks, "removal batch sizes (overrides config)");

    BenchArgs bench;
    CLI::App* bench_cmd = app.add_subcommand("bench", "time the explainers per phase");
    bench_cmd->add_option("--model", bench.model, "model file")->required();
    bench_cmd->add_option("--data", bench.data, "interaction CSV")->required();
    bench_cmd->add_option("--n-users", bench.n_users, "users to time")->capture_default_str();
    bench_cmd->add_option("--samples", bench.samples, "perturbation budget")
        ->capture_default_str();
    bench_cmd->add_option("--reps", bench.reps, "repetitions per user (>= 3)")
        ->capture_default_str();
    bench_cmd->add_option("--seed", bench.seed, "sampler seed")->capture_default_str();
    bench_cmd->add_option("--out", bench.out, "output CSV path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen_cmd->parsed()) return run_gen_data(gen);
        if (train_cmd->parsed()) return run_train(train);
        if (explain_cmd->parsed()) return run_explain(expl);
        if (eval_cmd->parsed()) return run_evaluate(eval_args, eval_cmd);
        if (bench_cmd->parsed()) return run_bench(bench);
    } catch (const climb::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
