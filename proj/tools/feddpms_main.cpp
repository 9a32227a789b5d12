// Experiment driver CLI: run | sweep-beta | cost-report | dp-budget.
// FEDDPMS_OUTPUT_DIR overrides the configured output directory.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "feddpms/experiment.hpp"

namespace {

using feddpms::ExperimentConfig;

struct ConfigCli {
    std::string config_path;
    nlohmann::json overrides = nlohmann::json::object();

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "JSON config file");
        add<std::string>(app, "scheme");
        add<std::size_t>(app, "K");
        add<std::size_t>(app, "k");
        add<double>(app, "beta");
        add<std::size_t>(app, "T");
        add<std::size_t>(app, "T_p");
        add<std::size_t>(app, "local_epochs");
        add<std::size_t>(app, "batch_size");
        add<double>(app, "lambda");
        add<std::size_t>(app, "n");
        add<std::size_t>(app, "alpha");
        add<double>(app, "noise_std");
        add<double>(app, "mu_prox");
        add<double>(app, "lr");
        add<std::size_t>(app, "lr_decay_period");
        add<double>(app, "lr_decay_gamma");
        add<std::size_t>(app, "max_attempts");
        add<std::uint64_t>(app, "master_seed");
        add<std::size_t>(app, "trials");
        add<double>(app, "test_fraction");
        add<bool>(app, "stub_training");
        add<std::string>(app, "output_dir");
        add<std::size_t>(app, "classes");
        add<std::size_t>(app, "per_class");
        add<double>(app, "spread");
        add<std::size_t>(app, "feature_dim");
        add<std::string>(app, "idx_images");
        add<std::string>(app, "idx_labels");
        add<std::size_t>(app, "clf_hidden");
        add<std::size_t>(app, "latent_dim");
        add<double>(app, "report_epsilon");
        add<double>(app, "report_delta");
    }

    template <typename T>
    void add(CLI::App* app, const std::string& key) {
        app->add_option_function<T>("--" + key, [this, key](const T& v) { overrides[key] = v; });
    }

    ExperimentConfig resolve() const {
        nlohmann::json j = nlohmann::json::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw std::runtime_error("cannot open config file: " + config_path);
            if (in.peek() != std::ifstream::traits_type::eof()) in >> j;
        }
        for (const auto& [key, value] : overrides.items()) j[key] = value;
        ExperimentConfig cfg = feddpms::parse_config_json(j);
        if (const char* env = std::getenv("FEDDPMS_OUTPUT_DIR")) cfg.output_dir = env;
        return cfg;
    }
};

int cmd_run(const ConfigCli& cli) {
    ExperimentConfig cfg = cli.resolve();
    feddpms::RunMetrics m = feddpms::run_experiment(cfg);
    feddpms::write_outputs(cfg, m);
    std::cout << feddpms::summary_json(cfg, m).dump(2) << std::endl;
    return 0;
}

int cmd_sweep_beta(const ConfigCli& cli, const std::vector<double>& betas,
                   const std::vector<std::string>& schemes) {
    ExperimentConfig base = cli.resolve();
    std::filesystem::create_directories(base.output_dir);
    std::ofstream out(std::filesystem::path(base.output_dir) / "sweep_beta.csv");
    out << "beta,scheme,mean_final_accuracy,partition_hash\n";
    std::cout << "beta,scheme,mean_final_accuracy,partition_hash\n";
    for (double beta : betas) {
        for (const auto& s : schemes) {
            ExperimentConfig cfg = base;
            cfg.beta = beta;
            cfg.scheme = feddpms::parse_scheme(s);
            cfg.validate();
            feddpms::RunMetrics m = feddpms::run_experiment(cfg);
            std::ostringstream row;
            row << beta << "," << s << "," << std::setprecision(10) << m.mean_final_accuracy
                << "," << m.trials.front().partition_hash;
            out << row.str() << "\n";
            std::cout << row.str() << std::endl;
        }
    }
    return 0;
}

int cmd_cost_report(const ConfigCli& cli) {
    ExperimentConfig cfg = cli.resolve();
    // Theta from the configured geometry; synthetic feature_dim unless IDX
    const std::size_t input_dim = cfg.uses_idx() ? 784 : cfg.synthetic.feature_dim;
    feddpms::VaeArch arch = cfg.arch(input_dim, cfg.synthetic.classes);
    feddpms::CostInputs in = feddpms::cost_inputs_for(cfg, arch, cfg.master_seed);
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : feddpms::cost_table(in)) {
        nlohmann::json row = {{"scheme", r.scheme}, {"comm", r.comm}, {"memory", r.memory}};
        if (!r.compute_label.empty() && r.compute == 0.0) row["compute"] = r.compute_label;
        else row["compute"] = r.compute;
        rows.push_back(std::move(row));
    }
    nlohmann::json j = {{"theta", in.theta},
                        {"r1", feddpms::comm_r1(in.alpha, in.n, in.latent, in.theta)},
                        {"r2", feddpms::comm_r2(in.nu(), in.T, in.T_p)},
                        {"expected_decoder_downloads", feddpms::expected_downloads(in.nu(), in.k, in.T, in.T_p)},
                        {"table", rows}};
    std::cout << j.dump(2) << std::endl;
    return 0;
}

int cmd_dp_budget(const ConfigCli& cli) {
    ExperimentConfig cfg = cli.resolve();
    std::cout << feddpms::dp_budget_report(cfg).dump(2) << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FedDPMS federated-learning simulator"};
    app.require_subcommand(1);

    ConfigCli run_cli, sweep_cli, cost_cli, dp_cli;
    auto* run = app.add_subcommand("run", "run one experiment (per-round CSV + JSON summary)");
    run_cli.attach(run);

    auto* sweep = app.add_subcommand("sweep-beta", "run schemes across Dirichlet concentrations");
    sweep_cli.attach(sweep);
    std::vector<double> betas{0.1, 0.3, 0.5};
    std::vector<std::string> schemes{"feddpms", "fedavg"};
    sweep->add_option("--betas", betas, "concentration values");
    sweep->add_option("--schemes", schemes, "schemes to compare");

    auto* cost = app.add_subcommand("cost-report", "analytic overhead table");
    cost_cli.attach(cost);

    auto* dp = app.add_subcommand("dp-budget", "per-client (epsilon, delta) report");
    dp_cli.attach(dp);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_cli);
        if (sweep->parsed()) return cmd_sweep_beta(sweep_cli, betas, schemes);
        if (cost->parsed()) return cmd_cost_report(cost_cli);
        if (dp->parsed()) return cmd_dp_budget(dp_cli);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
