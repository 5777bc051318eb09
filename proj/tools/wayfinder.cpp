#include <wayfinder/service.hpp>
#include <wayfinder/sim.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

int serve(const std::string& config_path) {
    using namespace wayfinder;
    std::optional<std::filesystem::path> path;
    if (!config_path.empty()) path = config_path;
    const ServiceConfig config = load_service_config(path, process_env());
    Engine engine(config.engine_config(), config.store_path);
    Server server(engine, config);
    server.start();
    std::cout << "http on " << config.host << ':' << server.http_port() << ", live channel on " << config.host << ':'
              << server.live_port() << std::endl;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
    server.stop();
    engine.checkpoint();
    return 0;
}

int simulate(const std::string& config_path, const std::string& out) {
    using namespace wayfinder::sim;
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot read " + config_path);
    const ExperimentConfig config = ExperimentConfig::from_json(nlohmann::json::parse(in));
    const auto report = run_experiment(config, std::filesystem::path(out));
    std::cout << report.to_table();
    return 0;
}

int report(const std::string& runs) {
    using namespace wayfinder::sim;
    const auto rebuilt = report_from_runs(runs);
    write_report(rebuilt, runs);
    std::cout << rebuilt.to_table();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"wayfinder: exploratory testing guidance service and simulator"};
    app.require_subcommand(1);

    std::string serve_config;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API and live channel");
    serve_cmd->add_option("--config", serve_config, "JSON config file (WAYFINDER_* variables override keys)");

    std::string sim_config, sim_out;
    auto* sim_cmd = app.add_subcommand("simulate", "Run a simulated experiment");
    sim_cmd->add_option("--config", sim_config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sim_cmd->add_option("--out", sim_out, "Output directory")->required();

    std::string runs_dir;
    auto* report_cmd = app.add_subcommand("report", "Rebuild report.csv and report.txt from a simulate output directory");
    report_cmd->add_option("--runs", runs_dir, "Directory written by simulate")->required()->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve_cmd) return serve(serve_config);
        if (*sim_cmd) return simulate(sim_config, sim_out);
        if (*report_cmd) return report(runs_dir);
    } catch (const wayfinder::ValidationError& e) {
        std::cerr << "error: " << (e.field().empty() ? "" : e.field() + ": ") << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
