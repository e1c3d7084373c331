#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "nmmt/config.hpp"
#include "nmmt/experiments.hpp"

namespace {

int default_jobs()
{
    if (const char* env = std::getenv("NMMT_JOBS")) {
        try {
            const int j = std::stoi(env);
            if (j >= 1) {
                return j;
            }
        } catch (const std::exception&) {
        }
        std::cerr << "ignoring invalid NMMT_JOBS value '" << env << "'\n";
    }
    return 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Non-marginal multiple testing experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;

    const std::pair<const char*, nmmt::ExperimentKind> kinds[] = {
        {"oracle-suite", nmmt::ExperimentKind::OracleSuite},
        {"compare", nmmt::ExperimentKind::Compare},
        {"rates", nmmt::ExperimentKind::Rates},
        {"alpha-control", nmmt::ExperimentKind::AlphaControl},
        {"equipartition", nmmt::ExperimentKind::Equipartition},
    };
    std::optional<nmmt::ExperimentKind> chosen;
    for (const auto& [name, kind] : kinds) {
        CLI::App* sub = app.add_subcommand(name, std::string("run the ") + name + " experiment");
        sub->add_option("--config", config_path, "experiment config (JSON)")->required();
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed, "master seed, overrides the config");
        sub->add_option("--jobs", jobs, "worker threads (fallback: NMMT_JOBS)")->check(CLI::PositiveNumber);
        sub->callback([&chosen, kind = kind] { chosen = kind; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    nmmt::ExperimentConfig config;
    try {
        config = nmmt::load_config(config_path, chosen);
        if (seed) {
            config.seed = *seed;
        }
        config.validate();
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }

    const std::string out = !out_dir.empty() ? out_dir : config.output_dir.value_or("results");
    const int workers = jobs ? *jobs : default_jobs();
    try {
        const int code = nmmt::harness::run_experiment(config, out, workers);
        if (code != 0) {
            std::cerr << "run failed: failure threshold exceeded (see " << out << "/summary.json)\n";
        }
        return code;
    } catch (const nmmt::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        return 2;
    }
}
