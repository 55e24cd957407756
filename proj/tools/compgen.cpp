// compgen: config-driven composition generation experiments.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "compgen/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::string checkpoint;
    std::string input;
    std::vector<double> properties;
    std::optional<std::size_t> n;
};

int run(const std::string& command, const Options& opt) {
    const fs::path out = opt.out;
    try {
        compgen::RunConfig config;
        if (!opt.config.empty()) {
            config = compgen::load_run_config(opt.config);
        } else {
            config = compgen::config_from_json(nlohmann::json::object());
            compgen::resolve_paths(config, fs::current_path());
        }
        if (opt.seed) {
            compgen::override_seed(config, *opt.seed);
        }
        const fs::path cwd = fs::current_path();
        if (!opt.checkpoint.empty()) {
            config.paths.checkpoint = fs::absolute(cwd / opt.checkpoint).lexically_normal().string();
        }
        if (!opt.input.empty()) {
            config.paths.compositions = fs::absolute(cwd / opt.input).lexically_normal().string();
        }
        if (!opt.properties.empty()) {
            config.eval.properties = opt.properties;
        }
        if (opt.n) {
            compgen::require(*opt.n >= 1, compgen::ErrorCode::ConfigError, "--n must be >= 1");
            config.eval.n_generate = *opt.n;
        }
        compgen::run_command(command, config, out);
        return 0;
    } catch (const compgen::Error& e) {
        const auto record = compgen::error_record(command, compgen::to_string(e.code()), e.what());
        std::cerr << record.dump() << "\n";
        std::error_code ec;
        fs::create_directories(out, ec);
        if (!ec) {
            std::ofstream(out / "error.json") << record.dump(2) << "\n";
        }
        return 1;
    } catch (const std::exception& e) {
        const auto record = compgen::error_record(command, "InternalError", e.what());
        std::cerr << record.dump() << "\n";
        std::error_code ec;
        fs::create_directories(out, ec);
        if (!ec) {
            std::ofstream(out / "error.json") << record.dump(2) << "\n";
        }
        return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Property-conditioned composition generation experiments"};
    app.require_subcommand(1);
    Options opt;
    std::uint64_t seed = 0;

    const std::vector<std::pair<std::string, std::string>> commands{
        {"featurize", "Featurize the dataset and write split, schema and normalization files"},
        {"train", "Train the configured model and write a checkpoint with loss traces"},
        {"generate", "Generate compositions for target properties"},
        {"modify", "Repair net valence of a generated compositions file"},
        {"evaluate", "Nearest-neighbor, predictor and valence-repair reports"},
        {"extrapolate", "Per-range extrapolation curves"},
        {"synthbench", "Generate the synthetic benchmark and run the full pipeline on it"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opt.config, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
        sub->add_option("--seed", seed, "Master seed override (re-derives every sub-seed)");
        if (name == "generate" || name == "modify" || name == "evaluate") {
            sub->add_option("--checkpoint", opt.checkpoint, "Model checkpoint");
        }
        if (name == "generate") {
            sub->add_option("--properties", opt.properties, "Target properties")->delimiter(',');
            sub->add_option("--n", opt.n, "Samples per property");
        }
        if (name == "modify") {
            sub->add_option("--input", opt.input, "Compositions file to repair");
        }
    }

    CLI11_PARSE(app, argc, argv);
    CLI::App* chosen = app.get_subcommands().front();
    if (chosen->count("--seed") > 0) {
        opt.seed = seed;
    }
    return run(chosen->get_name(), opt);
}
