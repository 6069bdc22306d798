#include "qns/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <map>
#include <string>

namespace {

std::string kebab(std::string s) {
    std::replace(s.begin(), s.end(), '_', '-');
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantum neuronal sensing simulator"};
    app.set_help_all_flag("--help-all");

    std::string experiment;
    std::string config_path;
    app.add_option("experiment", experiment, "Experiment to run")
        ->required()
        ->check(CLI::IsMember(qns::experiment_kinds()));
    app.add_option("--config", config_path, "JSON run configuration; flags override its values");

    const auto names = qns::config_keys();
    std::map<std::string, std::string> values;
    for (const auto& key : names) {
        if (key == "experiment") continue;
        app.add_option("--" + kebab(key), values[key], "Overrides config key " + key);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << nlohmann::json{{"error", "config"}, {"message", e.what()}}.dump() << '\n';
        return qns::kExitConfig;
    }

    std::map<std::string, std::string> flags;
    for (const auto& key : names)
        if (key != "experiment" && app.count("--" + kebab(key)) > 0) flags[key] = values[key];
    return qns::run_command(experiment, config_path, flags, std::cerr);
}
