#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "geomech/geomech.hpp"

int main(int argc, char** argv) {
    CLI::App app{"geomech: mechanics on configuration manifolds"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    CLI::App* run_cmd = app.add_subcommand("run", "execute a run configuration file");
    run_cmd->add_option("config", config_path, "path to the configuration file")->required();
    run_cmd->add_option("--set", overrides, "override entries as key=value (repeatable)");

    CLI::App* systems_cmd =
        app.add_subcommand("systems", "list catalog systems and their parameters");

    CLI11_PARSE(app, argc, argv);

    if (systems_cmd->parsed()) {
        for (const geomech::CatalogEntry& entry : geomech::system_catalog()) {
            std::cout << entry.name << ":";
            for (const std::string& p : entry.parameters) std::cout << " " << p;
            std::cout << "\n";
        }
        std::cout << "euler-top: i1 i2 i3 (mode = euler-top, reduced rigid body)\n";
        return 0;
    }

    try {
        std::ifstream in(config_path, std::ios::binary);
        if (!in) {
            std::cerr << "geomech: cannot read '" << config_path << "'\n";
            return 1;
        }
        std::stringstream buffer;
        buffer << in.rdbuf();
        const geomech::RunConfig cfg = geomech::parse_config(buffer.str(), overrides);
        return geomech::run(cfg, std::cerr);
    } catch (const geomech::Error& e) {
        std::cerr << "geomech: " << e.what() << "\n";
        return 1;
    }
}
