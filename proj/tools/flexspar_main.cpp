#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "flexspar/control.hpp"
#include "flexspar/experiment.hpp"

namespace {

using nlohmann::json;

int fail(const std::string& kind, const std::string& message, int code = 1) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
  return code;
}

json plans_for(const flexspar::ExperimentConfig& cfg) {
  const auto em = flexspar::build_energy_model(cfg);
  const auto settings = flexspar::control_settings(cfg);
  json out = json::array();
  for (const auto& name : cfg.schemes) {
    out.push_back(flexspar::solve_scheme(flexspar::scheme_from_string(name), em, settings).to_json());
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-aware compressed federated learning simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "plan and train every configured scheme");
  run->add_option("config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory (defaults to output_dir in the config)");

  std::string axis;
  std::vector<double> values;
  std::string format = "csv";
  auto* sweep = app.add_subcommand("sweep", "flexible plan across an energy-intensity axis");
  sweep->add_option("config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--axis", axis, "zeta_com or zeta_cmp (also ζ_com, ζ_cmp)")->required();
  sweep->add_option("--values", values, "intensity values, ascending")->required();
  sweep->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  auto* solve = app.add_subcommand("solve", "compression plans only, one per configured scheme");
  solve->add_option("config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);

  std::size_t grid_n = 400;
  auto* oracle = app.add_subcommand("oracle", "brute-force plan (at most 3 devices)");
  oracle->add_option("config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  oracle->add_option("--grid", grid_n, "grid points per device");

  std::string run_dir;
  auto* verify = app.add_subcommand("verify", "re-run a finished experiment and re-check its invariants");
  verify->add_option("run-dir", run_dir, "directory written by `run`")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*run) {
      const auto cfg = flexspar::load_config(config_path);
      const auto result = flexspar::run_experiment(cfg, out_dir);
      json brief = json::array();
      for (const auto& s : result.summary["schemes"]) {
        brief.push_back({{"scheme", s["scheme"]},
                         {"H", s["plan"]["H"]},
                         {"energy_total_J", s["energy_total_J"]},
                         {"rounds_to_target", s["rounds_to_target"]},
                         {"final_loss", s["final_loss"]},
                         {"diverged", s["diverged"]}});
      }
      std::cout << json{{"output_dir", result.dir.string()}, {"schemes", brief}}.dump(2) << '\n';
    } else if (*sweep) {
      const auto cfg = flexspar::load_config(config_path);
      const auto table = flexspar::sweep_intensity(cfg, flexspar::intensity_axis_from_string(axis), values);
      if (format == "json") {
        std::cout << table.to_json().dump(2) << '\n';
      } else {
        std::cout << table.to_csv();
      }
    } else if (*solve) {
      std::cout << plans_for(flexspar::load_config(config_path)).dump(2) << '\n';
    } else if (*oracle) {
      const auto cfg = flexspar::load_config(config_path);
      std::cout << flexspar::oracle_brute_force(flexspar::build_energy_model(cfg), grid_n).to_json().dump(2) << '\n';
    } else if (*verify) {
      const auto report = flexspar::verify_run(run_dir);
      std::cout << report.details.dump(2) << '\n';
      if (!report.ok) return fail("verification_failed", "one or more checks failed; see stdout report", 3);
    }
  } catch (const std::invalid_argument& e) {
    return fail("invalid_argument", e.what());
  } catch (const std::domain_error& e) {
    return fail("domain_error", e.what());
  } catch (const std::exception& e) {
    return fail("runtime_error", e.what());
  }
  return 0;
}
