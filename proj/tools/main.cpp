// dsgd: configuration-driven runner for the doubly stochastic SGD laboratory.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "dsgd/config.hpp"
#include "dsgd/experiments.hpp"
#include "dsgd/parallel.hpp"

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << bytes;
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Doubly stochastic SGD laboratory"};
  app.footer("Config keys and defaults:\n" + dsgd::config_reference() +
             "\nOutputs: <prefix>_results.csv and <prefix>_manifest.json.\n"
             "A manifest can be passed to `run` in place of a config to reproduce its CSV.");

  bool list = false;
  app.add_flag("--list-experiments", list, "List experiment types and exit");

  std::string input;
  std::optional<std::string> out_prefix;
  std::optional<std::uint64_t> seed;
  std::size_t threads = dsgd::default_thread_count();
  auto* run = app.add_subcommand("run", "Run an experiment from a config or manifest");
  run->add_option("config", input, "Config file, or a *_manifest.json from an earlier run")
      ->required();
  run->add_option("--out", out_prefix, "Output path prefix (overrides `output`)");
  run->add_option("--threads", threads, "Worker threads (default: available cores)")
      ->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "Master seed (overrides `master_seed`)");

  CLI11_PARSE(app, argc, argv);

  if (list) {
    for (dsgd::Experiment e : dsgd::all_experiments())
      std::cout << dsgd::to_string(e) << "\t" << dsgd::describe(e) << '\n';
    return 0;
  }
  if (!*run) {
    std::cerr << app.help();
    return 1;
  }

  dsgd::ExperimentConfig cfg;
  std::optional<dsgd::ProblemSpec> instance;
  try {
    const std::string text = read_file(input);
    if (fs::path(input).extension() == ".json") {
      auto loaded = dsgd::load_manifest(nlohmann::json::parse(text));
      cfg = std::move(loaded.config);
      instance = std::move(loaded.instance);
    } else {
      cfg = dsgd::parse_config(text);
    }
  } catch (const dsgd::ConfigError& e) {
    std::cerr << input << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  if (out_prefix) cfg.output = *out_prefix;
  if (seed) cfg.master_seed = *seed;

  try {
    const auto start = std::chrono::steady_clock::now();
    if (!instance) instance = dsgd::build_instance(cfg.problem);
    const dsgd::CsvTable table = dsgd::run_experiment(cfg, *instance, {threads});
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::string csv_path = cfg.output + "_results.csv";
    const std::string manifest_path = cfg.output + "_manifest.json";
    write_file(csv_path, table.render());
    write_file(manifest_path, dsgd::make_manifest(cfg, *instance, wall).dump(2) + "\n");
    std::cout << "wrote " << csv_path << " (" << table.size() << " rows) and " << manifest_path
              << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
