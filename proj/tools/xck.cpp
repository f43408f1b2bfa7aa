// xck — command-line front end for the charge-exchange kinetics library.
//
// Exit codes:
//   0  run completed and every enabled check passed
//   1  run completed but at least one check failed
//   2  configuration problem (bad flags, bad config file, infeasible model)
//   3  runtime failure during an otherwise valid run

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "xck/scenario.hpp"

namespace {

struct Options {
  std::string subcommand;
  std::filesystem::path config;
  std::filesystem::path out;
  int threads = 1;
};

int resolve_threads(int cli_threads) {
  // The environment variable takes precedence over the command-line flag.
  if (const char* env = std::getenv("XCK_THREADS")) {
    std::size_t pos = 0;
    int parsed = 0;
    try {
      parsed = std::stoi(env, &pos);
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string("XCK_THREADS is not an integer: ") + env);
    }
    if (pos != std::string(env).size() || parsed < 1) {
      throw std::invalid_argument(std::string("XCK_THREADS must be a positive integer: ") + env);
    }
    return parsed;
  }
  return cli_threads < 1 ? 1 : cli_threads;
}

std::filesystem::path default_out_dir(const std::string& subcommand,
                                      const std::string& seed) {
  return std::filesystem::path("runs") /
         (subcommand + "-" + xck::fnv1a64_hex(seed).substr(0, 8));
}

void print_result(const xck::RunResult& res) {
  for (const std::string& w : res.warnings) {
    std::cout << "warning: " << w << "\n";
  }
  for (const xck::CheckRow& c : res.checks) {
    std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name
              << "  value=" << xck::format_double(c.value);
    if (c.tolerance > 0.0) {
      std::cout << "  tol=" << xck::format_double(c.tolerance);
    }
    std::cout << "\n";
  }
  std::cout << (res.ok() ? "result: pass" : "result: fail")
            << "  (outputs in " << res.out_dir.string() << ")\n";
}

// entropy-report accepts the run directory itself, its manifest.json, or a
// small JSON config {"schema_version": 1, "run": "<dir>"}.
std::filesystem::path resolve_run_dir(const std::filesystem::path& config) {
  namespace fs = std::filesystem;
  if (fs::is_directory(config)) return config;
  if (config.filename() == "manifest.json") return config.parent_path();
  std::ifstream in(config);
  if (!in) {
    throw std::invalid_argument("cannot open config file: " + config.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object() || !j.contains("run")) {
    throw std::invalid_argument(
        "entropy-report config needs a \"run\" key with the run directory");
  }
  if (j.contains("schema_version") &&
      j.at("schema_version").get<int>() != xck::kSchemaVersion) {
    throw std::invalid_argument("unsupported schema_version");
  }
  fs::path run = j.at("run").get<std::string>();
  if (!run.is_absolute() && config.has_parent_path()) {
    run = config.parent_path() / run;
  }
  return run;
}

int run(const Options& opt) {
  const int threads = resolve_threads(opt.threads);

  xck::RunResult res;
  if (opt.subcommand == "entropy-report") {
    const std::filesystem::path run_dir = resolve_run_dir(opt.config);
    const std::filesystem::path out =
        opt.out.empty() ? default_out_dir(opt.subcommand, run_dir.string())
                        : opt.out;
    res = xck::run_entropy_report(run_dir, out);
  } else {
    std::ifstream in(opt.config);
    if (!in) {
      throw std::invalid_argument("cannot open config file: " +
                                  opt.config.string());
    }
    nlohmann::json config_json;
    try {
      in >> config_json;
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(std::string("config parse error: ") +
                                  e.what());
    }
    const xck::ScenarioConfig cfg = xck::ScenarioConfig::parse(
        config_json, opt.config.has_parent_path() ? opt.config.parent_path()
                                                  : std::filesystem::path("."));
    const std::filesystem::path out =
        opt.out.empty() ? default_out_dir(opt.subcommand, config_json.dump())
                        : opt.out;
    if (opt.subcommand == "simulate") {
      res = xck::run_simulate(cfg, config_json, out);
    } else if (opt.subcommand == "equilibrium") {
      res = xck::run_equilibrium(cfg, config_json, out);
    } else if (opt.subcommand == "validate-kernel") {
      res = xck::run_validate_kernel(cfg, config_json, out);
    } else if (opt.subcommand == "stability") {
      res = xck::run_stability(cfg, config_json, out, threads);
    } else if (opt.subcommand == "heat-oracle") {
      res = xck::run_heat_oracle(cfg, config_json, out);
    } else {
      throw std::invalid_argument("unknown subcommand: " + opt.subcommand);
    }
  }

  print_result(res);
  return res.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"charge-exchange kinetics on the integer lattice"};
  app.require_subcommand(1);

  Options opt;
  for (const char* name : {"simulate", "equilibrium", "validate-kernel",
                           "entropy-report", "heat-oracle", "stability"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config, "scenario config (JSON)")
        ->required();
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--threads", opt.threads,
                    "worker threads (XCK_THREADS overrides)");
    sub->callback([&opt, name] { opt.subcommand = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    return run(opt);
  } catch (const xck::FamilyError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const xck::SupercriticalError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::logic_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 3;
  }
}
