#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "mfbo/harness.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string token;
  std::stringstream stream(s);
  while (std::getline(stream, token, ',')) {
    if (!token.empty()) out.push_back(token);
  }
  return out;
}

mfbo::BetaSpec parse_beta(const std::string& token) {
  if (token == "adaptive") return {true, 0.0};
  try {
    std::size_t pos = 0;
    const double v = std::stod(token, &pos);
    if (pos != token.size() || v < 0.0) throw std::invalid_argument(token);
    return {false, v};
  } catch (const std::exception&) {
    throw mfbo::ConfigError("bad beta value: " + token + " (number or 'adaptive')");
  }
}

void apply_config_file(mfbo::ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw mfbo::ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw mfbo::ConfigError(std::string("config parse error: ") + e.what());
  }
  auto as_list = [](const nlohmann::json& v) {
    std::vector<std::string> out;
    if (v.is_array()) {
      for (const auto& e : v) out.push_back(e.is_string() ? e.get<std::string>() : e.dump());
    } else {
      out.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    }
    return out;
  };
  if (j.contains("problem")) cfg.problem = j["problem"].get<std::string>();
  if (j.contains("strategies")) cfg.strategies = as_list(j["strategies"]);
  if (j.contains("betas")) {
    cfg.betas.clear();
    for (const std::string& b : as_list(j["betas"])) cfg.betas.push_back(parse_beta(b));
  }
  if (j.contains("lambdas")) cfg.lambdas = j["lambdas"].get<std::vector<double>>();
  if (j.contains("seeds")) cfg.seeds = j["seeds"].get<int>();
  if (j.contains("iters")) cfg.iters = j["iters"].get<int>();
  if (j.contains("init_low")) cfg.n_low_init = j["init_low"].get<int>();
  if (j.contains("init_high")) cfg.n_high_init = j["init_high"].get<int>();
  if (j.contains("master_seed")) cfg.master_seed = j["master_seed"].get<std::uint64_t>();
  if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
  if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
  if (j.contains("fit_restarts")) cfg.fit_restarts = j["fit_restarts"].get<int>();
  if (j.contains("acq_restarts")) cfg.acq_restarts = j["acq_restarts"].get<int>();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-fidelity Bayesian optimization benchmark harness"};
  app.set_version_flag("--version", kVersion);

  bool list_problems = false;
  app.add_flag("--list-problems", list_problems, "List registered problems and exit");

  auto* run_cmd = app.add_subcommand("run", "Run a (strategy x beta x cost-ratio) x seeds sweep");
  std::string config_file, problem, strategy_list, beta_list, lambda_list, out_dir, emit_list;
  int seeds = -1, iters = -1, init_low = -1, init_high = -1, threads = -1;
  std::int64_t master_seed = -1;
  run_cmd->add_option("--config", config_file, "JSON config file (CLI flags override it)");
  run_cmd->add_option("--problem", problem, "Problem name (see --list-problems)");
  run_cmd->add_option("--strategy", strategy_list,
                      "Comma list of fidelity_weighted,mf_ucb,proximity,standard_bo");
  run_cmd->add_option("--beta", beta_list, "Comma list of beta values and/or 'adaptive'");
  run_cmd->add_option("--cost-ratio", lambda_list, "Comma list of cost ratios Lambda");
  run_cmd->add_option("--iters", iters, "BO iterations per run");
  run_cmd->add_option("--seeds", seeds, "Number of independent initializations");
  run_cmd->add_option("--init-low", init_low, "Initial low-fidelity samples (default by dimension)");
  run_cmd->add_option("--init-high", init_high, "Initial high-fidelity samples");
  run_cmd->add_option("--master-seed", master_seed, "Master seed for the whole sweep");
  run_cmd->add_option("--threads", threads, "Worker threads (default: hardware)");
  run_cmd->add_option("--out", out_dir, "Output directory for runs.csv / summary.csv");
  run_cmd->add_option("--emit", emit_list,
                      "Plot-data kinds to write: regret_curve,usage_box,hit_table (default all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (list_problems) {
    for (const std::string& name : mfbo::problem_names()) std::cout << name << '\n';
    return 0;
  }
  if (!run_cmd->parsed()) {
    std::cout << app.help();
    return 0;
  }

  try {
    mfbo::ExperimentConfig cfg;
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    if (!problem.empty()) cfg.problem = problem;
    if (!strategy_list.empty()) cfg.strategies = split_list(strategy_list);
    if (!beta_list.empty()) {
      cfg.betas.clear();
      for (const std::string& b : split_list(beta_list)) cfg.betas.push_back(parse_beta(b));
    }
    if (!lambda_list.empty()) {
      cfg.lambdas.clear();
      for (const std::string& l : split_list(lambda_list)) cfg.lambdas.push_back(std::stod(l));
    }
    if (seeds >= 0) cfg.seeds = seeds;
    if (iters >= 0) cfg.iters = iters;
    if (init_low >= 0) cfg.n_low_init = init_low;
    if (init_high >= 0) cfg.n_high_init = init_high;
    if (master_seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(master_seed);
    if (threads >= 0) cfg.threads = threads;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (cfg.out_dir.empty()) throw mfbo::ConfigError("an output directory is required (--out)");

    std::vector<mfbo::PlotKind> kinds;
    for (const std::string& k : emit_list.empty()
                                    ? std::vector<std::string>{"regret_curve", "usage_box",
                                                               "hit_table"}
                                    : split_list(emit_list)) {
      kinds.push_back(mfbo::parse_plot_kind(k));
    }

    const mfbo::SweepResult result = mfbo::run_sweep(cfg);

    namespace fs = std::filesystem;
    for (mfbo::PlotKind kind : kinds) {
      const char* name = kind == mfbo::PlotKind::kRegretCurve  ? "regret_curve.csv"
                         : kind == mfbo::PlotKind::kUsageBox   ? "usage_box.csv"
                                                               : "hit_table.csv";
      mfbo::emit_plot_data(result.summary, kind, (fs::path(cfg.out_dir) / name).string());
    }

    for (const mfbo::CellSummary& cell : result.summary.cells) {
      std::cout << cfg.problem << " " << cell.key.strategy << " beta=" << cell.key.beta.label()
                << " Lambda=" << cell.key.lambda << ": mean regret=" << cell.mean_final_regret
                << " hf usage=" << cell.usage.mean;
      if (!std::isnan(cell.hit_rate)) std::cout << " hit rate=" << cell.hit_rate;
      std::cout << '\n';
    }
    return 0;
  } catch (const mfbo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return 3;
  }
}
