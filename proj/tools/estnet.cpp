#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include <estnet/config.hpp>

namespace fs = std::filesystem;
using namespace estnet;

namespace {

enum Exit { Ok = 0, BadConfig = 2, Infeasible = 3, Diverged = 4 };

struct Options {
  std::string config, out = "out";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool plots = false, dry_run = false, timing = false;
};

void setup_logging() {
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* lv = std::getenv("END_LOG_LEVEL")) {
    auto l = spdlog::level::from_str(lv);
    if (l == spdlog::level::off && std::string(lv) != "off")
      spdlog::warn("END_LOG_LEVEL='{}' not recognized, keeping warn", lv);
    else
      spdlog::set_level(l);
  }
}

std::uint64_t seed_of(const json& cfg, const Options& o) { return o.seed ? *o.seed : cfg.value("seed", std::uint64_t(1)); }

Algorithm algorithm_of(const json& cfg) {
  return cfg.contains("algorithm") ? algorithm_from_string(cfg.at("algorithm").at("name").get<std::string>()) : Algorithm::None;
}

DesignCriterion criterion_of(const json& cfg) {
  return criterion_from_json(cfg.value("design", json()), default_criterion(algorithm_of(cfg)));
}

void write_file(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << s;
}

void write_trace(const fs::path& p, const RunTrace& t) {
  std::ostringstream os;
  write_csv(os, t);
  write_file(p, os.str());
}

// gnuplot script next to the CSV; column 1 is k.
void write_plot(const fs::path& csv, const RunTrace& t, const std::string& col) {
  const auto c = t.col(col) + 1;
  std::ostringstream os;
  os << "set datafile separator ','\nset logscale y\nset xlabel 'k'\nset ylabel '" << col << "'\n"
     << "set terminal pngcairo size 800,500\nset output '" << csv.stem().string() << ".png'\n"
     << "plot '" << csv.filename().string() << "' using 1:" << c << " skip 1 with lines title '" << col << "'\n";
  write_file(fs::path(csv).replace_extension(".gp"), os.str());
}

json layout_report(const std::vector<EndLayout>& Ls, const Instance& in, const ConnectivityMode& mode) {
  json r = json::object();
  json fam = json::array();
  for (std::size_t f = 0; f < Ls.size(); ++f) {
    const auto& L = Ls[f];
    std::vector<int> counts;
    for (int i = 1; i <= L.num_agents(); ++i) counts.push_back(int(L.held(i).size()));
    fam.push_back({{"family", in.families[f].name},
                   {"components", L.num_components()},
                   {"violations", to_json(validate(L, mode))},
                   {"cost_unicast", communication_cost(L, CostMode::Unicast)},
                   {"cost_broadcast", communication_cost(L, CostMode::Broadcast)},
                   {"estimates_per_agent", counts},
                   {"mean_estimate_size", mean_estimate_size(L)}});
  }
  r["families"] = fam;
  r["mean_estimate_size"] = mean_estimates(Ls);
  r["cost_unicast"] = total_cost(Ls, CostMode::Unicast);
  r["cost_broadcast"] = total_cost(Ls, CostMode::Broadcast);
  return r;
}

int cmd_design(const Options& o) {
  json cfg = load_json(o.config);
  const auto seed = seed_of(cfg, o);
  Instance in = build_instance(cfg.at("problem"), seed);
  auto crit = criterion_of(cfg);
  auto std_l = build_layouts(in, crit, false);
  std::vector<EndLayout> cus;
  try {
    cus = build_layouts(in, crit, true);
  } catch (const InfeasibleDesign& e) {
    std::cerr << "infeasible design: " << e.what() << "\n";
    if (e.component() > 0) std::cerr << "  component " << e.component() << "\n";
    return Infeasible;
  }
  if (o.dry_run) return Ok;
  const fs::path out(o.out);
  json lay = json::object();
  for (std::size_t f = 0; f < cus.size(); ++f) lay[in.families[f].name] = to_json(cus[f]);
  write_file(out / "layout.json", lay.dump(2) + "\n");
  json std_lay = json::object();
  for (std::size_t f = 0; f < std_l.size(); ++f) std_lay[in.families[f].name] = to_json(std_l[f]);
  write_file(out / "layout_standard.json", std_lay.dump(2) + "\n");
  write_file(out / "instance.json", in.dump.dump(2) + "\n");
  json report = {{"seed", seed},
                 {"customized", layout_report(cus, in, crit.connectivity)},
                 {"standard", layout_report(std_l, in, crit.connectivity)}};
  write_file(out / "report.json", report.dump(2) + "\n");
  if (o.plots)
    for (std::size_t f = 0; f < cus.size(); ++f)
      for (int p = 1; p <= cus[f].num_components(); ++p)
        write_file(out / "dot" / (in.families[f].name + "_" + std::to_string(p) + ".dot"),
                   to_dot(cus[f].design(p), in.families[f].name + "_" + std::to_string(p)));
  std::cout << "mean estimate size: customized " << format_double(mean_estimates(cus)) << ", standard "
            << format_double(mean_estimates(std_l)) << " (seed " << seed << ")\n";
  std::cout << "cost per round (unicast): customized " << total_cost(cus, CostMode::Unicast) << ", standard "
            << total_cost(std_l, CostMode::Unicast) << "\n";
  return Ok;
}

int cmd_validate(const Options& o) {
  json cfg = load_json(o.config);
  Instance in = build_instance(cfg.at("problem"), seed_of(cfg, o));
  auto crit = criterion_of(cfg);
  if (cfg.contains("algorithm")) algorithm_from_string(cfg.at("algorithm").at("name").get<std::string>());
  int bad = 0;
  if (cfg.contains("layout")) {
    json lj = load_json((fs::path(o.config).parent_path() / cfg.at("layout").get<std::string>()).string());
    for (const auto& f : in.families) {
      auto L = layout_from_json(lj.at(f.name));
      for (const auto& v : validate(L, crit.connectivity)) {
        std::cout << f.name << " component " << v.component << ": " << v.what << "\n";
        ++bad;
      }
    }
  } else {
    try {
      for (const auto& L : build_layouts(in, crit, true))
        for (const auto& v : validate(L, crit.connectivity)) std::cout << "component " << v.component << ": " << v.what << "\n", ++bad;
    } catch (const InfeasibleDesign& e) {
      std::cout << "infeasible: " << e.what() << "\n";
      return Infeasible;
    }
  }
  if (bad) return Infeasible;
  std::cout << "ok\n";
  return Ok;
}

std::vector<std::string> arms_of(const json& cfg) {
  const auto arm = cfg.value("arm", std::string("customized"));
  if (arm == "both") return {"standard", "customized"};
  if (arm != "standard" && arm != "customized") throw ConfigError("arm must be standard, customized or both");
  return {arm};
}

int cmd_run(const Options& o) {
  json cfg = load_json(o.config);
  if (!cfg.contains("algorithm")) throw ConfigError("run needs an algorithm block");
  const auto seed = seed_of(cfg, o);
  Instance in = build_instance(cfg.at("problem"), seed);
  auto crit = criterion_of(cfg);
  const auto arms = arms_of(cfg);
  if (o.dry_run) {
    for (const auto& arm : arms) build_layouts(in, crit, arm == "customized");
    std::cout << "config ok\n";
    return Ok;
  }
  const fs::path out(o.out);
  json all = json::object();
  bool diverged = false;
  for (const auto& arm : arms) {
    auto Ls = build_layouts(in, crit, arm == "customized");
    spdlog::info("running {} on the {} layout", cfg.at("algorithm").at("name").get<std::string>(), arm);
    auto r = run_algorithm(in, Ls, cfg.at("algorithm"), o.timing);
    fs::path csv = out / ("trace_" + arm + ".csv");
    write_trace(csv, r.trace);
    if (o.plots) write_plot(csv, r.trace, r.summary.at("final_merit_column").get<std::string>());
    r.summary["seed"] = seed;
    all[arm] = r.summary;
    diverged = diverged || r.trace.diverged;
    std::cout << arm << ": iterations " << r.trace.iterations << (r.trace.converged ? " (converged)" : "") << ", final "
              << r.summary.at("final_merit_column").get<std::string>() << " " << r.summary.at("final_merit").dump() << "\n";
  }
  write_file(out / "summary.json", all.dump(2) + "\n");
  if (diverged) {
    std::cerr << "solver diverged\n";
    return Diverged;
  }
  return Ok;
}

// Sweep cells run on a small thread pool; results land in a pre-sized table.
int cmd_experiment(const Options& o) {
  json cfg = load_json(o.config);
  if (!cfg.contains("algorithm")) throw ConfigError("experiment needs an algorithm block");
  std::vector<std::uint64_t> seeds = cfg.value("seeds", std::vector<std::uint64_t>{seed_of(cfg, o)});
  if (o.seed) seeds = {*o.seed};
  std::string key;
  std::vector<json> values{json()};
  if (cfg.contains("sweep")) {
    key = cfg.at("sweep").at("key").get<std::string>();
    values = cfg.at("sweep").at("values").get<std::vector<json>>();
  }
  struct Cell {
    std::uint64_t seed;
    json value;
    std::string arm;
    json summary;
    std::string error;
  };
  std::vector<Cell> cells;
  for (const auto& v : values)
    for (auto s : seeds)
      for (const char* arm : {"standard", "customized"}) cells.push_back({s, v, arm, json(), ""});
  auto crit = criterion_of(cfg);
  if (o.dry_run) {
    std::cout << cells.size() << " cells\n";
    return Ok;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c; (c = next++) < cells.size();) {
      auto& cell = cells[c];
      try {
        json p = cfg.at("problem");
        if (!key.empty()) p[key] = cell.value;
        Instance in = build_instance(p, cell.seed);
        auto Ls = build_layouts(in, crit, cell.arm == "customized");
        cell.summary = run_algorithm(in, Ls, cfg.at("algorithm"), o.timing).summary;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 0; j < std::max(1, o.jobs); ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::vector<std::string> head{"seed", key.empty() ? "cell" : key, "arm", "iterations", "converged", "wall_s", "unicast_cost", "broadcast_cost",
                                "unicast_cost_per_iteration", "estimates_per_agent", "final_merit", "error"};
  std::ostringstream os;
  write_csv_row(os, head);
  int failures = 0;
  for (const auto& c : cells) {
    const json& s = c.summary;
    auto num = [&](const char* k) { return s.contains(k) ? (s[k].is_number() ? format_double(s[k].get<double>()) : s[k].get<std::string>()) : ""; };
    if (!c.error.empty()) ++failures, spdlog::error("seed {} {}: {}", c.seed, c.arm, c.error);
    write_csv_row(os, {std::to_string(c.seed), c.value.is_null() ? "" : c.value.dump(), c.arm, num("iterations"),
                       s.contains("converged") ? (s["converged"].get<bool>() ? "1" : "0") : "", s.contains("wall_ns") ? format_double(s["wall_ns"].get<double>() / 1e9) : "",
                       num("total_cost_unicast"), num("total_cost_broadcast"), num("cost_per_iteration_unicast"), num("mean_estimate_size"),
                       num("final_merit"), c.error});
  }
  const fs::path out(o.out);
  write_file(out / "experiment.csv", os.str());
  std::cout << cells.size() << " cells written to " << (out / "experiment.csv").string() << "\n";
  return failures ? BadConfig : Ok;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Estimation network design: layouts and distributed solvers"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* c) {
    c->add_option("--config", o.config, "config file (JSON)")->required();
    c->add_option("--seed", o.seed, "override the config seed");
    c->add_option("--out", o.out, "output directory");
    c->add_option("--jobs", o.jobs, "worker threads for sweeps");
    c->add_flag("--emit-plots", o.plots, "write gnuplot scripts / dot files next to outputs");
    c->add_flag("--dry-run", o.dry_run, "validate the config only");
    c->add_flag("--timing", o.timing, "record wall time (outputs stop being byte-reproducible)");
  };
  auto* design = app.add_subcommand("design", "build standard and customized layouts");
  auto* run = app.add_subcommand("run", "run one algorithm");
  auto* experiment = app.add_subcommand("experiment", "standard vs customized sweep");
  auto* val = app.add_subcommand("validate", "check a config (and layout) against the criterion");
  for (auto* c : {design, run, experiment, val}) add_common(c);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : BadConfig;
  }
  try {
    if (*design) return cmd_design(o);
    if (*run) return cmd_run(o);
    if (*experiment) return cmd_experiment(o);
    return cmd_validate(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return BadConfig;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return BadConfig;
  } catch (const InfeasibleDesign& e) {
    std::cerr << "infeasible design: " << e.what() << "\n";
    return Infeasible;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return BadConfig;
  } catch (const PreconditionError& e) {
    std::cerr << "precondition failed: " << e.what() << "\n";
    return BadConfig;
  }
}
