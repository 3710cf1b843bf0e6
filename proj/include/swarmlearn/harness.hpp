#pragma once

// Experiment commands behind the CLI: train, evaluate, transfer, ablate,
// interpret. Each reads a typed config, writes its outputs and the resolved
// configuration into an output directory, and is deterministic per seed.

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "swarmlearn/baselines.hpp"
#include "swarmlearn/checkpoint.hpp"
#include "swarmlearn/config.hpp"
#include "swarmlearn/parallel.hpp"
#include "swarmlearn/report.hpp"
#include "swarmlearn/stats.hpp"
#include "swarmlearn/training.hpp"

namespace swarmlearn {

namespace fs = std::filesystem;

/// What every command receives besides its config.
struct CommandContext {
  fs::path out_dir;
  fs::path base_dir;  // relative paths in the config resolve against this
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

inline std::size_t default_particles(std::size_t n) { return n == 2 ? 4 : 10; }

// ---------------------------------------------------------------------------
// Evaluation protocol shared by evaluate, transfer and ablate.

struct EvalProtocol {
  Family family = Family::quadratic;
  double alpha = 10.0;
  std::size_t n = 2;
  bool canonical = false;  // single canonical Rastrigin instead of a sampled battery
  std::size_t test_size = 128;
  std::size_t repeats = 100;
  std::size_t budget = 1000;
  std::size_t report_every = 50;
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  void validate() const {
    if (budget < 1 || repeats < 1 || test_size < 1) {
      throw config_error("budget, repeats and test_size must all be at least 1");
    }
    if (report_every < 1 || budget % report_every != 0) {
      throw config_error("budget (" + std::to_string(budget) + ") must be a multiple of report_every (" +
                         std::to_string(report_every) + ")");
    }
  }

  std::vector<FunctionInstance> battery() const {
    if (canonical) return {canonical_rastrigin(n)};
    const SearchSpace space = SearchSpace::box(n);
    std::vector<FunctionInstance> out;
    for (std::size_t q = 0; q < test_size; ++q) out.push_back(sample_instance(family, space, derive_seed(seed, {10, q}), alpha));
    return out;
  }

  std::uint64_t run_seed(std::size_t repeat, std::size_t q) const { return derive_seed(seed, {11, repeat, q}); }
};

/// Runs one method on one instance from one seed.
using MethodRunner = std::function<Curve(const FunctionInstance&, std::uint64_t)>;

struct Method {
  std::string name;
  MethodRunner run;
};

struct MethodResult {
  std::string name;
  Matrix repeat_curves;             // (repeats x budget), battery-averaged best-so-far
  std::vector<double> final_values;  // per repeat
};

inline MethodResult evaluate_method(const Method& m, const EvalProtocol& p,
                                    const std::vector<FunctionInstance>& battery) {
  MethodResult r;
  r.name = m.name;
  r.repeat_curves = Matrix(p.repeats, p.budget);
  parallel_for(p.repeats, p.threads, [&](std::size_t rep) {
    std::vector<double> acc(p.budget, 0.0);
    for (std::size_t q = 0; q < battery.size(); ++q) {
      const Curve c = m.run(battery[q], p.run_seed(rep, q));
      for (std::size_t e = 0; e < p.budget; ++e) acc[e] += c.best[e];
    }
    for (std::size_t e = 0; e < p.budget; ++e) {
      r.repeat_curves(rep, e) = acc[e] / static_cast<double>(battery.size());
    }
  });
  for (std::size_t rep = 0; rep < p.repeats; ++rep) r.final_values.push_back(r.repeat_curves(rep, p.budget - 1));
  return r;
}

inline std::vector<ResultRow> result_rows(const MethodResult& r, const EvalProtocol& p, std::size_t k) {
  std::vector<ResultRow> rows;
  for (std::size_t e = p.report_every; e <= p.budget; e += p.report_every) {
    std::vector<double> v(p.repeats);
    for (std::size_t rep = 0; rep < p.repeats; ++rep) v[rep] = r.repeat_curves(rep, e - 1);
    rows.push_back({r.name, e, stats::mean(v), stats::stddev(v), p.n, k, std::to_string(p.seed)});
  }
  return rows;
}

inline svg::Series mean_series(const MethodResult& r, const EvalProtocol& p) {
  svg::Series s{r.name, {}, {}};
  for (std::size_t e = p.report_every; e <= p.budget; e += p.report_every) {
    double acc = 0.0;
    for (std::size_t rep = 0; rep < p.repeats; ++rep) acc += r.repeat_curves(rep, e - 1);
    s.x.push_back(static_cast<double>(e));
    s.y.push_back(acc / static_cast<double>(p.repeats));
  }
  return s;
}

inline std::vector<double> start_point(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return SearchSpace::box(n).sample_uniform(rng);
}

inline Method gd_method(double lr, std::size_t budget) {
  return {"gd", [=](const FunctionInstance& f, std::uint64_t s) { return run_gd(f, start_point(f.dim(), s), lr, budget); }};
}
inline Method sgd_method(double lr, std::size_t budget) {
  return {"sgd", [=](const FunctionInstance& f, std::uint64_t s) { return run_sgd(f, start_point(f.dim(), s), lr, budget); }};
}
inline Method adam_method(double lr, std::size_t budget) {
  return {"adam",
          [=](const FunctionInstance& f, std::uint64_t s) { return run_adam(f, start_point(f.dim(), s), lr, budget); }};
}
inline Method pso_method(std::size_t k, std::size_t budget) {
  return {"pso", [=](const FunctionInstance& f, std::uint64_t s) { return run_pso(f, k, budget, s); }};
}
inline Method meta_method(std::string name, MetaParams params, std::size_t k, std::size_t budget) {
  if (params.config.n == 0) throw config_error("meta method needs a trained model");
  return {std::move(name),
          [params = std::move(params), k, budget](const FunctionInstance& f, std::uint64_t s) {
            return run_meta(f, params, k, budget, s);
          }};
}
inline Method ablation_method(AblationLevel level, Checkpoint ck, std::size_t k, std::size_t budget) {
  check_level(ck, level);
  return {to_string(level), [level, ck = std::move(ck), k, budget](const FunctionInstance& f, std::uint64_t s) {
            return run_ablation(level, ck, f, k, budget, s);
          }};
}

struct TuningResult {
  double best_lr = 0.0;
  std::vector<std::pair<double, double>> scores;  // (lr, mean final value)
};

/// Picks the step size with the lowest mean final value on a validation
/// battery drawn from seeds disjoint from the test battery.
inline TuningResult tune_step_size(const std::vector<double>& grid,
                                   const std::function<Method(double)>& make, EvalProtocol p) {
  if (grid.empty()) throw config_error("step-size grid is empty");
  p.seed = derive_seed(p.seed, {20});
  p.repeats = 1;
  const std::vector<FunctionInstance> battery = p.battery();
  TuningResult t;
  double best = INFINITY;
  for (double lr : grid) {
    const MethodResult r = evaluate_method(make(lr), p, battery);
    const double v = r.final_values.front();
    t.scores.push_back({lr, v});
    if (v < best) best = v, t.best_lr = lr;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Config plumbing.

namespace detail {

inline fs::path resolve(const CommandContext& ctx, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : ctx.base_dir / path;
}

inline std::uint64_t command_seed(Config& cfg, const CommandContext& ctx) {
  const std::uint64_t from_file = cfg.get_u64("seed", 1);
  if (!ctx.seed) return from_file;
  cfg.override_u64("seed", *ctx.seed);
  return *ctx.seed;
}

inline EvalProtocol read_protocol(Config& cfg, const CommandContext& ctx, Family default_family,
                                  std::size_t default_n, bool default_canonical) {
  EvalProtocol p;
  p.family = parse_family(cfg.get_string("family", to_string(default_family)));
  p.n = cfg.get_count("n", default_n, 1);
  p.alpha = cfg.get_real("alpha", 10.0);
  const std::string protocol = cfg.get_string("protocol", default_canonical ? "canonical" : "battery");
  if (protocol != "battery" && protocol != "canonical") {
    throw config_error("protocol must be 'battery' or 'canonical', got '" + protocol + "'");
  }
  p.canonical = protocol == "canonical";
  p.test_size = cfg.get_count("test_size", 128, 1);
  p.repeats = cfg.get_count("repeats", 100, 1);
  p.budget = cfg.get_count("budget", 1000, 1);
  p.report_every = cfg.get_count("report_every", 50, 1);
  p.seed = command_seed(cfg, ctx);
  p.threads = ctx.threads;
  p.validate();
  return p;
}

inline Checkpoint read_checkpoint(const CommandContext& ctx, const std::string& key, const std::string& path) {
  if (path.empty()) throw config_error("missing checkpoint: key '" + key + "' is not set");
  const fs::path full = resolve(ctx, path);
  if (!fs::exists(full)) throw config_error("missing checkpoint for '" + key + "': " + full.string());
  return load_checkpoint(full);
}

inline void finish(const Config& cfg, const CommandContext& ctx) {
  write_file(ctx.out_dir / "resolved-config", cfg.resolved_text());
}

inline void write_results(const CommandContext& ctx, const std::vector<MethodResult>& results,
                          const EvalProtocol& p, std::size_t k, const std::string& title) {
  std::vector<ResultRow> rows;
  std::vector<svg::Series> series;
  for (const MethodResult& r : results) {
    const auto rr = result_rows(r, p, k);
    rows.insert(rows.end(), rr.begin(), rr.end());
    series.push_back(mean_series(r, p));
  }
  write_file(ctx.out_dir / "results.csv", to_csv(rows));
  write_file(ctx.out_dir / "curves.svg",
             svg::line_plot(title, "function evaluations", "mean best f", std::move(series), true));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands.

inline TrainConfig read_train_config(Config& cfg, const CommandContext& ctx) {
  TrainConfig c;
  c.family = parse_family(cfg.get_string("family", "quadratic"));
  c.alpha = cfg.get_real("alpha", 10.0);
  c.n = cfg.get_count("n", 2, 1);
  c.k = cfg.get_count("k", default_particles(c.n), 1);
  c.iterations = cfg.get_count("iterations", 40, 1);
  c.window = cfg.get_count("window", 20, 1);
  c.epochs = cfg.get_count("epochs", 300);
  c.batch = cfg.get_count("batch", 8, 1);
  c.level = parse_level(cfg.get_string("level", "proposed"));
  c.lambda = cfg.get_real("lambda", 1.0);
  c.loss.l2 = cfg.get_real("l2", 1e-4);
  c.loss.noise = cfg.get_real("kriging_noise", 2.1);
  c.loss.length_scale = cfg.get_real("kriging_length_scale", 1.0);
  c.loss.rho0 = cfg.get_real("rho0", 1.0);
  c.loss.mc_samples = cfg.get_count("mc_samples", 1000, 100);
  c.loss.max_points = cfg.get_count("max_kriging_points", 512, 1);
  c.adam.lr = cfg.get_real("lr", 1e-3);
  c.adam.beta1 = cfg.get_real("beta1", 0.9);
  c.adam.beta2 = cfg.get_real("beta2", 0.999);
  c.adam.eps = cfg.get_real("adam_eps", 1e-8);
  c.clip_norm = cfg.get_real("clip_norm", 5.0);
  c.model.hidden = cfg.get_count("hidden", 20, 1);
  c.model.step_scale = cfg.get_real("step_scale", 0.1);
  c.model.gamma = cfg.get_real("gamma", 1.0);
  c.model.length_scale = cfg.get_real("attention_length_scale", 1.0);
  c.model.swarm.momentum_decay = cfg.get_real("momentum_decay", 0.9);
  c.model.swarm.attraction_scale = cfg.get_real("attraction_scale", 1.0);
  c.seed = detail::command_seed(cfg, ctx);
  c.threads = ctx.threads;
  c.validate();
  return c;
}

inline constexpr const char* train_log_header = "epoch,mean_regret,mean_entropy,loss,grad_norm,wall_ms\n";

inline std::string train_log_line(const TrainLogRow& r) {
  using detail::format_real;
  return std::to_string(r.epoch) + "," + format_real(r.mean_regret) + "," + format_real(r.mean_entropy) + "," +
         format_real(r.loss) + "," + format_real(r.grad_norm) + "," + format_real(r.wall_ms) + "\n";
}

/// Writes checkpoint.txt, train_log.csv, events.log, loss.svg. An existing
/// checkpoint in the output directory is resumed.
inline void cmd_train(Config& cfg, const CommandContext& ctx) {
  const TrainConfig c = read_train_config(cfg, ctx);
  const bool wall_time = cfg.get_bool("log_wall_time", false);
  cfg.check_unused();
  fs::create_directories(ctx.out_dir);
  const fs::path ck_path = ctx.out_dir / "checkpoint.txt";
  const fs::path log_path = ctx.out_dir / "train_log.csv";
  const fs::path events_path = ctx.out_dir / "events.log";
  std::optional<Checkpoint> resume;
  if (fs::exists(ck_path)) {
    resume = load_checkpoint(ck_path);
    if (resume->level != c.level) {
      throw config_error("checkpoint in " + ctx.out_dir.string() + " was trained at level " +
                         to_string(resume->level) + ", config asks for " + to_string(c.level));
    }
  }
  if (!resume || !fs::exists(log_path)) {
    write_file(log_path, train_log_header);
    write_file(events_path, "");
  }
  if (!resume) save_checkpoint(initial_checkpoint(c), ck_path);
  std::ofstream log(log_path, std::ios::app | std::ios::binary);
  std::ofstream events(events_path, std::ios::app | std::ios::binary);
  train(c, resume,
        [&](const TrainLogRow& row, const Checkpoint& ck) {
          log << train_log_line(row) << std::flush;
          if (row.clipped) {
            events << "epoch " << row.epoch << ": gradient clipped to norm " << detail::format_real(c.clip_norm)
                   << " in " << row.clipped << " window(s)\n";
          }
          if (row.skipped) events << "epoch " << row.epoch << ": " << row.skipped << " update(s) skipped, non-finite gradient\n";
          events.flush();
          save_checkpoint(ck, ck_path);
        },
        wall_time);
  log.close();

  svg::Series loss{"loss", {}, {}}, regret{"mean regret", {}, {}};
  std::ifstream in(log_path);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(detail::parse_real(cell));
    if (v.size() < 4) continue;
    loss.x.push_back(v[0]);
    loss.y.push_back(v[3]);
    regret.x.push_back(v[0]);
    regret.y.push_back(v[1]);
  }
  write_file(ctx.out_dir / "loss.svg", svg::line_plot("training", "epoch", "value", {loss, regret}, true));
  detail::finish(cfg, ctx);
}

/// Mean and spread of best-so-far for meta-optimizer and baselines.
inline void cmd_evaluate(Config& cfg, const CommandContext& ctx) {
  const EvalProtocol p = detail::read_protocol(cfg, ctx, Family::quadratic, 2, false);
  const std::size_t k = cfg.get_count("k", default_particles(p.n), 1);
  const std::vector<std::string> methods = cfg.get_list("methods", {"meta", "gd", "adam", "pso"});
  const std::string ck_path = cfg.get_string("checkpoint", "");
  double gd_lr = cfg.get_real("gd_lr", 0.01);
  double adam_lr = cfg.get_real("adam_lr", 0.1);
  const std::vector<double> gd_grid = cfg.get_real_list("gd_lr_grid", {});
  const std::vector<double> adam_grid = cfg.get_real_list("adam_lr_grid", {});
  const std::size_t tune_size = cfg.get_count("tune_size", 32, 1);
  cfg.check_unused();
  if (methods.empty()) throw config_error("methods list is empty");
  fs::create_directories(ctx.out_dir);

  std::string tuning = "method,lr,mean_final_f,chosen\n";
  EvalProtocol tune_p = p;
  tune_p.test_size = tune_size;
  auto tune = [&](const char* name, const std::vector<double>& grid, double& lr,
                  const std::function<Method(double)>& make) {
    if (grid.empty()) return;
    const TuningResult t = tune_step_size(grid, make, tune_p);
    lr = t.best_lr;
    for (const auto& [g, v] : t.scores) {
      tuning += std::string(name) + "," + detail::format_real(g) + "," + detail::format_real(v) + "," +
                (g == lr ? "1" : "0") + "\n";
    }
  };
  const bool wants_gd = std::count(methods.begin(), methods.end(), "gd") + std::count(methods.begin(), methods.end(), "sgd") > 0;
  if (wants_gd) tune("gd", gd_grid, gd_lr, [&](double lr) { return gd_method(lr, p.budget); });
  if (std::count(methods.begin(), methods.end(), "adam")) {
    tune("adam", adam_grid, adam_lr, [&](double lr) { return adam_method(lr, p.budget); });
  }
  if (!gd_grid.empty() || !adam_grid.empty()) write_file(ctx.out_dir / "tuning.csv", tuning);

  std::vector<Method> ms;
  for (const std::string& m : methods) {
    if (m == "meta") ms.push_back(meta_method("meta", detail::read_checkpoint(ctx, "checkpoint", ck_path).params, k, p.budget));
    else if (m == "gd") ms.push_back(gd_method(gd_lr, p.budget));
    else if (m == "sgd") ms.push_back(sgd_method(gd_lr, p.budget));
    else if (m == "adam") ms.push_back(adam_method(adam_lr, p.budget));
    else if (m == "pso") ms.push_back(pso_method(k, p.budget));
    else throw config_error("unknown method '" + m + "' (expected meta, gd, sgd, adam, pso)");
  }
  const std::vector<FunctionInstance> battery = p.battery();
  std::vector<MethodResult> results;
  for (const Method& m : ms) results.push_back(evaluate_method(m, p, battery));
  detail::write_results(ctx, results, p, k, to_string(p.family) + " n=" + std::to_string(p.n));
  detail::finish(cfg, ctx);
}

/// One curve group per training-alpha checkpoint on canonical Rastrigin.
inline void cmd_transfer(Config& cfg, const CommandContext& ctx) {
  const EvalProtocol p = detail::read_protocol(cfg, ctx, Family::rastrigin_family, 10, true);
  const std::size_t k = cfg.get_count("k", default_particles(p.n), 1);
  const std::vector<std::string> paths = cfg.get_list("checkpoints", {});
  cfg.check_unused();
  if (paths.empty()) throw config_error("missing checkpoint: 'checkpoints' lists no files");
  fs::create_directories(ctx.out_dir);
  const std::vector<FunctionInstance> battery = p.battery();
  std::vector<MethodResult> results;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const Checkpoint ck = detail::read_checkpoint(ctx, "checkpoints[" + std::to_string(i) + "]", paths[i]);
    const std::string name = "alpha=" + detail::format_real(ck.alpha);
    results.push_back(evaluate_method(meta_method(name, ck.params, k, p.budget), p, battery));
  }
  detail::write_results(ctx, results, p, k, "transfer to canonical Rastrigin n=" + std::to_string(p.n));
  std::string finals = "method,mean_final_f,std_final_f\n";
  for (const MethodResult& r : results) {
    finals += r.name + "," + detail::format_real(stats::mean(r.final_values)) + "," +
              detail::format_real(stats::stddev(r.final_values)) + "\n";
  }
  write_file(ctx.out_dir / "final.csv", finals);
  detail::finish(cfg, ctx);
}

/// The ablation ladder plus a rank test of B1 against B0.
inline void cmd_ablate(Config& cfg, const CommandContext& ctx) {
  const EvalProtocol p = detail::read_protocol(cfg, ctx, Family::rastrigin_family, 10, true);
  const std::size_t k = cfg.get_count("k", default_particles(p.n), 1);
  const std::vector<std::string> levels = cfg.get_list("levels", {"B0", "B1", "B2", "B3", "proposed"});
  std::map<AblationLevel, std::string> paths;
  paths[AblationLevel::b0] = cfg.get_string("checkpoint_b0", "");
  paths[AblationLevel::b2] = cfg.get_string("checkpoint_b2", "");
  paths[AblationLevel::b3] = cfg.get_string("checkpoint_b3", "");
  paths[AblationLevel::proposed] = cfg.get_string("checkpoint_proposed", "");
  cfg.check_unused();
  fs::create_directories(ctx.out_dir);
  const std::vector<FunctionInstance> battery = p.battery();
  std::vector<MethodResult> results;
  std::map<AblationLevel, std::size_t> index;
  for (const std::string& l : levels) {
    const AblationLevel level = parse_level(l);
    const AblationLevel trained = level == AblationLevel::b1 ? AblationLevel::b0 : level;
    std::string key = "checkpoint_" + to_string(trained);
    for (char& ch : key) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    const Checkpoint ck = detail::read_checkpoint(ctx, key, paths[trained]);
    index[level] = results.size();
    results.push_back(evaluate_method(ablation_method(level, ck, k, p.budget), p, battery));
  }
  detail::write_results(ctx, results, p, k, "ablation n=" + std::to_string(p.n));
  std::string summary = "method,mean_final_f,std_final_f\n";
  for (const MethodResult& r : results) {
    summary += r.name + "," + detail::format_real(stats::mean(r.final_values)) + "," +
               detail::format_real(stats::stddev(r.final_values)) + "\n";
  }
  write_file(ctx.out_dir / "final.csv", summary);
  if (index.count(AblationLevel::b0) && index.count(AblationLevel::b1)) {
    const stats::RankTest t =
        stats::mann_whitney(results[index[AblationLevel::b1]].final_values, results[index[AblationLevel::b0]].final_values);
    write_file(ctx.out_dir / "rank_test.csv", "comparison,u,z,p_value\nB1_vs_B0," + detail::format_real(t.u) + "," +
                                                   detail::format_real(t.z) + "," + detail::format_real(t.p) + "\n");
  }
  detail::finish(cfg, ctx);
}

/// Feature-weight and trace-share series of one rollout, plus 2D paths of
/// the first samples of the meta-optimizer, PSO and GD.
inline void cmd_interpret(Config& cfg, const CommandContext& ctx) {
  const std::string ck_path = cfg.get_string("checkpoint", "");
  const std::string instance = cfg.get_string("instance", "canonical");
  const std::uint64_t seed = detail::command_seed(cfg, ctx);
  const std::uint64_t instance_seed = cfg.get_u64("instance_seed", 1);
  const double alpha = cfg.get_real("alpha", 10.0);
  const std::size_t iterations = cfg.get_count("iterations", 20, 1);
  const bool paths = cfg.get_bool("paths", true);
  const std::size_t path_samples = cfg.get_count("path_samples", 80, 1);
  const double gd_lr = cfg.get_real("gd_lr", 0.01);
  const Checkpoint ck = detail::read_checkpoint(ctx, "checkpoint", ck_path);
  const std::size_t n = ck.params.config.n;
  const std::size_t k = cfg.get_count("k", default_particles(n), 1);
  cfg.check_unused();
  if (paths && n != 2) {
    throw config_error("path plot needs a 2-dimensional model, checkpoint has n = " + std::to_string(n));
  }
  const SearchSpace space = SearchSpace::box(n);
  const FunctionInstance inst = instance == "canonical" ? canonical_rastrigin(n)
                                                        : sample_instance(parse_family(instance), space, instance_seed, alpha);
  fs::create_directories(ctx.out_dir);

  const std::size_t run_iters = std::max(iterations, paths ? (path_samples + k - 1) / k : 0);
  const TrajectoryRecord rec = rollout(inst, ck.params, k, run_iters, seed);
  const Matrix fw = rec.normalized_feature_weights();
  std::string fw_csv = "iteration,gradient,momentum,velocity,attraction\n";
  std::string ts_csv = "iteration,trace_share,off_diagonal_share\n";
  svg::Series fs_series[4];
  svg::Series ts_series{"trace share", {}, {}};
  for (std::size_t t = 0; t < iterations; ++t) {
    fw_csv += std::to_string(t + 1);
    for (std::size_t r = 0; r < 4; ++r) {
      fw_csv += "," + detail::format_real(fw(t, r));
      fs_series[r].label = feature_names[r];
      fs_series[r].x.push_back(static_cast<double>(t + 1));
      fs_series[r].y.push_back(fw(t, r));
    }
    fw_csv += "\n";
    ts_csv += std::to_string(t + 1) + "," + detail::format_real(rec.iterations[t].trace_share) + "," +
              detail::format_real(rec.iterations[t].off_trace_share) + "\n";
    ts_series.x.push_back(static_cast<double>(t + 1));
    ts_series.y.push_back(rec.iterations[t].trace_share);
  }
  write_file(ctx.out_dir / "feature_weights.csv", fw_csv);
  write_file(ctx.out_dir / "trace_share.csv", ts_csv);
  write_file(ctx.out_dir / "feature_weights.svg",
             svg::line_plot("feature attention", "iteration", "share",
                            {fs_series[0], fs_series[1], fs_series[2], fs_series[3]}, false));
  write_file(ctx.out_dir / "trace_share.svg", svg::line_plot("self impact", "iteration", "trace share", {ts_series}, false));

  double early_pop = 0.0, mean_ts = 0.0;
  const std::size_t early = std::min<std::size_t>(6, iterations);
  for (std::size_t t = 0; t < early; ++t) early_pop += (fw(t, 2) + fw(t, 3)) / static_cast<double>(early);
  for (std::size_t t = 0; t < iterations; ++t) mean_ts += rec.iterations[t].trace_share / static_cast<double>(iterations);
  write_file(ctx.out_dir / "observations.txt",
             "mean trace share over " + std::to_string(iterations) + " iterations: " + detail::format_real(mean_ts) +
                 "\npopulation feature share (velocity + attraction) over the first " + std::to_string(early) +
                 " iterations: " + detail::format_real(early_pop) + "\n");

  if (paths) {
    PathTrace pso_trace, gd_trace;
    run_pso(inst, k, path_samples, derive_seed(seed, {30}), {}, &pso_trace);
    run_gd(inst, start_point(n, derive_seed(seed, {31})), gd_lr, path_samples, &gd_trace);
    std::string csv = "method,sample,x1,x2,f\n";
    std::vector<svg::Series> series;
    auto emit = [&](const std::string& name, const std::vector<Sample>& samples) {
      svg::Series s{name, {}, {}};
      for (std::size_t i = 0; i < samples.size() && i < path_samples; ++i) {
        csv += name + "," + std::to_string(i + 1) + "," + detail::format_real(samples[i].x[0]) + "," +
               detail::format_real(samples[i].x[1]) + "," + detail::format_real(samples[i].f) + "\n";
        s.x.push_back(samples[i].x[0]);
        s.y.push_back(samples[i].x[1]);
      }
      series.push_back(std::move(s));
    };
    emit("meta", rec.samples);
    emit("pso", pso_trace);
    emit("gd", gd_trace);
    write_file(ctx.out_dir / "paths.csv", csv);
    write_file(ctx.out_dir / "paths.svg", svg::path_plot("first samples", series, space.lo[0], space.hi[0]));
  }
  detail::finish(cfg, ctx);
}

using Command = void (*)(Config&, const CommandContext&);

inline Command find_command(const std::string& name) {
  if (name == "train") return cmd_train;
  if (name == "evaluate") return cmd_evaluate;
  if (name == "transfer") return cmd_transfer;
  if (name == "ablate") return cmd_ablate;
  if (name == "interpret") return cmd_interpret;
  throw config_error("unknown command '" + name + "'");
}

inline constexpr int exit_ok = 0;
inline constexpr int exit_config = 2;
inline constexpr int exit_numeric = 3;

/// Runs a command and maps failures onto exit codes; messages go to `err`.
inline int run_command(const std::string& name, const fs::path& config_file, const CommandContext& ctx,
                       std::ostream& err) {
  try {
    std::ifstream in(config_file, std::ios::binary);
    if (!in) throw config_error("cannot read config file " + config_file.string());
    std::stringstream buf;
    buf << in.rdbuf();
    Config cfg = Config::parse(buf.str());
    CommandContext c = ctx;
    if (c.base_dir.empty()) c.base_dir = config_file.parent_path();
    find_command(name)(cfg, c);
    return exit_ok;
  } catch (const config_error& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const shape_error& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const numeric_error& e) {
    err << "numeric failure: " << e.what() << "\n";
    return exit_numeric;
  }
}

}  // namespace swarmlearn
