// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mflow_cli/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mflow/analytic_flow.hpp"
#include "mflow/checkpoint.hpp"
#include "mflow/config.hpp"
#include "mflow/csv.hpp"
#include "mflow/sampler.hpp"
#include "mflow/toy_data.hpp"
#include "mflow/train.hpp"

namespace mflow::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> grid;
  std::vector<std::string> overrides;
};

RunConfig resolve(const Options& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  c = apply_overrides(c, o.overrides);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.steps) c.sample.steps = *o.steps;
  if (o.grid) c.verify.grid = *o.grid;
  c.validate();
  return c;
}

fs::path prepare_out(const RunConfig& c, const std::string& command) {
  const fs::path out(c.out);
  fs::create_directories(out);
  save_config(out / (command + ".config.json"), c);
  return out;
}

fs::path teacher_path(const RunConfig& c) {
  return c.teacher_checkpoint.empty() ? fs::path(c.out) / "teacher.ckpt" : fs::path(c.teacher_checkpoint);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw std::ios_base::failure("cannot write " + path.string());
  return os;
}

// ---- commands ----------------------------------------------------------

int cmd_train_teacher(const RunConfig& c, std::ostream& out) {
  const fs::path dir = prepare_out(c, "train-teacher");
  const TrainOutput r = train_teacher(c, dir);
  out << "teacher checkpoint: " << r.checkpoint_path.string() << "\n";
  return kOk;
}

int cmd_distill(const RunConfig& c, std::ostream& out) {
  const Checkpoint teacher = load_checkpoint(teacher_path(c));
  const fs::path dir = prepare_out(c, "distill");
  const TrainOutput r = distill_student(c, teacher, dir);
  out << "student checkpoint: " << r.checkpoint_path.string() << "\n";
  return kOk;
}

int cmd_sample(const RunConfig& c, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(fs::path(c.out) / "student.ckpt");
  const FieldNet student = ckpt.net();
  const Task task(c.task);
  const fs::path dir = prepare_out(c, "sample") / "samples";
  fs::create_directories(dir);
  const std::size_t n = c.sample.n_samples;

  if (c.task.kind == TaskKind::toysr) {
    const SrProbe probe = make_sr_probe(task, n, c.seed);
    const Tensor x = c.sample.grid.empty()
                         ? sample_student(student, probe.z0, probe.z_lr, probe.labels, c.sample.steps)
                         : sample_student(student, probe.z0, probe.z_lr, probe.labels,
                                          std::span<const double>(c.sample.grid));
    const std::size_t h = c.task.hr_size;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string stem = "sample_" + std::to_string(i);
      write_pgm(dir / (stem + ".pgm"), latent_to_pixels(x.rows(i, i + 1).reshape({h, h})));
      write_pgm(dir / (stem + "_lr.pgm"), probe.pairs[i].lr);
      write_pgm(dir / (stem + "_hr.pgm"), probe.pairs[i].hr);
    }
    std::ofstream manifest = open_out(dir / "manifest.csv");
    write_sr_manifest(manifest, probe.pairs, c.task.degrade);
  } else {
    const GenProbe probe = make_gen_probe(task, n, c.seed);
    const Tensor x = c.sample.grid.empty()
                         ? sample_student(student, probe.z0, probe.z_lr, probe.labels, c.sample.steps)
                         : sample_student(student, probe.z0, probe.z_lr, probe.labels,
                                          std::span<const double>(c.sample.grid));
    for (std::size_t i = 0; i < n; ++i) {
      std::ofstream os = open_out(dir / ("sample_" + std::to_string(i) + ".csv"));
      std::vector<std::string> header;
      for (std::size_t j = 0; j < x.dim(1); ++j) header.push_back("x" + std::to_string(j));
      CsvWriter csv(os, header);
      std::vector<std::string> cells;
      for (std::size_t j = 0; j < x.dim(1); ++j) cells.push_back(format_double(x.at(i, j)));
      csv.row_cells(cells);
    }
  }
  out << n << " samples written to " << dir.string() << "\n";
  return kOk;
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(fs::path(c.out) / "student.ckpt");
  const FieldNet student = ckpt.net();
  const Task task(c.task);
  const fs::path dir = prepare_out(c, "eval");
  const std::size_t n = c.task.kind == TaskKind::toysr ? c.eval.n_pairs : c.eval.n_samples;
  std::vector<SweepRow> rows = steps_sweep(student, task, c.eval.steps_list, n, c.eval.held_out_seed);

  const fs::path tpath = teacher_path(c);
  if (fs::exists(tpath)) {
    const FieldNet teacher = load_checkpoint(tpath).net();
    const std::size_t nt = c.sample.teacher_steps;
    if (c.task.kind == TaskKind::toysr) {
      const SrProbe probe = make_sr_probe(task, n, c.eval.held_out_seed);
      const Tensor x = sample_teacher_euler(teacher, probe.z0, probe.z_lr, probe.labels, nt);
      const SrEval e = evaluate_sr(probe, x, c.task.hr_size);
      rows.push_back({nt, "teacher_psnr", e.psnr, n, c.eval.held_out_seed});
      rows.push_back({nt, "teacher_hf_gap", e.hf_gap, n, c.eval.held_out_seed});
      rows.push_back({0, "baseline_psnr", e.baseline_psnr, n, c.eval.held_out_seed});
    } else {
      const GenProbe probe = make_gen_probe(task, n, c.eval.held_out_seed);
      const Tensor x = sample_teacher_euler(teacher, probe.z0, probe.z_lr, probe.labels, nt);
      const GenEval e = evaluate_gen(task, x, c.eval.held_out_seed);
      if (e.moments) {
        rows.push_back({nt, "teacher_mean_err", e.moments->mean_err, n, c.eval.held_out_seed});
        rows.push_back({nt, "teacher_cov_err", e.moments->cov_err, n, c.eval.held_out_seed});
      }
      rows.push_back({nt, "teacher_energy_distance", e.energy, n, c.eval.held_out_seed});
    }
  }
  std::ofstream os = open_out(dir / "eval.csv");
  write_sweep_csv(os, rows);
  out << "report: " << (dir / "eval.csv").string() << "\n";
  return kOk;
}

int cmd_verify(const RunConfig& c, std::ostream& out) {
  const AnalyticFlow flow = c.task.kind == TaskKind::gaussian ? c.task.analytic() : AnalyticFlow{{2.0, -1.0}, 0.5};
  const fs::path dir = prepare_out(c, "verify");
  std::vector<double> grid(c.verify.grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid[i] = static_cast<double>(i) / static_cast<double>(grid.size() - 1);
  }
  Rng rng(c.seed);
  const Tensor probes = rng.normal_tensor({c.verify.probes, flow.dim()});
  const ResidualOptions opts{c.verify.integrator_steps, c.verify.fd_step};
  const std::vector<ResidualCell> cells = identity_residual_grid(flow, grid, grid, probes, opts);
  std::ofstream os = open_out(dir / "residual.csv");
  write_residual_csv(os, cells);
  const double worst = max_residual(cells);
  out << "max identity residual: " << format_double(worst) << "\n";
  return worst < 1e-3 ? kOk : kNumerical;
}

int cmd_gen_data(const RunConfig& c, std::ostream& out) {
  const Task task(c.task);
  const fs::path dir = prepare_out(c, "gen-data") / "data";
  fs::create_directories(dir);
  const std::size_t n = c.sample.n_samples;
  if (c.task.kind == TaskKind::toysr) {
    const std::vector<SrPair> pairs = task.sr_pairs(n, c.seed);
    for (std::size_t i = 0; i < n; ++i) {
      write_pgm(dir / ("pair_" + std::to_string(i) + "_hr.pgm"), pairs[i].hr);
      write_pgm(dir / ("pair_" + std::to_string(i) + "_lr.pgm"), pairs[i].lr);
    }
    std::ofstream os = open_out(dir / "manifest.csv");
    write_sr_manifest(os, pairs, c.task.degrade);
  } else {
    Rng rng(c.seed);
    const Tensor x = task.sample_data(n, rng);
    std::ofstream os = open_out(dir / "points.csv");
    std::vector<std::string> header;
    for (std::size_t j = 0; j < x.dim(1); ++j) header.push_back("x" + std::to_string(j));
    CsvWriter csv(os, header);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::string> cells;
      for (std::size_t j = 0; j < x.dim(1); ++j) cells.push_back(format_double(x.at(i, j)));
      csv.row_cells(cells);
    }
  }
  out << n << " items written to " << dir.string() << "\n";
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"MeanFlow distillation lab", "mflow"};
  app.require_subcommand(1);
  Options opts;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "JSON run config")->check(CLI::ExistingFile);
    sub->add_option("--seed", opts.seed, "override the config seed");
    sub->add_option("--out", opts.out, "output directory");
    sub->add_option("--set", opts.overrides, "dotted key=value override (repeatable)")->take_all();
  };
  struct Entry {
    const char* name;
    const char* help;
    int (*fn)(const RunConfig&, std::ostream&);
  };
  const Entry entries[] = {
      {"train-teacher", "train the teacher velocity field", cmd_train_teacher},
      {"distill", "distil a student from <out>/teacher.ckpt", cmd_distill},
      {"sample", "draw samples from <out>/student.ckpt", cmd_sample},
      {"eval", "steps sweep and teacher reference metrics", cmd_eval},
      {"verify", "analytic average-velocity identity check", cmd_verify},
      {"gen-data", "dump dataset samples", cmd_gen_data},
  };
  std::vector<std::pair<CLI::App*, const Entry*>> subs;
  for (const Entry& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    add_common(sub);
    if (std::string(e.name) == "sample") sub->add_option("--steps", opts.steps, "student sampler steps");
    if (std::string(e.name) == "verify") sub->add_option("--grid", opts.grid, "grid points per axis");
    subs.emplace_back(sub, &e);
  }

  if (argc <= 1) {
    err << app.help();
    return kUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kUsage;
  }

  try {
    for (const auto& [sub, entry] : subs) {
      if (sub->parsed()) return entry->fn(resolve(opts), out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical abort: " << e.what() << "\n";
    return kNumerical;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kIo;
  } catch (const std::ios_base::failure& e) {
    err << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace mflow::cli
