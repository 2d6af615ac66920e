// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mflow/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mflow {

using nlohmann::json;

const char* to_string(LrSchedule schedule) {
  return schedule == LrSchedule::constant ? "constant" : "cosine";
}

LrSchedule parse_lr_schedule(const std::string& name) {
  if (name == "constant") return LrSchedule::constant;
  if (name == "cosine") return LrSchedule::cosine;
  throw std::invalid_argument("unknown lr schedule '" + name + "' (expected constant | cosine)");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (!(lr_final_fraction >= 0.0 && lr_final_fraction <= 1.0)) {
    throw ConfigError("train.lr_final_fraction must lie in [0,1]");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train.beta1 and train.beta2 must lie in [0,1)");
  }
  if (!(eps > 0.0)) throw ConfigError("train.eps must be > 0");
  if (!(grad_clip >= 0.0)) throw ConfigError("train.grad_clip must be >= 0");
  if (log_every == 0) throw ConfigError("train.log_every must be >= 1");
}

void SampleConfig::validate() const {
  if (steps == 0 || teacher_steps == 0) throw ConfigError("sample steps must be >= 1");
  if (n_samples == 0) throw ConfigError("sample.n_samples must be >= 1");
  if (!grid.empty()) {
    if (grid.size() < 2 || grid.front() != 0.0 || grid.back() != 1.0) {
      throw ConfigError("sample.grid must start at 0 and end at 1");
    }
    for (std::size_t i = 1; i < grid.size(); ++i)
      if (!(grid[i] > grid[i - 1])) throw ConfigError("sample.grid must be strictly increasing");
  }
}

void EvalConfig::validate() const {
  if (n_samples < 2) throw ConfigError("eval.n_samples must be >= 2");
  if (n_pairs == 0) throw ConfigError("eval.n_pairs must be >= 1");
  if (steps_list.empty()) throw ConfigError("eval.steps_list must not be empty");
  for (std::size_t n : steps_list)
    if (n == 0) throw ConfigError("eval.steps_list entries must be >= 1");
}

void VerifyConfig::validate() const {
  if (grid < 2) throw ConfigError("verify.grid must be >= 2");
  if (integrator_steps == 0) throw ConfigError("verify.integrator_steps must be >= 1");
  if (!(fd_step > 0.0 && fd_step < 0.1)) throw ConfigError("verify.fd_step must lie in (0, 0.1)");
  if (probes == 0) throw ConfigError("verify.probes must be >= 1");
}

NetConfig RunConfig::net_config() const {
  NetConfig n;
  n.data_dim = task.data_dim();
  n.lr_dim = task.lr_dim();
  n.num_content = task.num_content();
  n.hidden = net.hidden;
  n.depth = net.depth;
  n.embed_dim = net.embed_dim;
  n.time_features = net.time_features;
  n.teacher_c_noise = net.teacher_c_noise;
  n.time_rate_min = net.time_rate_min;
  n.time_rate_max = net.time_rate_max;
  return n;
}

void RunConfig::validate() const {
  try {
    task.validate();
    net_config().validate();
    train.validate();
    cfg.validate();
    loss.validate();
    sample.validate();
    eval.validate();
    verify.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (out.empty()) throw ConfigError("out must not be empty");
}

// ---- JSON --------------------------------------------------------------

namespace {

json degrade_json(const DegradeParams& d) {
  return {{"blur_sigma", d.blur_sigma},
          {"scale", d.scale},
          {"noise_sigma", d.noise_sigma},
          {"quant_levels", d.quant_levels}};
}

json to_json_value(const RunConfig& c) {
  json j;
  j["task"] = {{"kind", to_string(c.task.kind)},
               {"mu", c.task.mu},
               {"sigma", c.task.sigma},
               {"dist", c.task.dist},
               {"hr_size", c.task.hr_size},
               {"num_classes", c.task.num_classes},
               {"degrade", degrade_json(c.task.degrade)},
               {"negative_blur_sigma", c.task.negative_blur_sigma},
               {"null_prob", c.task.null_prob},
               {"negative_prob", c.task.negative_prob}};
  j["net"] = {{"hidden", c.net.hidden},
              {"depth", c.net.depth},
              {"embed_dim", c.net.embed_dim},
              {"time_features", c.net.time_features},
              {"teacher_c_noise", c.net.teacher_c_noise},
              {"time_rate_min", c.net.time_rate_min},
              {"time_rate_max", c.net.time_rate_max}};
  j["train"] = {{"batch_size", c.train.batch_size},
                {"teacher_steps", c.train.teacher_steps},
                {"student_steps", c.train.student_steps},
                {"lr", c.train.lr},
                {"reference_lr", c.train.reference_lr},
                {"schedule", to_string(c.train.schedule)},
                {"lr_final_fraction", c.train.lr_final_fraction},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"eps", c.train.eps},
                {"grad_clip", c.train.grad_clip},
                {"log_every", c.train.log_every},
                {"checkpoint_every", c.train.checkpoint_every}};
  j["cfg"] = {{"mode", to_string(c.cfg.mode)}, {"w", c.cfg.w}, {"kappa", c.cfg.kappa}};
  j["loss"] = {{"metric", to_string(c.loss.metric)},
               {"huber_c", c.loss.huber_c ? json(*c.loss.huber_c) : json(nullptr)},
               {"ratio_r", c.loss.ratio_r}};
  j["sample"] = {{"steps", c.sample.steps},
                 {"teacher_steps", c.sample.teacher_steps},
                 {"n_samples", c.sample.n_samples},
                 {"grid", c.sample.grid}};
  j["eval"] = {{"n_samples", c.eval.n_samples},
               {"n_pairs", c.eval.n_pairs},
               {"steps_list", c.eval.steps_list},
               {"held_out_seed", c.eval.held_out_seed}};
  j["verify"] = {{"grid", c.verify.grid},
                 {"integrator_steps", c.verify.integrator_steps},
                 {"fd_step", c.verify.fd_step},
                 {"probes", c.verify.probes}};
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["teacher_checkpoint"] = c.teacher_checkpoint;
  return j;
}

/// Reads members of one JSON object and rejects any it did not ask for.
class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key " + path_ + key + " has the wrong type");
    }
  }

  template <typename Enum, typename Parse>
  void get_enum(const char* key, Enum& out, Parse parse) {
    std::string name;
    const bool present = obj_.contains(key);
    get(key, name);
    if (!present) return;
    try {
      out = parse(name);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config key " + path_ + key + ": " + e.what());
    }
  }

  Reader child(const char* key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    static const json empty = json::object();
    return Reader(it == obj_.end() ? empty : *it, path_ + key + ".");
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key " + path_ + key);
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_.substr(0, path_.size() - 1); }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

RunConfig from_json_value(const json& j) {
  RunConfig c;
  Reader root(j, "");
  {
    Reader r = root.child("task");
    r.get_enum("kind", c.task.kind, parse_task_kind);
    r.get("mu", c.task.mu);
    r.get("sigma", c.task.sigma);
    r.get("dist", c.task.dist);
    r.get("hr_size", c.task.hr_size);
    r.get("num_classes", c.task.num_classes);
    {
      Reader d = r.child("degrade");
      d.get("blur_sigma", c.task.degrade.blur_sigma);
      d.get("scale", c.task.degrade.scale);
      d.get("noise_sigma", c.task.degrade.noise_sigma);
      d.get("quant_levels", c.task.degrade.quant_levels);
      d.finish();
    }
    r.get("negative_blur_sigma", c.task.negative_blur_sigma);
    r.get("null_prob", c.task.null_prob);
    r.get("negative_prob", c.task.negative_prob);
    r.finish();
  }
  {
    Reader r = root.child("net");
    r.get("hidden", c.net.hidden);
    r.get("depth", c.net.depth);
    r.get("embed_dim", c.net.embed_dim);
    r.get("time_features", c.net.time_features);
    r.get("teacher_c_noise", c.net.teacher_c_noise);
    r.get("time_rate_min", c.net.time_rate_min);
    r.get("time_rate_max", c.net.time_rate_max);
    r.finish();
  }
  {
    Reader r = root.child("train");
    r.get("batch_size", c.train.batch_size);
    r.get("teacher_steps", c.train.teacher_steps);
    r.get("student_steps", c.train.student_steps);
    r.get("lr", c.train.lr);
    r.get("reference_lr", c.train.reference_lr);
    r.get_enum("schedule", c.train.schedule, parse_lr_schedule);
    r.get("lr_final_fraction", c.train.lr_final_fraction);
    r.get("beta1", c.train.beta1);
    r.get("beta2", c.train.beta2);
    r.get("eps", c.train.eps);
    r.get("grad_clip", c.train.grad_clip);
    r.get("log_every", c.train.log_every);
    r.get("checkpoint_every", c.train.checkpoint_every);
    r.finish();
  }
  {
    Reader r = root.child("cfg");
    r.get_enum("mode", c.cfg.mode, parse_cfg_mode);
    r.get("w", c.cfg.w);
    r.get("kappa", c.cfg.kappa);
    r.finish();
  }
  {
    Reader r = root.child("loss");
    r.get_enum("metric", c.loss.metric, parse_metric);
    std::optional<double> huber;
    json raw = nullptr;
    r.get("huber_c", raw);
    if (!raw.is_null()) {
      if (!raw.is_number()) throw ConfigError("config key loss.huber_c must be a number or null");
      huber = raw.get<double>();
    }
    c.loss.huber_c = huber;
    r.get("ratio_r", c.loss.ratio_r);
    r.finish();
  }
  {
    Reader r = root.child("sample");
    r.get("steps", c.sample.steps);
    r.get("teacher_steps", c.sample.teacher_steps);
    r.get("n_samples", c.sample.n_samples);
    r.get("grid", c.sample.grid);
    r.finish();
  }
  {
    Reader r = root.child("eval");
    r.get("n_samples", c.eval.n_samples);
    r.get("n_pairs", c.eval.n_pairs);
    r.get("steps_list", c.eval.steps_list);
    r.get("held_out_seed", c.eval.held_out_seed);
    r.finish();
  }
  {
    Reader r = root.child("verify");
    r.get("grid", c.verify.grid);
    r.get("integrator_steps", c.verify.integrator_steps);
    r.get("fd_step", c.verify.fd_step);
    r.get("probes", c.verify.probes);
    r.finish();
  }
  root.get("seed", c.seed);
  root.get("out", c.out);
  root.get("teacher_checkpoint", c.teacher_checkpoint);
  root.finish();
  return c;
}

}  // namespace

std::string to_json(const RunConfig& config) { return to_json_value(config).dump(2) + "\n"; }

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c = from_json_value(j);
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::ios_base::failure("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return config_from_json(ss.str());
}

void save_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream os(path);
  if (!os) throw std::ios_base::failure("cannot write config " + path.string());
  os << to_json(config);
  if (!os) throw std::ios_base::failure("write failed: " + path.string());
}

RunConfig apply_overrides(const RunConfig& config, const std::vector<std::string>& overrides) {
  json j = to_json_value(config);
  for (const std::string& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + item + "' is not of the form key=value");
    }
    const std::string key = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    json* node = &j;
    std::size_t start = 0;
    for (;;) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
      if (!node->is_object() || !node->contains(part)) {
        throw ConfigError("unknown config key " + key);
      }
      node = &(*node)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    if (node->is_object()) throw ConfigError("config key " + key + " names a section");
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    *node = value;
  }
  RunConfig c = from_json_value(j);
  c.validate();
  return c;
}

std::uint64_t config_digest(const RunConfig& config) {
  const std::string text = to_json_value(config).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

bool compatible_teacher(const RunConfig& teacher, const RunConfig& run) {
  return teacher.task == run.task && teacher.net == run.net;
}

}  // namespace mflow
