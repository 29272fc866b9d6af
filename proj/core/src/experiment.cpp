#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "chaneq/error.hpp"
#include "chaneq/io.hpp"
#include "chaneq/train.hpp"

namespace chaneq {

// ---- synthetic task ----

void SyntheticTask::validate() const {
  if (classes < 2) throw ConfigError("task: at least two classes are required");
  if (dims.c == 0 || dims.h == 0 || dims.w == 0) throw ConfigError("task: empty input dims");
  if (train_size < classes || test_size < classes) {
    throw ConfigError("task: train and test sizes must be >= classes");
  }
  if (!(separation > 0.0) || !(noise >= 0.0)) throw ConfigError("task: separation must be > 0, noise >= 0");
  if (!(label_corruption >= 0.0 && label_corruption <= 1.0)) {
    throw ConfigError("task: label corruption must be in [0, 1]");
  }
}

namespace {

struct ClassModel {
  std::vector<double> mean;  ///< c*h*w
  Matrix mix;                ///< c x c
};

void draw(Dataset& d, const std::vector<ClassModel>& cls, double noise, Rng rng) {
  const std::size_t C = d.dims.c;
  const std::size_t P = d.dims.h * d.dims.w;
  const std::size_t n = d.y.size();
  d.x.assign(n * C * P, 0.0);
  std::vector<double> z(C);
  for (std::size_t i = 0; i < n; ++i) {
    const ClassModel& k = cls[static_cast<std::size_t>(d.y[i])];
    double* out = d.x.data() + i * C * P;
    for (std::size_t p = 0; p < P; ++p) {
      for (double& v : z) v = rng.normal();
      for (std::size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::size_t e = 0; e < C; ++e) acc += k.mix(c, e) * z[e];
        out[c * P + p] = k.mean[c * P + p] + noise * acc;
      }
    }
  }
}

}  // namespace

TaskData make_task(const SyntheticTask& task) {
  task.validate();
  const Rng root(task.seed);
  Rng prior = root.derive(0);
  const std::size_t C = task.dims.c;
  const std::size_t P = task.dims.h * task.dims.w;
  std::vector<ClassModel> cls(task.classes);
  const double off = 0.5 / std::sqrt(static_cast<double>(C));
  for (ClassModel& k : cls) {
    k.mean.resize(C * P);
    for (double& v : k.mean) v = prior.normal(0.0, task.separation);
    k.mix = Matrix::identity(C);
    for (double& v : k.mix.values()) v += prior.normal(0.0, off);
  }
  const Shape4 dims{1, task.dims.c, task.dims.h, task.dims.w};
  TaskData out;
  for (Dataset* d : {&out.train, &out.test}) {
    d->dims = dims;
    d->classes = task.classes;
  }
  out.train.y.resize(task.train_size);
  out.test.y.resize(task.test_size);
  for (std::size_t i = 0; i < task.train_size; ++i) out.train.y[i] = static_cast<int>(i % task.classes);
  for (std::size_t i = 0; i < task.test_size; ++i) out.test.y[i] = static_cast<int>(i % task.classes);
  draw(out.train, cls, task.noise, root.derive(1));
  draw(out.test, cls, task.noise, root.derive(2));

  const auto flips = static_cast<std::size_t>(
      std::floor(task.label_corruption * static_cast<double>(task.train_size) + 1e-9));
  if (flips > 0) {
    Rng rng = root.derive(3);
    for (std::size_t i : rng.sample_without_replacement(task.train_size, flips)) {
      const auto shift = 1 + rng.below(task.classes - 1);
      out.train.y[i] = static_cast<int>((static_cast<std::size_t>(out.train.y[i]) + shift) % task.classes);
    }
  }
  out.corrupted = flips;
  return out;
}

Dataset load_csv_dataset(const std::filesystem::path& path, Shape4 dims, std::size_t classes) {
  Dataset d;
  d.dims = {1, dims.c, dims.h, dims.w};
  d.classes = classes;
  const std::size_t width = d.sample_size();
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> cells;
    std::size_t start = 0;
    while (start <= line.size()) {
      const auto end = std::min(line.find(',', start), line.size());
      std::string cell = line.substr(start, end - start);
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
      cells.push_back(v);
      start = end + 1;
    }
    if (cells.size() != width + 1) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(width + 1) + " columns");
    }
    const double label = cells[0];
    if (label < 0 || label != std::floor(label) || label >= static_cast<double>(classes)) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": label out of range");
    }
    d.y.push_back(static_cast<int>(label));
    d.x.insert(d.x.end(), cells.begin() + 1, cells.end());
  }
  if (d.y.empty()) throw ConfigError(path.string() + ": no samples");
  return d;
}

// ---- configuration ----

std::map<std::string, std::string> parse_key_values(std::string_view text,
                                                    const std::vector<std::string>& allowed) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (value.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty value for " + key);
    if (!out.emplace(key, value).second) {
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> k = {
      "task.classes",     "task.channels",     "task.height",         "task.width",
      "task.train_size",  "task.test_size",    "task.separation",     "task.noise",
      "task.label_corruption", "task.seed",
      "train.epochs",     "train.batch_size",  "train.lr",            "train.lr_factor",
      "train.lr_milestones", "train.momentum", "train.weight_decay",  "train.seed",
      "train.eval_every",
      "model.depth",      "model.width",       "model.norm",          "model.act",
      "sweep.weight_decays", "sweep.corruptions", "sweep.variants",   "sweep.seeds",
      "ablation.ratios",  "ablation.layer",    "ablation.trials",
      "workers"};
  return k;
}

namespace {

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : v + ",") {
    if (ch == ',') {
      const auto b = cur.find_first_not_of(" \t");
      if (b != std::string::npos) out.push_back(cur.substr(b, cur.find_last_not_of(" \t") - b + 1));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  return out;
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) out.push_back(to_double(key, s));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

}  // namespace

void ExperimentConfig::apply(const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) {
    if (k == "task.classes") task.classes = to_size(k, v);
    else if (k == "task.channels") task.dims.c = to_size(k, v);
    else if (k == "task.height") task.dims.h = to_size(k, v);
    else if (k == "task.width") task.dims.w = to_size(k, v);
    else if (k == "task.train_size") task.train_size = to_size(k, v);
    else if (k == "task.test_size") task.test_size = to_size(k, v);
    else if (k == "task.separation") task.separation = to_double(k, v);
    else if (k == "task.noise") task.noise = to_double(k, v);
    else if (k == "task.label_corruption") task.label_corruption = to_double(k, v);
    else if (k == "task.seed") task.seed = to_size(k, v);
    else if (k == "train.epochs") train.epochs = to_size(k, v);
    else if (k == "train.batch_size") train.batch_size = to_size(k, v);
    else if (k == "train.lr") train.lr.base = to_double(k, v);
    else if (k == "train.lr_factor") train.lr.factor = to_double(k, v);
    else if (k == "train.lr_milestones") {
      train.lr.milestones.clear();
      for (const auto& s : split_list(v)) train.lr.milestones.push_back(to_size(k, s));
    } else if (k == "train.momentum") train.momentum = to_double(k, v);
    else if (k == "train.weight_decay") train.weight_decay = to_double(k, v);
    else if (k == "train.seed") train.seed = to_size(k, v);
    else if (k == "train.eval_every") train.eval_every = to_size(k, v);
    else if (k == "model.depth") depth = to_size(k, v);
    else if (k == "model.width") width = to_size(k, v);
    else if (k == "model.norm") {
      try {
        norm = parse_norm_kind(v);
      } catch (const ContractError& e) {
        throw ConfigError(e.what());
      }
    } else if (k == "model.act") {
      try {
        act = parse_act_kind(v);
      } catch (const ContractError& e) {
        throw ConfigError(e.what());
      }
    } else if (k == "sweep.weight_decays") weight_decays = to_doubles(k, v);
    else if (k == "sweep.corruptions") corruptions = to_doubles(k, v);
    else if (k == "sweep.variants") {
      variants.clear();
      for (const auto& s : split_list(v)) variants.push_back(parse_ce_variant(s));
      if (variants.empty()) throw ConfigError(k + ": empty list");
    } else if (k == "sweep.seeds") seeds = to_size(k, v);
    else if (k == "ablation.ratios") ratios = to_doubles(k, v);
    else if (k == "ablation.layer") ablation_layer = to_size(k, v);
    else if (k == "ablation.trials") trials = to_size(k, v);
    else if (k == "workers") workers = to_size(k, v);
    else throw ConfigError("unknown key '" + k + "'");
  }
  if (depth == 0 || width == 0) throw ConfigError("model: depth and width must be >= 1");
  if (seeds == 0 || trials == 0 || workers == 0) throw ConfigError("seeds, trials and workers must be >= 1");
  task.validate();
  train.validate();
}

std::vector<BlockSpec> ExperimentConfig::blocks(CEVariant v) const {
  std::vector<BlockSpec> out(depth);
  for (BlockSpec& b : out) {
    b.channels = width;
    b.norm = norm;
    b.ce = v;
    b.act.kind = act;
    if (act == ActKind::LReLU) b.act.slope = 0.1;
  }
  return out;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  ExperimentConfig cfg;
  cfg.apply(parse_key_values(read_file(path), ExperimentConfig::keys()));
  return cfg;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---- experiments ----

namespace {

struct Job {
  CEVariant variant;
  double value = 0.0;  ///< grid coordinate
  std::size_t seed = 0;
};

struct JobResult {
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::pair<double, double>> curve;  ///< ablation (ratio, accuracy_mean)
  std::vector<double> curve_std;
};

Model fresh_model(const ExperimentConfig& cfg, CEVariant v, std::uint64_t seed) {
  Rng rng = Rng(seed).derive(0xB10C);
  return build_model(cfg.blocks(v), {1, cfg.task.dims.c, cfg.task.dims.h, cfg.task.dims.w},
                     cfg.task.classes, rng);
}

}  // namespace

ExperimentResult run_experiment(const std::string& name, const ExperimentConfig& cfg) {
  std::string param;
  std::vector<double> grid;
  if (name == "weight-decay") {
    param = "weight_decay";
    grid = cfg.weight_decays;
  } else if (name == "corrupted-label") {
    param = "label_corruption";
    grid = cfg.corruptions;
  } else if (name == "ablation") {
    param = "ratio";
    grid = {cfg.train.weight_decay};
    if (cfg.ablation_layer >= cfg.depth) {
      throw ConfigError("ablation.layer " + std::to_string(cfg.ablation_layer) +
                        " out of range for depth " + std::to_string(cfg.depth));
    }
  } else {
    throw ConfigError("unknown experiment '" + name +
                      "' (weight-decay, corrupted-label, ablation)");
  }

  std::vector<Job> jobs;
  for (CEVariant v : cfg.variants)
    for (double g : grid)
      for (std::size_t s = 0; s < cfg.seeds; ++s) jobs.push_back({v, g, s});

  const TaskData shared = make_task(cfg.task);
  std::vector<JobResult> results(jobs.size());
  parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) {
    const Job& job = jobs[i];
    TrainConfig tc = cfg.train;
    tc.seed = cfg.train.seed + job.seed;
    TaskData local;
    const TaskData* data = &shared;
    if (name == "weight-decay") {
      tc.weight_decay = job.value;
    } else if (name == "corrupted-label") {
      SyntheticTask t = cfg.task;
      t.label_corruption = job.value;
      local = make_task(t);
      data = &local;
    }
    Model model = fresh_model(cfg, job.variant, tc.seed);
    const TrainLog log = train(model, *data, tc);
    const EpochLog& last = log.epochs.back();
    JobResult& r = results[i];
    r.metrics = {{"train_acc", last.train_acc},
                 {"test_acc", last.test_acc},
                 {"inhibited_ratio", last.inhibited_ratio},
                 {"correlation", last.correlation}};
    if (name == "ablation") {
      const AblationEval eval = make_ablation_eval(model, data->test, cfg.ablation_layer);
      const AblationCurve c = cumulative_ablation(eval, cfg.width, cfg.ratios, cfg.trials, tc.seed);
      for (std::size_t k = 0; k < c.ratios.size(); ++k) {
        r.curve.emplace_back(c.ratios[k], c.accuracy_mean[k]);
        r.curve_std.push_back(c.accuracy_std[k]);
      }
    }
  });

  CsvWriter csv({"experiment", "variant", "param", "value", "seed", "metric", "metric_value"});
  std::vector<Series> series;
  for (CEVariant v : cfg.variants) series.push_back({to_string(v), {}, {}});
  std::map<std::pair<std::size_t, double>, std::pair<double, std::size_t>> acc;
  const std::string plotted = name == "weight-decay" ? "inhibited_ratio" : "test_acc";
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const Job& job = jobs[i];
    const auto vi = static_cast<std::size_t>(
        std::find(cfg.variants.begin(), cfg.variants.end(), job.variant) - cfg.variants.begin());
    const std::string seed = std::to_string(cfg.train.seed + job.seed);
    if (name == "ablation") {
      for (std::size_t k = 0; k < results[i].curve.size(); ++k) {
        const auto [ratio, mean] = results[i].curve[k];
        const std::string x = format_number(ratio);
        csv.row({name, to_string(job.variant), param, x, seed, "accuracy_mean", format_number(mean)});
        csv.row({name, to_string(job.variant), param, x, seed, "accuracy_std",
                 format_number(results[i].curve_std[k])});
        auto& a = acc[{vi, ratio}];
        a.first += mean;
        ++a.second;
      }
    } else {
      for (const auto& [metric, value] : results[i].metrics) {
        csv.row({name, to_string(job.variant), param, format_number(job.value), seed, metric,
                 format_number(value)});
        if (metric == plotted) {
          auto& a = acc[{vi, job.value}];
          a.first += value;
          ++a.second;
        }
      }
    }
  }
  for (const auto& [key, sum] : acc) {
    series[key.first].x.push_back(key.second);
    series[key.first].y.push_back(sum.first / static_cast<double>(sum.second));
  }
  const std::string y_label = name == "weight-decay" ? "inhibited channel ratio"
                              : name == "ablation"   ? "accuracy"
                                                     : "test accuracy";
  ExperimentResult out;
  out.csv = csv.str();
  out.svg = svg_line_chart(name, param, y_label, series);
  return out;
}

}  // namespace chaneq
