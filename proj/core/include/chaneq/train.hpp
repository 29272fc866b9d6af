#pragma once

// Desk-scale training: a feed-forward classifier of
//   linear (1x1 channel mixing) -> norm [-> CE] -> activation
// blocks followed by global average pooling and a linear softmax head,
// trained with SGD, momentum and weight decay on a synthetic mixture task.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chaneq/ce_block.hpp"
#include "chaneq/diagnostics.hpp"
#include "chaneq/norm_act.hpp"
#include "chaneq/rng.hpp"
#include "chaneq/tensor.hpp"

namespace chaneq {

enum class CEVariant { None, BdOnly, IrOnly, Full };

const char* to_string(CEVariant v);
CEVariant parse_ce_variant(std::string_view s);

struct BlockSpec {
  std::size_t channels = 16;  ///< output channels of the block
  NormKind norm = NormKind::BN;
  CEVariant ce = CEVariant::None;
  Activation act{};
  std::size_t reduction = 4;
  int newton_iterations = 3;
  std::size_t group_size = 16;
};

struct LrSchedule {
  double base = 0.1;
  double factor = 0.1;
  std::vector<std::size_t> milestones;  ///< epochs after which lr is multiplied by factor

  double at(std::size_t epoch) const;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  LrSchedule lr{};
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 1;
  /// Evaluate test accuracy and diagnostics every `eval_every` epochs (and at the end).
  std::size_t eval_every = 1;

  void validate() const;
};

struct Dataset {
  Shape4 dims{1, 1, 1, 1};  ///< n is ignored; (c, h, w) of one sample
  std::size_t classes = 2;
  std::vector<double> x;    ///< samples back to back
  std::vector<int> y;

  std::size_t size() const noexcept { return y.size(); }
  std::size_t sample_size() const noexcept { return dims.c * dims.h * dims.w; }
  FeatureMap batch(std::span<const std::size_t> idx) const;
  std::vector<int> labels(std::span<const std::size_t> idx) const;
};

struct SyntheticTask {
  std::size_t classes = 4;
  Shape4 dims{1, 8, 3, 3};
  std::size_t train_size = 2048;
  std::size_t test_size = 1024;
  double separation = 1.0;  ///< std of the class means
  double noise = 1.0;       ///< scale of the class-specific correlated noise
  double label_corruption = 0.0;
  std::uint64_t seed = 7;

  void validate() const;
};

struct TaskData {
  Dataset train;
  Dataset test;
  std::size_t corrupted = 0;
};

/// Class-conditional Gaussian mixture: x = m_k + noise * A_k z at every
/// location, with per-class mean m_k and channel-mixing A_k. Classes are
/// balanced; train and test are drawn from disjoint streams; a fraction
/// `label_corruption` of train labels is replaced by a different class.
TaskData make_task(const SyntheticTask& task);

/// CSV loader: one sample per line, `label,v0,v1,...` with c*h*w values.
Dataset load_csv_dataset(const std::filesystem::path& path, Shape4 dims, std::size_t classes);

struct Block {
  BlockSpec spec;
  LinearMap linear;
  AffineParams affine;  ///< used when spec.ce == None
  ChannelVector running_mean;
  ChannelVector running_var;
  bool has_running = false;
  std::optional<CEState> ce;
};

struct Model {
  Shape4 input{1, 1, 1, 1};
  std::size_t classes = 2;
  std::vector<Block> blocks;
  Matrix head_w;  ///< classes x C_last
  Vector head_b;
  Mode mode = Mode::Train;
  double bn_momentum = 0.1;

  std::size_t parameter_count() const;
  void set_mode(Mode m);
};

/// Throws ConfigError on an empty spec list or invalid block options.
Model build_model(const std::vector<BlockSpec>& specs, Shape4 input, std::size_t classes, Rng& rng);

/// Trainable tensors in a fixed order, with their gradients.
struct ParamRef {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
  bool frozen = false;
};

struct Gradients {
  std::vector<std::vector<double>> slots;  ///< same order as params()
};

std::vector<ParamRef> params(Model& model, Gradients& grads);

/// Channel indices zeroed at one block's output during evaluation.
struct Ablation {
  std::size_t layer = 0;
  std::vector<std::size_t> channels;
};

struct ForwardResult {
  Matrix logits;                        ///< N x classes
  std::vector<FeatureMap> activations;  ///< post-activation output of every block
};

ForwardResult forward(Model& model, const FeatureMap& x, const Ablation* ablation = nullptr);

struct LossResult {
  double loss = 0.0;
  std::size_t correct = 0;
};

/// Train-mode forward and backward on one batch. Running statistics are
/// updated unless `track_running` is false. Gradients are overwritten.
LossResult loss_and_gradients(Model& model, const FeatureMap& x, std::span<const int> labels,
                              Gradients& grads, bool track_running = true);

/// Train-mode mean cross-entropy without touching running statistics.
double batch_loss(Model& model, const FeatureMap& x, std::span<const int> labels);

struct Optimizer {
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<std::vector<double>> velocity;

  /// v = momentum v + g + wd w; w -= lr v, skipping frozen tensors.
  void step(std::vector<ParamRef>& ps, double lr);
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double inhibited_ratio = 0.0;
  double correlation = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  std::vector<ChannelReport> final_reports;  ///< per block, on the test set
  std::string csv() const;
};

struct Evaluation {
  double accuracy = 0.0;
  std::vector<ChannelReport> reports;  ///< per block
  std::vector<double> correlations;    ///< per block
  double inhibited_ratio() const;
  double correlation() const;
};

/// Eval-mode pass over a dataset in batches of `batch_size`.
Evaluation evaluate(Model& model, const Dataset& data, std::size_t batch_size = 256,
                    const Ablation* ablation = nullptr);

/// Throws NumericalError with a parameter summary when the loss becomes non-finite.
TrainLog train(Model& model, const TaskData& data, const TrainConfig& config);

/// Accuracy on `data` with the given channels zeroed at block `layer`.
/// Throws ConfigError for an invalid layer.
AblationEval make_ablation_eval(Model& model, const Dataset& data, std::size_t layer);

/// Writes manifest.json plus one CE checkpoint per CE-bearing block.
void save_model(const Model& model, const std::filesystem::path& dir);
Model load_model(const std::filesystem::path& dir);

// ---- experiments ----

/// Flat `key = value` file with `#` comments. Keys outside `allowed` are rejected.
std::map<std::string, std::string> parse_key_values(std::string_view text,
                                                    const std::vector<std::string>& allowed);

struct ExperimentConfig {
  SyntheticTask task{};
  TrainConfig train{};
  std::size_t depth = 6;
  std::size_t width = 16;
  NormKind norm = NormKind::BN;
  ActKind act = ActKind::ReLU;
  std::vector<double> weight_decays{1e-4, 5e-4, 1e-3, 5e-3};
  std::vector<double> corruptions{0.0, 0.1, 0.2, 0.3, 0.4};
  std::vector<double> ratios{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<CEVariant> variants{CEVariant::None, CEVariant::BdOnly, CEVariant::Full};
  std::size_t seeds = 1;
  std::size_t ablation_layer = 2;
  std::size_t trials = 5;
  std::size_t workers = 1;

  static const std::vector<std::string>& keys();
  /// Applies parsed keys; throws ConfigError on malformed values.
  void apply(const std::map<std::string, std::string>& kv);
  std::vector<BlockSpec> blocks(CEVariant v) const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct ExperimentResult {
  std::string csv;  ///< `experiment,variant,param,value,seed,metric,metric_value`
  std::string svg;
};

/// `weight-decay`, `corrupted-label` or `ablation`. Throws ConfigError otherwise.
ExperimentResult run_experiment(const std::string& name, const ExperimentConfig& config);

/// Runs fn(0..n-1) on at most `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace chaneq
