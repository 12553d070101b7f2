#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "cfl/data.hpp"
#include "cfl/matrix.hpp"
#include "cfl/param_vector.hpp"

namespace cfl {

enum class ModelKind { logistic, mlp1 };
enum class InitKind { zeros, gaussian };

// Multinomial logistic regression, or one tanh hidden layer followed by a
// softmax output layer.
struct ModelSpec {
  ModelKind kind = ModelKind::logistic;
  int n_features = 1;
  int n_classes = 2;
  int hidden_units = 0;
  InitKind init = InitKind::zeros;
  double init_std = 0.01;
  std::uint64_t init_seed = 0;

  void validate() const;
};

// Segment names: logistic -> {"weight", "bias"};
// mlp1 -> {"hidden.weight", "hidden.bias", "output.weight", "output.bias"}.
std::shared_ptr<const Layout> make_layout(const ModelSpec& spec);
ParamVector init_params(const ModelSpec& spec, std::shared_ptr<const Layout> layout);
inline ParamVector init_params(const ModelSpec& spec) { return init_params(spec, make_layout(spec)); }

// Row-wise class probabilities.
Matrix forward(const ParamVector& params, const ModelSpec& spec, const Matrix& features);
Matrix forward(const ParamVector& params, const ModelSpec& spec, ShardView shard);
std::vector<int> predict(const ParamVector& params, const ModelSpec& spec, ShardView shard);

// Mean cross-entropy over the shard.
double loss(const ParamVector& params, const ModelSpec& spec, ShardView shard);

// Gradient of loss(params) + prox_mu/2 * ||params - prox_anchor||^2. The
// anchor is ignored when prox_mu == 0.
ParamVector gradient(const ParamVector& params, const ModelSpec& spec, ShardView batch,
                     const ParamVector* prox_anchor = nullptr, double prox_mu = 0.0);

// Upper bound on the smoothness constant of the mean cross-entropy on this
// shard. Only available for the logistic model (Hessian <= 1/2 * E[x x^T]
// with x augmented by the bias input), empty otherwise.
std::optional<double> smoothness_bound(const ModelSpec& spec, ShardView shard);

struct SgdConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  int batch_size = 32;
  int local_steps = 10;
  double prox_mu = 0.0;
  bool full_batch = false;

  // learning_rate == 0 is accepted as an explicit freeze.
  void validate() const;
};

struct UpdateTrace {
  std::vector<double> grad_norms;
  std::vector<double> step_sizes;
  std::vector<std::vector<std::size_t>> batches;
  double displacement = 0.0;
};

struct LocalUpdateResult {
  ParamVector params;
  UpdateTrace trace;
};

// Per-step learning rate given the step index and the norm of the gradient
// about to be applied. Unset means SgdConfig::learning_rate every step.
using StepSizeFn = std::function<double(int step, double grad_norm)>;

// Gradient of some objective at params over the given dataset-relative batch.
using BatchGradientFn = std::function<ParamVector(const ParamVector& params, std::span<const std::size_t> batch)>;

// Q steps of heavy-ball SGD (v <- momentum*v + g; w <- w - lr*v) over the
// index set `items`. Batches are drawn without replacement and reshuffled
// each epoch; full_batch (or batch_size >= |items|) uses every item every step.
LocalUpdateResult sgd_steps(const ParamVector& start, std::span<const std::size_t> items, const SgdConfig& cfg,
                            std::uint64_t seed, const BatchGradientFn& grad, const StepSizeFn& step_size = {});

// Local update on a client shard. With prox_mu > 0 the proximal anchor is the
// starting (broadcast) model.
LocalUpdateResult local_update(const ParamVector& params, const ModelSpec& spec, ShardView shard,
                               const SgdConfig& cfg, std::uint64_t seed, const StepSizeFn& step_size = {});

// Running maximum of recorded stochastic gradient norms.
class GradientBound {
 public:
  void observe(double grad_norm);
  void observe(const UpdateTrace& trace);
  double value() const noexcept { return max_; }
  bool empty() const noexcept { return !seen_; }

 private:
  double max_ = 0.0;
  bool seen_ = false;
};

double gradient_norm_bound_estimate(std::span<const UpdateTrace> traces);

}  // namespace cfl
