#include "cfl/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "cfl/errors.hpp"
#include "cfl/random.hpp"

namespace cfl {

void ModelSpec::validate() const {
  if (n_features < 1 || n_classes < 1) throw ValidationError("model: n_features and n_classes must be >= 1");
  if (kind == ModelKind::mlp1 && hidden_units < 1) throw ValidationError("model: mlp1 needs hidden_units >= 1");
  if (init == InitKind::gaussian && !(init_std >= 0.0)) throw ValidationError("model: init_std must be >= 0");
}

std::shared_ptr<const Layout> make_layout(const ModelSpec& spec) {
  spec.validate();
  const auto F = static_cast<std::size_t>(spec.n_features);
  const auto C = static_cast<std::size_t>(spec.n_classes);
  if (spec.kind == ModelKind::logistic)
    return std::make_shared<const Layout>(std::vector<Segment>{{"weight", C, F}, {"bias", C, 1}});
  const auto H = static_cast<std::size_t>(spec.hidden_units);
  return std::make_shared<const Layout>(std::vector<Segment>{
      {"hidden.weight", H, F}, {"hidden.bias", H, 1}, {"output.weight", C, H}, {"output.bias", C, 1}});
}

ParamVector init_params(const ModelSpec& spec, std::shared_ptr<const Layout> layout) {
  ParamVector p(std::move(layout), 0.0);
  if (spec.init == InitKind::gaussian) {
    Rng rng(spec.init_seed);
    std::normal_distribution<double> normal(0.0, spec.init_std);
    for (auto& v : p.values()) v = normal(rng);
  }
  return p;
}

namespace {

// Dense views into a ParamVector laid out by make_layout().
struct Dense {
  std::span<const double> w;
  std::span<const double> b;
  std::size_t out = 0;
  std::size_t in = 0;

  void apply(std::span<const double> x, std::span<double> y) const {
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      const double* row = w.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) s += row[i] * x[i];
      y[o] = s;
    }
  }
};

struct Net {
  const ModelSpec& spec;
  Dense first;   // logistic: the only layer
  Dense second;  // mlp1 output layer

  Net(const ParamVector& p, const ModelSpec& s) : spec(s) {
    const auto F = static_cast<std::size_t>(s.n_features);
    const auto C = static_cast<std::size_t>(s.n_classes);
    if (s.kind == ModelKind::logistic) {
      if (p.size() != C * F + C) throw ShapeError("logistic params have wrong size");
      first = {p.segment(0), p.segment(1), C, F};
    } else {
      const auto H = static_cast<std::size_t>(s.hidden_units);
      if (p.size() != H * F + H + C * H + C) throw ShapeError("mlp1 params have wrong size");
      first = {p.segment(0), p.segment(1), H, F};
      second = {p.segment(2), p.segment(3), C, H};
    }
  }

  bool hidden() const { return spec.kind == ModelKind::mlp1; }

  // Fills logits (size C); `act` receives tanh activations for mlp1.
  void logits(std::span<const double> x, std::span<double> act, std::span<double> z) const {
    if (!hidden()) {
      first.apply(x, z);
      return;
    }
    first.apply(x, act);
    for (auto& a : act) a = std::tanh(a);
    second.apply(act, z);
  }
};

double log_sum_exp(std::span<const double> z) {
  double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  return mx + std::log(s);
}

void softmax_inplace(std::span<double> z) {
  double lse = log_sum_exp(z);
  for (auto& v : z) v = std::exp(v - lse);
}

void check_width(std::size_t width, const ModelSpec& spec) {
  if (width != static_cast<std::size_t>(spec.n_features))
    throw ShapeError("feature width " + std::to_string(width) + " does not match model n_features " +
                     std::to_string(spec.n_features));
}

template <typename RowFn>
Matrix forward_rows(const ParamVector& params, const ModelSpec& spec, std::size_t n, RowFn&& row) {
  Net net(params, spec);
  Matrix out(n, spec.n_classes);
  std::vector<double> act(spec.hidden_units > 0 ? spec.hidden_units : 0);
  for (std::size_t r = 0; r < n; ++r) {
    auto z = out.row(r);
    net.logits(row(r), act, z);
    softmax_inplace(z);
  }
  return out;
}

}  // namespace

Matrix forward(const ParamVector& params, const ModelSpec& spec, const Matrix& features) {
  check_width(features.cols(), spec);
  return forward_rows(params, spec, features.rows(), [&](std::size_t r) { return features.row(r); });
}

Matrix forward(const ParamVector& params, const ModelSpec& spec, ShardView shard) {
  check_width(shard.data->n_features(), spec);
  return forward_rows(params, spec, shard.size(),
                      [&](std::size_t r) { return shard.data->row(shard.indices[r]); });
}

std::vector<int> predict(const ParamVector& params, const ModelSpec& spec, ShardView shard) {
  Matrix probs = forward(params, spec, shard);
  std::vector<int> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double loss(const ParamVector& params, const ModelSpec& spec, ShardView shard) {
  if (shard.empty()) throw ValidationError("loss: empty shard");
  check_width(shard.data->n_features(), spec);
  Net net(params, spec);
  std::vector<double> act(spec.hidden_units > 0 ? spec.hidden_units : 0);
  std::vector<double> z(spec.n_classes);
  double total = 0.0;
  for (auto idx : shard.indices) {
    net.logits(shard.data->row(idx), act, z);
    total += log_sum_exp(z) - z[shard.data->label(idx)];
  }
  return total / static_cast<double>(shard.size());
}

ParamVector gradient(const ParamVector& params, const ModelSpec& spec, ShardView batch,
                     const ParamVector* prox_anchor, double prox_mu) {
  if (batch.empty()) throw ValidationError("gradient: empty batch");
  check_width(batch.data->n_features(), spec);
  if (prox_mu > 0.0) {
    if (prox_anchor == nullptr) throw ValidationError("gradient: prox_mu > 0 requires an anchor");
    require_same_shape(params, *prox_anchor, "gradient prox anchor");
  }

  Net net(params, spec);
  ParamVector g(params.layout_ptr(), 0.0);
  const auto C = static_cast<std::size_t>(spec.n_classes);
  const auto F = static_cast<std::size_t>(spec.n_features);
  const auto H = static_cast<std::size_t>(std::max(spec.hidden_units, 0));
  std::vector<double> act(H), dz(C), dact(H);

  for (auto idx : batch.indices) {
    auto x = batch.data->row(idx);
    net.logits(x, act, dz);
    softmax_inplace(dz);
    dz[batch.data->label(idx)] -= 1.0;

    if (!net.hidden()) {
      auto gw = g.segment(0);
      auto gb = g.segment(1);
      for (std::size_t c = 0; c < C; ++c) {
        double* row = gw.data() + c * F;
        for (std::size_t f = 0; f < F; ++f) row[f] += dz[c] * x[f];
        gb[c] += dz[c];
      }
      continue;
    }

    auto gw2 = g.segment(2);
    auto gb2 = g.segment(3);
    std::fill(dact.begin(), dact.end(), 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      double* row = gw2.data() + c * H;
      const double* w2 = net.second.w.data() + c * H;
      for (std::size_t h = 0; h < H; ++h) {
        row[h] += dz[c] * act[h];
        dact[h] += w2[h] * dz[c];
      }
      gb2[c] += dz[c];
    }
    auto gw1 = g.segment(0);
    auto gb1 = g.segment(1);
    for (std::size_t h = 0; h < H; ++h) {
      double da = dact[h] * (1.0 - act[h] * act[h]);
      double* row = gw1.data() + h * F;
      for (std::size_t f = 0; f < F; ++f) row[f] += da * x[f];
      gb1[h] += da;
    }
  }

  g *= 1.0 / static_cast<double>(batch.size());
  if (prox_mu > 0.0) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += prox_mu * (params[i] - (*prox_anchor)[i]);
  }
  return g;
}

std::optional<double> smoothness_bound(const ModelSpec& spec, ShardView shard) {
  if (spec.kind != ModelKind::logistic || shard.empty()) return std::nullopt;
  double sq = 0.0;
  for (auto idx : shard.indices) {
    double r = 1.0;
    for (double v : shard.data->row(idx)) r += v * v;
    sq += r;
  }
  return 0.5 * sq / static_cast<double>(shard.size());
}

void SgdConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ValidationError("sgd: learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("sgd: momentum must lie in [0, 1)");
  if (batch_size < 1) throw ValidationError("sgd: batch_size must be >= 1");
  if (local_steps < 1) throw ValidationError("sgd: local_steps must be >= 1");
  if (!(prox_mu >= 0.0)) throw ValidationError("sgd: prox_mu must be >= 0");
}

LocalUpdateResult sgd_steps(const ParamVector& start, std::span<const std::size_t> items, const SgdConfig& cfg,
                            std::uint64_t seed, const BatchGradientFn& grad, const StepSizeFn& step_size) {
  cfg.validate();
  if (items.empty()) throw ValidationError("local update: empty shard");

  LocalUpdateResult out{start, {}};
  ParamVector& w = out.params;
  ParamVector velocity(start.layout_ptr(), 0.0);

  const bool whole = cfg.full_batch || static_cast<std::size_t>(cfg.batch_size) >= items.size();
  std::vector<std::size_t> order(items.begin(), items.end());
  std::size_t cursor = order.size();
  Rng rng(seed);

  for (int step = 0; step < cfg.local_steps; ++step) {
    std::vector<std::size_t> batch;
    if (whole) {
      batch.assign(items.begin(), items.end());
    } else {
      if (cursor >= order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      std::size_t take = std::min<std::size_t>(cfg.batch_size, order.size() - cursor);
      batch.assign(order.begin() + cursor, order.begin() + cursor + take);
      cursor += take;
    }

    ParamVector g = grad(w, batch);
    const double gnorm = l2_norm(g);
    const double lr = step_size ? step_size(step, gnorm) : cfg.learning_rate;

    if (cfg.momentum > 0.0) {
      velocity *= cfg.momentum;
      velocity += g;
      w.axpy(-lr, velocity);
    } else {
      w.axpy(-lr, g);
    }

    out.trace.grad_norms.push_back(gnorm);
    out.trace.step_sizes.push_back(lr);
    out.trace.batches.push_back(std::move(batch));
  }
  out.trace.displacement = std::sqrt(squared_distance(w, start));
  return out;
}

LocalUpdateResult local_update(const ParamVector& params, const ModelSpec& spec, ShardView shard,
                               const SgdConfig& cfg, std::uint64_t seed, const StepSizeFn& step_size) {
  if (shard.empty()) throw ValidationError("local_update: empty shard");
  const Dataset* data = shard.data;
  auto grad = [&](const ParamVector& w, std::span<const std::size_t> batch) {
    return gradient(w, spec, ShardView{data, batch}, &params, cfg.prox_mu);
  };
  return sgd_steps(params, shard.indices, cfg, seed, grad, step_size);
}

void GradientBound::observe(double grad_norm) {
  max_ = seen_ ? std::max(max_, grad_norm) : grad_norm;
  seen_ = true;
}

void GradientBound::observe(const UpdateTrace& trace) {
  for (double g : trace.grad_norms) observe(g);
}

double gradient_norm_bound_estimate(std::span<const UpdateTrace> traces) {
  if (traces.empty()) throw ValidationError("gradient_norm_bound_estimate: no traces");
  GradientBound b;
  for (const auto& t : traces) b.observe(t);
  return b.value();
}

}  // namespace cfl
