#pragma once

// Central finite-difference oracles for reverse-mode gradients. The checks
// rebuild the forward pass from scratch for every probe, so the analytic
// path and the numeric path share nothing but the op kernels.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "spencer/graph.hpp"
#include "spencer/rng.hpp"
#include "spencer/tensor.hpp"

namespace spencer::testing {

struct GradCheckResult {
  double max_rel_err = 0.0;
  size_t checked = 0;
  std::string worst;
};

inline double rel_err(double analytic, double numeric) {
  const double denom =
      std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
  return std::fabs(analytic - numeric) / denom;
}

// build(graph, input_param_ids) must construct a scalar loss from freshly
// inserted params equal to `inputs`.
using GraphBuilder = std::function<Graph::Id(
    Graph& g, const std::vector<Graph::Id>& input_ids)>;

inline GradCheckResult check_graph_gradients(
    const GraphBuilder& build, const std::vector<Tensor>& inputs,
    double h = 1e-5) {
  auto eval = [&](const std::vector<Tensor>& xs) {
    Graph g;
    std::vector<Graph::Id> ids;
    ids.reserve(xs.size());
    for (const Tensor& x : xs) ids.push_back(g.param(x));
    return g.value(build(g, ids)).scalar_value();
  };

  Graph g;
  std::vector<Graph::Id> ids;
  for (const Tensor& x : inputs) ids.push_back(g.param(x));
  const Graph::Id loss = build(g, ids);
  const Graph::GradientMap grads = g.backward(loss);

  GradCheckResult result;
  std::vector<Tensor> probe = inputs;
  for (size_t t = 0; t < inputs.size(); ++t) {
    const Tensor& analytic = grads.at(ids[t]);
    for (size_t e = 0; e < inputs[t].numel(); ++e) {
      const double saved = probe[t].at(e);
      probe[t].at(e) = saved + h;
      const double up = eval(probe);
      probe[t].at(e) = saved - h;
      const double down = eval(probe);
      probe[t].at(e) = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = rel_err(analytic.at(e), numeric);
      ++result.checked;
      if (err > result.max_rel_err) {
        result.max_rel_err = err;
        result.worst = "input " + std::to_string(t) + " elem " +
                       std::to_string(e) + ": analytic " +
                       std::to_string(analytic.at(e)) + " numeric " +
                       std::to_string(numeric);
      }
    }
  }
  return result;
}

// Perturbs model parameters in place. loss_value() must rerun the full
// forward pass; analytic must come from one backward() over the same loss.
inline GradCheckResult check_param_gradients(
    const std::function<double()>& loss_value,
    const std::vector<Tensor*>& params,
    const std::vector<const Tensor*>& analytic, double h = 1e-5) {
  GradCheckResult result;
  for (size_t t = 0; t < params.size(); ++t) {
    for (size_t e = 0; e < params[t]->numel(); ++e) {
      const double saved = params[t]->at(e);
      params[t]->at(e) = saved + h;
      const double up = loss_value();
      params[t]->at(e) = saved - h;
      const double down = loss_value();
      params[t]->at(e) = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = rel_err(analytic[t]->at(e), numeric);
      ++result.checked;
      if (err > result.max_rel_err) {
        result.max_rel_err = err;
        result.worst = "param " + std::to_string(t) + " elem " +
                       std::to_string(e) + ": analytic " +
                       std::to_string(analytic[t]->at(e)) + " numeric " +
                       std::to_string(numeric);
      }
    }
  }
  return result;
}

inline Tensor random_tensor(std::vector<size_t> shape, uint64_t seed,
                            double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  CounterRng rng(seed);
  for (double& v : t.values_mut()) v = lo + (hi - lo) * rng.next_unit();
  return t;
}

// Unit vector away from the all-equal direction, safe for cosine probes.
inline Tensor random_unit(size_t dim, uint64_t seed) {
  CounterRng rng(seed);
  Tensor t({dim});
  double norm = 0.0;
  for (double& v : t.values_mut()) {
    v = rng.next_normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : t.values_mut()) v /= norm;
  return t;
}

}  // namespace spencer::testing
