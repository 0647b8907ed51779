#include "depthbins/layers.hpp"

#include <cmath>

namespace depthbins {

void init_normal(Tensor& t, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.storage()) v = static_cast<Scalar>(dist(rng));
}

void init_uniform(Tensor& t, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.storage()) v = static_cast<Scalar>(dist(rng));
}

Conv2d Conv2d::create(ParameterStore& store, const std::string& name, int in, int out, int kernel, int stride,
                      bool with_bias, Rng& rng) {
  Conv2d c;
  c.kernel = kernel;
  c.stride = stride;
  c.padding = kernel / 2;
  c.weight = &store.create(name + ".weight", {kernel * kernel * in, out});
  // He initialisation for ReLU networks.
  init_normal(c.weight->value, std::sqrt(2.0 / (kernel * kernel * in)), rng);
  if (with_bias) c.bias = &store.create(name + ".bias", {out}, false);
  return c;
}

Var Conv2d::operator()(Graph& g, const Var& x) const {
  return ops::conv2d(x, g.param(*weight), bias ? g.param(*bias) : nullptr, kernel, stride, padding);
}

GroupNorm GroupNorm::create(ParameterStore& store, const std::string& name, int channels, int groups) {
  GroupNorm n;
  n.groups = groups;
  n.gamma = &store.create(name + ".gamma", {channels}, false);
  n.gamma->value.fill(1.0f);
  n.beta = &store.create(name + ".beta", {channels}, false);
  return n;
}

Var GroupNorm::operator()(Graph& g, const Var& x) const {
  return ops::group_norm(x, g.param(*gamma), g.param(*beta), groups);
}

Linear Linear::create(ParameterStore& store, const std::string& name, int in, int out, bool with_bias, Rng& rng) {
  Linear l;
  l.weight = &store.create(name + ".weight", {in, out});
  init_uniform(l.weight->value, std::sqrt(6.0 / (in + out)), rng);
  if (with_bias) l.bias = &store.create(name + ".bias", {out}, false);
  return l;
}

Var Linear::operator()(Graph& g, const Var& x) const {
  return ops::linear(x, g.param(*weight), bias ? g.param(*bias) : nullptr);
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, int width) {
  LayerNorm n;
  n.gamma = &store.create(name + ".gamma", {width}, false);
  n.gamma->value.fill(1.0f);
  n.beta = &store.create(name + ".beta", {width}, false);
  return n;
}

Var LayerNorm::operator()(Graph& g, const Var& x) const {
  return ops::layer_norm(x, g.param(*gamma), g.param(*beta));
}

Mlp3 Mlp3::create(ParameterStore& store, const std::string& name, int in, int hidden, int out, Rng& rng) {
  Mlp3 m;
  m.l1 = Linear::create(store, name + ".0", in, hidden, true, rng);
  m.l2 = Linear::create(store, name + ".1", hidden, hidden, true, rng);
  m.l3 = Linear::create(store, name + ".2", hidden, out, true, rng);
  return m;
}

Var Mlp3::operator()(Graph& g, const Var& x) const {
  return l3(g, ops::relu(l2(g, ops::relu(l1(g, x)))));
}

}  // namespace depthbins
