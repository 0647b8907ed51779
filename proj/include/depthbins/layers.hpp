#pragma once

#include <random>
#include <string>

#include "depthbins/autograd.hpp"
#include "depthbins/ops.hpp"

namespace depthbins {

using Rng = std::mt19937_64;

void init_normal(Tensor& t, double stddev, Rng& rng);
void init_uniform(Tensor& t, double bound, Rng& rng);

struct Conv2d {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
  int kernel = 3;
  int stride = 1;
  int padding = 1;

  static Conv2d create(ParameterStore& store, const std::string& name, int in, int out, int kernel, int stride,
                       bool with_bias, Rng& rng);
  Var operator()(Graph& g, const Var& x) const;
};

struct GroupNorm {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
  int groups = 1;

  static GroupNorm create(ParameterStore& store, const std::string& name, int channels, int groups);
  Var operator()(Graph& g, const Var& x) const;
};

struct Linear {
  Parameter* weight = nullptr;  // {in, out}
  Parameter* bias = nullptr;    // {out}, optional

  static Linear create(ParameterStore& store, const std::string& name, int in, int out, bool with_bias, Rng& rng);
  Var operator()(Graph& g, const Var& x) const;
  int in_features() const { return weight->value.dim(0); }
  int out_features() const { return weight->value.dim(1); }
};

struct LayerNorm {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;

  static LayerNorm create(ParameterStore& store, const std::string& name, int width);
  Var operator()(Graph& g, const Var& x) const;
};

/// Three linear layers with ReLU between them and none on the output.
struct Mlp3 {
  Linear l1, l2, l3;

  static Mlp3 create(ParameterStore& store, const std::string& name, int in, int hidden, int out, Rng& rng);
  Var operator()(Graph& g, const Var& x) const;
};

}  // namespace depthbins
