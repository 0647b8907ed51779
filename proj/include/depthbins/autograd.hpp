#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "depthbins/tensor.hpp"

namespace depthbins {

/// One value in a reverse-mode computation graph.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Zero-initialised on first access.
  Tensor& grad_buffer();
  bool has_grad() const { return !grad.empty(); }
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor value);
Var leaf(Tensor value, bool requires_grad);

/// Builds an op result. The backward closure is kept only if some parent
/// requires a gradient, so inference graphs carry no closures.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

/// Seeds d(root)/d(root) = 1 and propagates to every reachable node.
void run_backward(const Var& root);

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool decay = true;
};

/// Owns named trainable tensors; addresses stay stable for the store's lifetime.
class ParameterStore {
 public:
  Parameter& create(const std::string& name, std::vector<int> shape, bool decay = true);

  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t count() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> by_name_;
};

/// Per-forward binding of parameters to graph leaves.
class Graph {
 public:
  explicit Graph(bool record_gradients) : record_(record_gradients) {}

  bool recording() const { return record_; }
  Var param(Parameter& p);

  /// Back-propagates from a scalar loss and adds leaf gradients into each
  /// bound parameter's grad buffer.
  void backward(const Var& loss);

 private:
  bool record_;
  std::vector<std::pair<Parameter*, Var>> bound_;
  std::unordered_map<Parameter*, Var> lookup_;
};

}  // namespace depthbins
