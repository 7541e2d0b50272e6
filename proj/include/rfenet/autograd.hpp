#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rfenet/tensor.hpp"

namespace rfenet {

/// A named learnable tensor (or a non-trainable buffer such as running
/// normalization statistics) together with its accumulated gradient.
template <typename S>
struct Parameter {
  std::string name;
  Mat<S> value;
  Mat<S> grad;
  bool trainable = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Owns every parameter of a model, in registration order. Names are module
/// paths such as "stage3.sme.block0.fuse.conv.weight".
template <typename S>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  Parameter<S>& add(std::string name, Mat<S> init, bool trainable = true) {
    if (index_.count(name)) throw ConfigError("duplicate parameter " + name);
    auto p = std::make_unique<Parameter<S>>();
    p->name = std::move(name);
    p->value = std::move(init);
    p->trainable = trainable;
    p->zero_grad();
    index_[p->name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<S>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const Parameter<S>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  std::size_t size() const { return params_.size(); }
  Parameter<S>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<S>& operator[](std::size_t i) const { return *params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.cbegin(); }
  auto end() const { return params_.cend(); }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  Index scalar_count() const {
    Index n = 0;
    for (auto& p : params_) n += p->value.size();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter<S>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename S>
class Graph;

/// Handle to a node of a Graph.
template <typename S>
struct Var {
  Graph<S>* graph = nullptr;
  int id = -1;

  const Tensor<S>& value() const { return graph->value(id); }
  const Mat<S>& data() const { return graph->value(id).data; }
  Index channels() const { return value().channels(); }
  int n() const { return value().n; }
  int h() const { return value().h; }
  int w() const { return value().w; }
  bool valid() const { return graph != nullptr && id >= 0; }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
/// sweep over the node list is a valid topological order for backward.
template <typename S>
class Graph {
 public:
  using Backward = std::function<void(const Mat<S>& grad_out)>;

  explicit Graph(bool grad_enabled = true, bool training = true)
      : grad_enabled_(grad_enabled), training_(training) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  bool training() const { return training_; }

  Var<S> input(Tensor<S> t) {
    nodes_.push_back(Node{std::move(t), {}, false, {}, nullptr});
    return {this, int(nodes_.size()) - 1};
  }

  /// Leaf holding a parameter; one node per parameter per graph.
  Var<S> param(Parameter<S>& p) { return param(p, 1, 1, int(p.value.cols())); }

  /// Parameter leaf viewed with an explicit n × h × w column layout.
  Var<S> param(Parameter<S>& p, int n, int h, int w) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return {this, it->second};
    if (Index(n) * h * w != p.value.cols()) {
      throw ShapeError("param " + p.name + ": layout does not match its columns");
    }
    Tensor<S> t(p.value, n, h, w);
    const bool rg = grad_enabled_ && p.trainable;
    nodes_.push_back(Node{std::move(t), {}, rg, {}, &p});
    const int id = int(nodes_.size()) - 1;
    param_nodes_[&p] = id;
    return {this, id};
  }

  /// Appends a computed node. The backward closure is kept only if some
  /// parent needs a gradient.
  Var<S> emit(Tensor<S> value, std::initializer_list<Var<S>> parents,
              Backward backward) {
    return emit(std::move(value), std::vector<Var<S>>(parents),
                std::move(backward));
  }

  Var<S> emit(Tensor<S> value, const std::vector<Var<S>>& parents,
              Backward backward) {
    bool rg = false;
    if (grad_enabled_) {
      for (const auto& p : parents) rg = rg || nodes_[p.id].requires_grad;
    }
    nodes_.push_back(
        Node{std::move(value), {}, rg, rg ? std::move(backward) : Backward{},
             nullptr});
    return {this, int(nodes_.size()) - 1};
  }

  const Tensor<S>& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Gradient accumulator of a node, allocated on first use.
  Mat<S>& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) {
      n.grad.setZero(n.value.data.rows(), n.value.data.cols());
    }
    return n.grad;
  }

  /// Seeds d(root)/d(root) = 1 and sweeps the tape backwards, adding
  /// parameter gradients into Parameter::grad.
  void backward(Var<S> root) {
    if (!nodes_[root.id].requires_grad) return;
    grad(root.id).setOnes();
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(n.grad);
      if (n.param) {
        if (n.param->grad.size() == 0) n.param->zero_grad();
        n.param->grad += n.grad;
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<S> value;
    Mat<S> grad;
    bool requires_grad = false;
    Backward backward;
    Parameter<S>* param = nullptr;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter<S>*, int> param_nodes_;
  bool grad_enabled_;
  bool training_;
};

}  // namespace rfenet
