// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "lbound/core.hpp"

namespace lbound {

enum class OpType {
  Conv,
  Gemm,
  MatMul,
  Relu,
  Sigmoid,
  Tanh,
  BatchNorm,
  MaxPool,
  AveragePool,
  GlobalAveragePool,
  Softmax,
  Add,
  Mul,
  Concat,
  Dropout,
  Reshape,
  Flatten,
  Unsqueeze,
  Squeeze,
  Transpose,
  Identity,
  Opaque,
};

inline const char* to_string(OpType op) {
  switch (op) {
    case OpType::Conv: return "Conv";
    case OpType::Gemm: return "Gemm";
    case OpType::MatMul: return "MatMul";
    case OpType::Relu: return "Relu";
    case OpType::Sigmoid: return "Sigmoid";
    case OpType::Tanh: return "Tanh";
    case OpType::BatchNorm: return "BatchNorm";
    case OpType::MaxPool: return "MaxPool";
    case OpType::AveragePool: return "AveragePool";
    case OpType::GlobalAveragePool: return "GlobalAveragePool";
    case OpType::Softmax: return "Softmax";
    case OpType::Add: return "Add";
    case OpType::Mul: return "Mul";
    case OpType::Concat: return "Concat";
    case OpType::Dropout: return "Dropout";
    case OpType::Reshape: return "Reshape";
    case OpType::Flatten: return "Flatten";
    case OpType::Unsqueeze: return "Unsqueeze";
    case OpType::Squeeze: return "Squeeze";
    case OpType::Transpose: return "Transpose";
    case OpType::Identity: return "Identity";
    case OpType::Opaque: return "Opaque";
  }
  return "Opaque";
}

// Maps an ONNX operator name (or our own spelling) to the supported set.
// Anything unknown is Opaque.
inline OpType op_type_from_name(std::string_view name) {
  static const std::map<std::string, OpType, std::less<>> table = {
      {"Conv", OpType::Conv},
      {"Gemm", OpType::Gemm},
      {"MatMul", OpType::MatMul},
      {"Relu", OpType::Relu},
      {"Sigmoid", OpType::Sigmoid},
      {"Tanh", OpType::Tanh},
      {"BatchNormalization", OpType::BatchNorm},
      {"BatchNorm", OpType::BatchNorm},
      {"MaxPool", OpType::MaxPool},
      {"AveragePool", OpType::AveragePool},
      {"GlobalAveragePool", OpType::GlobalAveragePool},
      {"Softmax", OpType::Softmax},
      {"Add", OpType::Add},
      {"Mul", OpType::Mul},
      {"Concat", OpType::Concat},
      {"Dropout", OpType::Dropout},
      {"Reshape", OpType::Reshape},
      {"Flatten", OpType::Flatten},
      {"Unsqueeze", OpType::Unsqueeze},
      {"Squeeze", OpType::Squeeze},
      {"Transpose", OpType::Transpose},
      {"Identity", OpType::Identity},
  };
  auto it = table.find(name);
  return it == table.end() ? OpType::Opaque : it->second;
}

inline bool is_activation(OpType op) {
  return op == OpType::Relu || op == OpType::Sigmoid || op == OpType::Tanh;
}

inline bool is_pool(OpType op) {
  return op == OpType::MaxPool || op == OpType::AveragePool || op == OpType::GlobalAveragePool;
}

// Data-movement / bookkeeping operators: zero compute, no library call.
inline bool is_reshape_family(OpType op) {
  return op == OpType::Reshape || op == OpType::Flatten || op == OpType::Unsqueeze ||
         op == OpType::Squeeze || op == OpType::Transpose || op == OpType::Identity;
}

struct TensorShape {
  std::vector<std::int64_t> dims;
  DType dtype = DType::f32;

  std::size_t rank() const { return dims.size(); }

  std::int64_t element_count() const {
    return std::accumulate(dims.begin(), dims.end(), std::int64_t{1}, std::multiplies<>());
  }

  // "1x3x224x224"
  std::string to_string() const {
    std::string s;
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (i) s += 'x';
      s += std::to_string(dims[i]);
    }
    return s;
  }

  bool operator==(const TensorShape& o) const { return dims == o.dims && dtype == o.dtype; }
};

using IntList = std::vector<std::int64_t>;
using FloatList = std::vector<double>;
using AttrValue = std::variant<std::int64_t, double, IntList, FloatList, std::string>;
using Attributes = std::map<std::string, AttrValue>;

inline std::optional<std::int64_t> attr_int(const Attributes& a, const std::string& key) {
  auto it = a.find(key);
  if (it == a.end()) return std::nullopt;
  if (auto p = std::get_if<std::int64_t>(&it->second)) return *p;
  return std::nullopt;
}

inline std::optional<double> attr_float(const Attributes& a, const std::string& key) {
  auto it = a.find(key);
  if (it == a.end()) return std::nullopt;
  if (auto p = std::get_if<double>(&it->second)) return *p;
  if (auto p = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*p);
  return std::nullopt;
}

inline std::optional<IntList> attr_ints(const Attributes& a, const std::string& key) {
  auto it = a.find(key);
  if (it == a.end()) return std::nullopt;
  if (auto p = std::get_if<IntList>(&it->second)) return *p;
  if (auto p = std::get_if<std::int64_t>(&it->second)) return IntList{*p};
  return std::nullopt;
}

inline std::optional<std::string> attr_string(const Attributes& a, const std::string& key) {
  auto it = a.find(key);
  if (it == a.end()) return std::nullopt;
  if (auto p = std::get_if<std::string>(&it->second)) return *p;
  return std::nullopt;
}

enum class SourceKind { node, graph_input, initializer };

// One tensor input of a node. For node sources, `source` is the producer id.
struct InputRef {
  std::string source;
  SourceKind kind = SourceKind::node;
  int output_index = 0;

  bool operator==(const InputRef&) const = default;
};

struct LayerNode {
  std::string id;
  OpType op_type = OpType::Opaque;
  std::string onnx_op;  // original operator name
  Attributes params;
  std::vector<InputRef> inputs;        // in ONNX input order, weights included
  std::vector<std::string> output_ids; // consumer node ids, filled by ModelGraph
  int num_outputs = 1;

  // Declared output dims from the model file (-1 = symbolic). Used for Opaque
  // nodes, whose semantics we do not know.
  std::vector<std::vector<std::int64_t>> declared_out_dims;

  std::vector<TensorShape> in_shapes;   // parallel to `inputs`
  std::vector<TensorShape> out_shapes;
  std::int64_t macs = 0;
  bool shapes_inferred = false;

  // Producer ids / graph-input names of the activation (non-initializer) inputs.
  std::vector<std::string> input_ids() const {
    std::vector<std::string> ids;
    for (const auto& in : inputs)
      if (in.kind != SourceKind::initializer) ids.push_back(in.source);
    return ids;
  }

  bool has_initializer_input() const {
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const InputRef& r) { return r.kind == SourceKind::initializer; });
  }
};

struct Initializer {
  std::string name;
  TensorShape shape;
  // Retained only for small integer tensors (reshape targets, axes); weight
  // values are never stored.
  std::optional<IntList> int_values;
};

struct GraphInput {
  std::string name;
  std::vector<std::int64_t> dims;  // -1 for symbolic
  DType dtype = DType::f32;
};

// Immutable DAG of layer nodes. Construct through `ModelGraph::build`, which
// validates references and acyclicity.
class ModelGraph {
 public:
  ModelGraph() = default;

  static ModelGraph build(std::string name, std::vector<LayerNode> nodes, std::vector<GraphInput> inputs,
                          std::vector<Initializer> initializers, std::vector<std::string> outputs) {
    ModelGraph g;
    g.name_ = std::move(name);
    g.nodes_ = std::move(nodes);
    g.inputs_ = std::move(inputs);
    for (auto& init : initializers) g.initializers_.emplace(init.name, std::move(init));
    g.outputs_ = std::move(outputs);
    g.finalize();
    return g;
  }

  const std::string& name() const { return name_; }
  const std::vector<LayerNode>& nodes() const { return nodes_; }
  const std::vector<GraphInput>& graph_inputs() const { return inputs_; }
  const std::map<std::string, Initializer>& initializers() const { return initializers_; }
  const std::vector<std::string>& graph_outputs() const { return outputs_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  const LayerNode& node(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error(ErrorKind::structure, "no node '" + id + "'");
    return nodes_[it->second];
  }
  std::size_t index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error(ErrorKind::structure, "no node '" + id + "'");
    return it->second;
  }
  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  const GraphInput* find_input(const std::string& name) const {
    for (const auto& in : inputs_)
      if (in.name == name) return &in;
    return nullptr;
  }
  const Initializer* find_initializer(const std::string& name) const {
    auto it = initializers_.find(name);
    return it == initializers_.end() ? nullptr : &it->second;
  }

  // Predecessor node indices (node-to-node edges only), deduplicated.
  const std::vector<std::size_t>& preds(std::size_t i) const { return preds_[i]; }
  const std::vector<std::size_t>& succs(std::size_t i) const { return succs_[i]; }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& s : succs_) n += s.size();
    return n;
  }

  // Returns a copy with node contents replaced; topology must be unchanged.
  ModelGraph with_nodes(std::vector<LayerNode> nodes, std::optional<std::vector<GraphInput>> inputs = {}) const {
    ModelGraph g = *this;
    g.nodes_ = std::move(nodes);
    if (inputs) g.inputs_ = std::move(*inputs);
    g.finalize();
    return g;
  }

 private:
  void finalize() {
    index_.clear();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].id.empty()) throw Error(ErrorKind::structure, "node with empty id");
      if (!index_.emplace(nodes_[i].id, i).second)
        throw Error(ErrorKind::structure, "duplicate node id '" + nodes_[i].id + "'");
    }
    preds_.assign(nodes_.size(), {});
    succs_.assign(nodes_.size(), {});
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      auto& n = nodes_[i];
      n.output_ids.clear();
      for (const auto& in : n.inputs) {
        switch (in.kind) {
          case SourceKind::node: {
            auto it = index_.find(in.source);
            if (it == index_.end())
              throw Error(ErrorKind::structure,
                          "node '" + n.id + "' consumes unknown producer '" + in.source + "'");
            auto& p = preds_[i];
            if (std::find(p.begin(), p.end(), it->second) == p.end()) p.push_back(it->second);
            break;
          }
          case SourceKind::graph_input:
            if (!find_input(in.source))
              throw Error(ErrorKind::structure,
                          "node '" + n.id + "' consumes unknown graph input '" + in.source + "'");
            break;
          case SourceKind::initializer:
            if (!find_initializer(in.source))
              throw Error(ErrorKind::structure,
                          "node '" + n.id + "' consumes unknown initializer '" + in.source + "'");
            break;
        }
      }
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      std::sort(preds_[i].begin(), preds_[i].end());
      for (auto p : preds_[i]) succs_[p].push_back(i);
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      std::sort(succs_[i].begin(), succs_[i].end(),
                [&](std::size_t a, std::size_t b) { return nodes_[a].id < nodes_[b].id; });
      for (auto s : succs_[i]) nodes_[i].output_ids.push_back(nodes_[s].id);
    }
    check_acyclic();
  }

  // Iterative DFS; reports the first back edge found.
  void check_acyclic() const {
    enum Color : unsigned char { white, grey, black };
    std::vector<Color> color(nodes_.size(), white);
    std::vector<std::pair<std::size_t, std::size_t>> stack;
    for (std::size_t root = 0; root < nodes_.size(); ++root) {
      if (color[root] != white) continue;
      stack.emplace_back(root, 0);
      color[root] = grey;
      while (!stack.empty()) {
        auto& [u, next] = stack.back();
        if (next < succs_[u].size()) {
          auto v = succs_[u][next++];
          if (color[v] == grey)
            throw Error(ErrorKind::structure,
                        "cycle detected: back edge '" + nodes_[u].id + "' -> '" + nodes_[v].id + "'");
          if (color[v] == white) {
            color[v] = grey;
            stack.emplace_back(v, 0);
          }
        } else {
          color[u] = black;
          stack.pop_back();
        }
      }
    }
  }

  std::string name_;
  std::vector<LayerNode> nodes_;
  std::vector<GraphInput> inputs_;
  std::map<std::string, Initializer> initializers_;
  std::vector<std::string> outputs_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> preds_;
  std::vector<std::vector<std::size_t>> succs_;
};

// Kahn's algorithm; among ready nodes the smallest id goes first.
inline std::vector<std::size_t> topo_indices(const ModelGraph& g) {
  const auto& nodes = g.nodes();
  std::vector<std::size_t> indeg(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) indeg[i] = g.preds(i).size();
  auto cmp = [&](std::size_t a, std::size_t b) { return nodes[a].id > nodes[b].id; };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(cmp)> ready(cmp);
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (indeg[i] == 0) ready.push(i);
  std::vector<std::size_t> order;
  order.reserve(nodes.size());
  while (!ready.empty()) {
    auto u = ready.top();
    ready.pop();
    order.push_back(u);
    for (auto v : g.succs(u))
      if (--indeg[v] == 0) ready.push(v);
  }
  if (order.size() != nodes.size()) throw Error(ErrorKind::structure, "graph contains a cycle");
  return order;
}

inline std::vector<std::string> topo_order(const ModelGraph& g) {
  std::vector<std::string> ids;
  for (auto i : topo_indices(g)) ids.push_back(g.nodes()[i].id);
  return ids;
}

}  // namespace lbound
