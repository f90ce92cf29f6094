// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "lbound/model_ir.hpp"
#include "lbound/protobuf_wire.hpp"

namespace lbound {

// Tensor-level graph description shared by the ONNX and text loaders before
// edges are resolved into node references.
struct RawNode {
  std::string name;
  std::string op_type;
  std::vector<std::string> inputs;   // tensor names; "" = omitted optional input
  std::vector<std::string> outputs;  // tensor names
  Attributes attrs;
  std::optional<Initializer> value;  // Constant payload (shape + small int values)
};

struct RawGraph {
  std::string name;
  std::vector<RawNode> nodes;
  std::vector<GraphInput> inputs;  // may include initializer names (old IR)
  std::vector<Initializer> initializers;
  std::vector<std::string> outputs;  // tensor names
  std::map<std::string, std::vector<std::int64_t>> value_info;
};

namespace onnx_field {
// ONNX protobuf field numbers (onnx.proto3).
constexpr std::uint32_t model_graph = 7;
constexpr std::uint32_t graph_node = 1, graph_name = 2, graph_initializer = 5, graph_input = 11, graph_output = 12,
                        graph_value_info = 13;
constexpr std::uint32_t node_input = 1, node_output = 2, node_name = 3, node_op_type = 4, node_attribute = 5;
constexpr std::uint32_t attr_name = 1, attr_f = 2, attr_i = 3, attr_s = 4, attr_t = 5, attr_floats = 7,
                        attr_int_list = 8, attr_type = 20;
constexpr std::uint32_t tensor_dims = 1, tensor_data_type = 2, tensor_int32_data = 5, tensor_int64_data = 7,
                        tensor_name = 8, tensor_raw_data = 9;
constexpr std::uint32_t value_name = 1, value_type = 2;
constexpr std::uint32_t type_tensor = 1;
constexpr std::uint32_t tensor_type_elem = 1, tensor_type_shape = 2;
constexpr std::uint32_t shape_dim = 1;
constexpr std::uint32_t dim_value = 1, dim_param = 2;
// TensorProto.DataType
constexpr std::int64_t dt_float = 1, dt_int32 = 6, dt_int64 = 7, dt_float16 = 10;
// AttributeProto.AttributeType
constexpr std::int64_t at_float = 1, at_int = 2, at_string = 3, at_tensor = 4, at_floats = 6, at_ints = 7;
}  // namespace onnx_field

namespace detail {

inline DType dtype_from_onnx(std::int64_t t) { return t == onnx_field::dt_float16 ? DType::f16 : DType::f32; }

constexpr std::size_t kMaxRetainedInts = 64;

inline Initializer decode_tensor(pb::Reader r) {
  using namespace onnx_field;
  Initializer init;
  std::int64_t data_type = dt_float;
  IntList ints;
  std::span<const std::uint8_t> raw;
  std::uint32_t f;
  pb::WireType wt;
  while (r.next(f, wt)) {
    switch (f) {
      case tensor_dims: r.read_int64s(wt, init.shape.dims); break;
      case tensor_data_type: data_type = static_cast<std::int64_t>(r.read_varint()); break;
      case tensor_int32_data:
      case tensor_int64_data: r.read_int64s(wt, ints); break;
      case tensor_name: init.name = r.read_string(); break;
      case tensor_raw_data: raw = r.read_bytes(); break;
      default: r.skip(wt);
    }
  }
  init.shape.dtype = dtype_from_onnx(data_type);
  if (data_type == dt_int64 || data_type == dt_int32) {
    std::size_t width = data_type == dt_int64 ? 8 : 4;
    if (!raw.empty() && raw.size() / width <= kMaxRetainedInts) {
      ints.clear();
      for (std::size_t i = 0; i + width <= raw.size(); i += width) {
        std::uint64_t v = 0;
        for (std::size_t b = 0; b < width; ++b) v |= static_cast<std::uint64_t>(raw[i + b]) << (8 * b);
        if (width == 4) v = static_cast<std::uint64_t>(static_cast<std::int64_t>(static_cast<std::int32_t>(v)));
        ints.push_back(static_cast<std::int64_t>(v));
      }
    }
    if (ints.size() <= kMaxRetainedInts && (!ints.empty() || init.shape.element_count() == 0)) init.int_values = ints;
  }
  return init;
}

inline void decode_value_info(pb::Reader r, std::string& name, std::vector<std::int64_t>& dims, DType& dtype,
                              bool& has_shape) {
  using namespace onnx_field;
  has_shape = false;
  std::uint32_t f;
  pb::WireType wt;
  while (r.next(f, wt)) {
    if (f == value_name) {
      name = r.read_string();
    } else if (f == value_type) {
      auto type = r.read_message();
      while (type.next(f, wt)) {
        if (f != type_tensor) {
          type.skip(wt);
          continue;
        }
        auto tt = type.read_message();
        while (tt.next(f, wt)) {
          if (f == tensor_type_elem) {
            dtype = dtype_from_onnx(static_cast<std::int64_t>(tt.read_varint()));
          } else if (f == tensor_type_shape) {
            has_shape = true;
            auto shape = tt.read_message();
            while (shape.next(f, wt)) {
              if (f != shape_dim) {
                shape.skip(wt);
                continue;
              }
              auto dim = shape.read_message();
              std::int64_t d = -1;
              while (dim.next(f, wt)) {
                if (f == dim_value) d = static_cast<std::int64_t>(dim.read_varint());
                else dim.skip(wt);
              }
              dims.push_back(d > 0 ? d : -1);
            }
          } else {
            tt.skip(wt);
          }
        }
      }
    } else {
      r.skip(wt);
    }
  }
}

inline void decode_attribute(pb::Reader r, RawNode& node) {
  using namespace onnx_field;
  std::string name;
  std::optional<double> fval;
  std::optional<std::int64_t> ival;
  std::optional<std::string> sval;
  std::optional<Initializer> tval;
  FloatList floats;
  IntList ints;
  std::int64_t type = 0;
  std::uint32_t f;
  pb::WireType wt;
  while (r.next(f, wt)) {
    switch (f) {
      case attr_name: name = r.read_string(); break;
      case attr_f: fval = r.read_float(); break;
      case attr_i: ival = static_cast<std::int64_t>(r.read_varint()); break;
      case attr_s: sval = r.read_string(); break;
      case attr_t: tval = decode_tensor(r.read_message()); break;
      case attr_floats: r.read_floats(wt, floats); break;
      case attr_int_list: r.read_int64s(wt, ints); break;
      case attr_type: type = static_cast<std::int64_t>(r.read_varint()); break;
      default: r.skip(wt);
    }
  }
  if (name.empty()) return;
  // Older writers omit `type`; infer from whichever payload is present.
  if (type == at_float || (type == 0 && fval)) node.attrs[name] = fval.value_or(0.0);
  else if (type == at_int || (type == 0 && ival)) node.attrs[name] = ival.value_or(0);
  else if (type == at_string || (type == 0 && sval)) node.attrs[name] = sval.value_or("");
  else if (type == at_floats || (type == 0 && !floats.empty())) node.attrs[name] = floats;
  else if (type == at_ints || (type == 0 && !ints.empty())) node.attrs[name] = ints;
  else if ((type == at_tensor || type == 0) && tval) node.value = std::move(tval);
}

inline RawNode decode_node(pb::Reader r) {
  using namespace onnx_field;
  RawNode n;
  std::uint32_t f;
  pb::WireType wt;
  while (r.next(f, wt)) {
    switch (f) {
      case node_input: n.inputs.push_back(r.read_string()); break;
      case node_output: n.outputs.push_back(r.read_string()); break;
      case node_name: n.name = r.read_string(); break;
      case node_op_type: n.op_type = r.read_string(); break;
      case node_attribute: decode_attribute(r.read_message(), n); break;
      default: r.skip(wt);
    }
  }
  return n;
}

inline RawGraph decode_graph(pb::Reader r) {
  using namespace onnx_field;
  RawGraph g;
  std::uint32_t f;
  pb::WireType wt;
  while (r.next(f, wt)) {
    switch (f) {
      case graph_node: g.nodes.push_back(decode_node(r.read_message())); break;
      case graph_name: g.name = r.read_string(); break;
      case graph_initializer: g.initializers.push_back(decode_tensor(r.read_message())); break;
      case graph_input: {
        GraphInput gi;
        bool has_shape;
        decode_value_info(r.read_message(), gi.name, gi.dims, gi.dtype, has_shape);
        g.inputs.push_back(std::move(gi));
        break;
      }
      case graph_output: {
        std::string name;
        std::vector<std::int64_t> dims;
        DType dt = DType::f32;
        bool has_shape;
        decode_value_info(r.read_message(), name, dims, dt, has_shape);
        if (has_shape) g.value_info.emplace(name, dims);
        g.outputs.push_back(name);
        break;
      }
      case graph_value_info: {
        std::string name;
        std::vector<std::int64_t> dims;
        DType dt = DType::f32;
        bool has_shape;
        decode_value_info(r.read_message(), name, dims, dt, has_shape);
        if (has_shape) g.value_info.emplace(name, dims);
        break;
      }
      default: r.skip(wt);
    }
  }
  return g;
}

// Resolves tensor names into node edges and builds the validated graph.
inline ModelGraph assemble(RawGraph raw) {
  std::set<std::string> init_names;
  for (const auto& i : raw.initializers) init_names.insert(i.name);

  std::vector<GraphInput> inputs;
  std::set<std::string> input_names;
  for (auto& gi : raw.inputs) {
    if (init_names.count(gi.name) || !input_names.insert(gi.name).second) continue;
    inputs.push_back(std::move(gi));
  }

  // Stable, unique node ids: the node name when usable, otherwise op_index.
  std::vector<std::string> ids(raw.nodes.size());
  std::set<std::string> used;
  std::map<std::string, int> name_count;
  for (const auto& n : raw.nodes)
    if (!n.name.empty()) name_count[n.name]++;
  for (std::size_t i = 0; i < raw.nodes.size(); ++i) {
    const auto& n = raw.nodes[i];
    std::string id = (!n.name.empty() && name_count[n.name] == 1) ? n.name : n.op_type + "_" + std::to_string(i);
    while (!used.insert(id).second) id += "_";
    ids[i] = id;
  }

  std::map<std::string, std::pair<std::size_t, int>> producer;
  for (std::size_t i = 0; i < raw.nodes.size(); ++i)
    for (std::size_t o = 0; o < raw.nodes[i].outputs.size(); ++o)
      if (!raw.nodes[i].outputs[o].empty()) producer[raw.nodes[i].outputs[o]] = {i, static_cast<int>(o)};

  auto const_ints = [&](const std::string& tensor) -> std::optional<IntList> {
    for (const auto& init : raw.initializers)
      if (init.name == tensor) return init.int_values;
    auto it = producer.find(tensor);
    if (it != producer.end()) {
      const auto& p = raw.nodes[it->second.first];
      if (p.op_type == "Constant" && p.value) return p.value->int_values;
    }
    return std::nullopt;
  };

  std::vector<LayerNode> nodes;
  nodes.reserve(raw.nodes.size());
  for (std::size_t i = 0; i < raw.nodes.size(); ++i) {
    auto& rn = raw.nodes[i];
    LayerNode n;
    n.id = ids[i];
    n.onnx_op = rn.op_type;
    n.op_type = op_type_from_name(rn.op_type);
    n.params = rn.attrs;
    n.num_outputs = static_cast<int>(std::max<std::size_t>(1, rn.outputs.size()));
    for (const auto& t : rn.inputs) {
      if (t.empty()) continue;
      if (init_names.count(t)) n.inputs.push_back({t, SourceKind::initializer, 0});
      else if (auto it = producer.find(t); it != producer.end())
        n.inputs.push_back({ids[it->second.first], SourceKind::node, it->second.second});
      else if (input_names.count(t)) n.inputs.push_back({t, SourceKind::graph_input, 0});
      else throw Error(ErrorKind::structure, "node '" + n.id + "' consumes undefined tensor '" + t + "'");
    }
    // Shape-like constant operands become attributes so shape rules stay pure.
    if (n.op_type == OpType::Reshape && rn.inputs.size() > 1 && !n.params.count("shape"))
      if (auto v = const_ints(rn.inputs[1])) n.params["shape"] = *v;
    if ((n.op_type == OpType::Unsqueeze || n.op_type == OpType::Squeeze) && rn.inputs.size() > 1 &&
        !n.params.count("axes"))
      if (auto v = const_ints(rn.inputs[1])) n.params["axes"] = *v;
    if (rn.op_type == "Constant" && rn.value) {
      n.declared_out_dims.push_back(rn.value->shape.dims);
      if (n.declared_out_dims.back().empty()) n.declared_out_dims.back() = {1};
      if (rn.value->int_values) n.params["value"] = *rn.value->int_values;
    } else {
      for (const auto& t : rn.outputs) {
        auto vi = raw.value_info.find(t);
        n.declared_out_dims.push_back(vi == raw.value_info.end() ? std::vector<std::int64_t>{} : vi->second);
      }
    }
    nodes.push_back(std::move(n));
  }

  std::vector<std::string> outputs;
  for (const auto& t : raw.outputs) {
    auto it = producer.find(t);
    std::string id = it != producer.end() ? ids[it->second.first] : t;
    if (std::find(outputs.begin(), outputs.end(), id) == outputs.end()) outputs.push_back(id);
  }
  return ModelGraph::build(raw.name, std::move(nodes), std::move(inputs), std::move(raw.initializers),
                           std::move(outputs));
}

}  // namespace detail

// Decodes an ONNX ModelProto. Weight values are dropped; only shapes survive.
inline ModelGraph load_model(std::span<const std::uint8_t> bytes) {
  pb::Reader r(bytes);
  std::optional<RawGraph> graph;
  std::uint32_t f;
  pb::WireType wt;
  while (r.next(f, wt)) {
    if (f == onnx_field::model_graph) {
      if (wt != pb::length_delimited) r.fail("graph field has wrong wire type");
      graph = detail::decode_graph(r.read_message());
    } else {
      r.skip(wt);
    }
  }
  if (!graph) throw Error(ErrorKind::parse, "no graph in model at byte offset " + std::to_string(r.offset()));
  return detail::assemble(std::move(*graph));
}

inline ModelGraph load_model(std::string_view bytes) {
  return load_model(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

namespace detail {

inline std::string tensor_name(const InputRef& r) {
  if (r.kind != SourceKind::node || r.output_index == 0) return r.source;
  return r.source + ":" + std::to_string(r.output_index);
}

inline void encode_value_info(pb::Writer& w, std::uint32_t field, const std::string& name,
                              const std::vector<std::int64_t>& dims, DType dt) {
  using namespace onnx_field;
  pb::Writer tt;
  tt.varint_field(tensor_type_elem, dt == DType::f16 ? dt_float16 : dt_float);
  if (!dims.empty()) {
    pb::Writer shape;
    for (auto d : dims) {
      pb::Writer dim;
      if (d > 0) dim.varint_field(dim_value, static_cast<std::uint64_t>(d));
      else dim.string_field(dim_param, "N");
      shape.message_field(shape_dim, dim);
    }
    tt.message_field(tensor_type_shape, shape);
  }
  pb::Writer type;
  type.message_field(type_tensor, tt);
  pb::Writer vi;
  vi.string_field(value_name, name);
  vi.message_field(value_type, type);
  w.message_field(field, vi);
}

}  // namespace detail

// Encodes a graph as an ONNX ModelProto (shapes only, no weight payloads).
// Used to produce fixtures from the text format.
inline std::string encode_onnx(const ModelGraph& g) {
  using namespace onnx_field;
  pb::Writer graph;
  for (const auto& n : g.nodes()) {
    pb::Writer node;
    for (const auto& in : n.inputs) node.string_field(node_input, detail::tensor_name(in));
    for (int o = 0; o < n.num_outputs; ++o)
      node.string_field(node_output, o == 0 ? n.id : n.id + ":" + std::to_string(o));
    node.string_field(node_name, n.id);
    node.string_field(node_op_type, n.onnx_op.empty() ? to_string(n.op_type) : n.onnx_op);
    for (const auto& [key, value] : n.params) {
      if (n.onnx_op == "Constant" && key == "value") continue;
      pb::Writer a;
      a.string_field(attr_name, key);
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::int64_t>) {
              a.varint_field(attr_i, static_cast<std::uint64_t>(v));
              a.varint_field(attr_type, at_int);
            } else if constexpr (std::is_same_v<T, double>) {
              a.float_field(attr_f, static_cast<float>(v));
              a.varint_field(attr_type, at_float);
            } else if constexpr (std::is_same_v<T, IntList>) {
              a.packed_int64s(attr_int_list, v);
              a.varint_field(attr_type, at_ints);
            } else if constexpr (std::is_same_v<T, FloatList>) {
              a.packed_floats(attr_floats, v);
              a.varint_field(attr_type, at_floats);
            } else {
              a.string_field(attr_s, v);
              a.varint_field(attr_type, at_string);
            }
          },
          value);
      node.message_field(node_attribute, a);
    }
    if (n.onnx_op == "Constant" && !n.declared_out_dims.empty()) {
      pb::Writer t;
      t.packed_int64s(tensor_dims, n.declared_out_dims[0]);
      auto vals = attr_ints(n.params, "value");
      t.varint_field(tensor_data_type, vals ? dt_int64 : dt_float);
      if (vals) t.packed_int64s(tensor_int64_data, *vals);
      pb::Writer a;
      a.string_field(attr_name, "value");
      a.message_field(attr_t, t);
      a.varint_field(attr_type, at_tensor);
      node.message_field(node_attribute, a);
    }
    graph.message_field(graph_node, node);
  }
  graph.string_field(graph_name, g.name());
  for (const auto& [name, init] : g.initializers()) {
    pb::Writer t;
    t.packed_int64s(tensor_dims, init.shape.dims);
    t.varint_field(tensor_data_type, init.int_values ? dt_int64 : (init.shape.dtype == DType::f16 ? dt_float16 : dt_float));
    if (init.int_values) t.packed_int64s(tensor_int64_data, *init.int_values);
    t.string_field(tensor_name, name);
    graph.message_field(graph_initializer, t);
  }
  for (const auto& gi : g.graph_inputs()) detail::encode_value_info(graph, graph_input, gi.name, gi.dims, gi.dtype);
  for (const auto& out : g.graph_outputs()) detail::encode_value_info(graph, graph_output, out, {}, DType::f32);
  pb::Writer model;
  model.varint_field(1, 7);  // ir_version
  model.message_field(model_graph, graph);
  return model.bytes();
}

}  // namespace lbound
