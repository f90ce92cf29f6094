// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "lbound/model_ir.hpp"

namespace lbound {

namespace detail {

[[noreturn]] inline void shape_fail(const std::string& id, const std::string& msg) {
  throw Error(ErrorKind::inference, "node '" + id + "': " + msg);
}

[[noreturn]] inline void shape_conflict(const std::string& id, const TensorShape& a, const TensorShape& b,
                                        const std::string& what) {
  throw Error(ErrorKind::inference,
              "node '" + id + "': " + what + " between [" + a.to_string() + "] and [" + b.to_string() + "]");
}

inline std::int64_t norm_axis(const std::string& id, std::int64_t axis, std::size_t rank) {
  auto r = static_cast<std::int64_t>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) shape_fail(id, "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(r));
  return axis;
}

// Numpy-style multidirectional broadcast.
inline TensorShape broadcast(const std::string& id, const TensorShape& a, const TensorShape& b) {
  auto rank = std::max(a.rank(), b.rank());
  TensorShape out{std::vector<std::int64_t>(rank, 1), a.dtype};
  for (std::size_t i = 0; i < rank; ++i) {
    auto da = i + a.rank() >= rank ? a.dims[i + a.rank() - rank] : 1;
    auto db = i + b.rank() >= rank ? b.dims[i + b.rank() - rank] : 1;
    if (da != db && da != 1 && db != 1) shape_conflict(id, a, b, "elementwise shape mismatch");
    out.dims[i] = std::max(da, db);
  }
  return out;
}

// Output extent of a sliding window along one axis.
inline std::int64_t window_out(std::int64_t in, std::int64_t k, std::int64_t stride, std::int64_t pb,
                               std::int64_t pe, std::int64_t dilation, bool ceil_mode) {
  auto span = in + pb + pe - dilation * (k - 1) - 1;
  if (span < 0) return 0;
  auto q = span / stride;
  if (ceil_mode && span % stride != 0) ++q;
  return q + 1;
}

// Fills kernel_shape/strides/pads/dilations for windowed ops and resolves auto_pad.
inline void normalize_window(const std::string& id, Attributes& p, const TensorShape& x, const IntList& kernel,
                             bool has_dilation) {
  auto spatial = kernel.size();
  if (x.rank() != spatial + 2)
    shape_fail(id, "input [" + x.to_string() + "] has rank incompatible with kernel of " +
                       std::to_string(spatial) + " spatial dims");
  auto strides = attr_ints(p, "strides").value_or(IntList(spatial, 1));
  auto dilations = attr_ints(p, "dilations").value_or(IntList(spatial, 1));
  auto pads = attr_ints(p, "pads").value_or(IntList(2 * spatial, 0));
  if (strides.size() != spatial || dilations.size() != spatial || pads.size() != 2 * spatial)
    shape_fail(id, "window attribute arity does not match kernel rank");
  auto auto_pad = attr_string(p, "auto_pad").value_or("NOTSET");
  if (auto_pad == "SAME_UPPER" || auto_pad == "SAME_LOWER") {
    for (std::size_t i = 0; i < spatial; ++i) {
      auto in = x.dims[2 + i];
      auto out = (in + strides[i] - 1) / strides[i];
      auto total = std::max<std::int64_t>(0, (out - 1) * strides[i] + dilations[i] * (kernel[i] - 1) + 1 - in);
      auto small = total / 2, large = total - total / 2;
      pads[i] = auto_pad == "SAME_UPPER" ? small : large;
      pads[i + spatial] = auto_pad == "SAME_UPPER" ? large : small;
    }
  } else if (auto_pad == "VALID") {
    std::fill(pads.begin(), pads.end(), 0);
  }
  p.erase("auto_pad");
  p["kernel_shape"] = kernel;
  p["strides"] = strides;
  p["pads"] = pads;
  if (has_dilation) p["dilations"] = dilations;
  else p.erase("dilations");
}

inline std::vector<std::int64_t> window_dims(const Attributes& p, const TensorShape& x, std::int64_t channels) {
  auto kernel = *attr_ints(p, "kernel_shape");
  auto strides = *attr_ints(p, "strides");
  auto pads = *attr_ints(p, "pads");
  auto dilations = attr_ints(p, "dilations").value_or(IntList(kernel.size(), 1));
  bool ceil_mode = attr_int(p, "ceil_mode").value_or(0) != 0;
  std::vector<std::int64_t> dims{x.dims[0], channels};
  for (std::size_t i = 0; i < kernel.size(); ++i)
    dims.push_back(window_out(x.dims[2 + i], kernel[i], strides[i], pads[i], pads[i + kernel.size()],
                              dilations[i], ceil_mode));
  return dims;
}

// Keeps only the listed attribute keys.
inline void keep_only(Attributes& p, std::initializer_list<const char*> keys) {
  Attributes kept;
  for (auto k : keys) {
    auto it = p.find(k);
    if (it != p.end()) kept.emplace(it->first, it->second);
  }
  p = std::move(kept);
}

}  // namespace detail

struct LayerShapes {
  Attributes params;  // normalized (defaults filled, auto_pad resolved)
  std::vector<TensorShape> out_shapes;
};

// Shape rule for one layer given its input shapes (weights included, ONNX order).
// Pure function of (op, params, inputs); shared by graph inference and by the
// benchmark simulator, which only sees signatures.
inline LayerShapes infer_layer(const std::string& id, OpType op, Attributes p, const std::vector<TensorShape>& in,
                               int num_outputs = 1,
                               const std::vector<std::vector<std::int64_t>>& declared_out = {},
                               bool has_activation_input = true) {
  using namespace detail;
  auto need = [&](std::size_t n) {
    if (in.size() < n)
      shape_fail(id, std::string(to_string(op)) + " expects at least " + std::to_string(n) + " inputs, got " +
                         std::to_string(in.size()));
  };
  for (const auto& s : in)
    for (auto d : s.dims)
      if (d < 1) shape_fail(id, "input shape [" + s.to_string() + "] has non-positive dimension");

  LayerShapes r;
  auto same = [&](const TensorShape& s) { r.out_shapes.assign(std::max(num_outputs, 1), s); };
  DType dt = in.empty() ? DType::f32 : in[0].dtype;

  switch (op) {
    case OpType::Conv: {
      need(2);
      const auto& x = in[0];
      const auto& w = in[1];
      if (x.rank() < 3) shape_fail(id, "Conv input [" + x.to_string() + "] must have rank >= 3");
      if (w.rank() != x.rank()) shape_conflict(id, x, w, "Conv weight rank mismatch");
      auto kernel = attr_ints(p, "kernel_shape").value_or(IntList(w.dims.begin() + 2, w.dims.end()));
      if (kernel != IntList(w.dims.begin() + 2, w.dims.end())) shape_conflict(id, x, w, "kernel_shape disagrees with weight");
      auto group = attr_int(p, "group").value_or(1);
      if (group < 1 || x.dims[1] % group != 0 || w.dims[1] * group != x.dims[1])
        shape_conflict(id, x, w, "Conv channel/group mismatch");
      if (w.dims[0] % group != 0) shape_conflict(id, x, w, "Conv filter count not divisible by group");
      if (in.size() > 2 && in[2].element_count() != w.dims[0])
        shape_conflict(id, w, in[2], "Conv bias length mismatch");
      normalize_window(id, p, x, kernel, true);
      p["group"] = group;
      keep_only(p, {"kernel_shape", "strides", "pads", "dilations", "group"});
      auto dims = window_dims(p, x, w.dims[0]);
      for (auto d : dims)
        if (d < 1) shape_fail(id, "Conv output would be empty for input [" + x.to_string() + "]");
      r.out_shapes.push_back({dims, dt});
      break;
    }
    case OpType::MaxPool:
    case OpType::AveragePool: {
      need(1);
      const auto& x = in[0];
      auto kernel = attr_ints(p, "kernel_shape");
      if (!kernel) shape_fail(id, "pooling without kernel_shape");
      normalize_window(id, p, x, *kernel, op == OpType::MaxPool);
      if (attr_int(p, "ceil_mode").value_or(0) == 0) p.erase("ceil_mode");
      if (op == OpType::AveragePool) {
        if (attr_int(p, "count_include_pad").value_or(0) == 0) p.erase("count_include_pad");
        keep_only(p, {"kernel_shape", "strides", "pads", "ceil_mode", "count_include_pad"});
      } else {
        if (auto d = attr_ints(p, "dilations"); d && std::all_of(d->begin(), d->end(), [](auto v) { return v == 1; }))
          p.erase("dilations");
        keep_only(p, {"kernel_shape", "strides", "pads", "dilations", "ceil_mode"});
      }
      auto dims = window_dims(p, x, x.dims[1]);
      for (auto d : dims)
        if (d < 1) shape_fail(id, "pool output would be empty for input [" + x.to_string() + "]");
      same({dims, dt});
      break;
    }
    case OpType::GlobalAveragePool: {
      need(1);
      if (in[0].rank() < 3) shape_fail(id, "GlobalAveragePool input [" + in[0].to_string() + "] must have rank >= 3");
      auto dims = in[0].dims;
      std::fill(dims.begin() + 2, dims.end(), 1);
      p.clear();
      same({dims, dt});
      break;
    }
    case OpType::Gemm: {
      need(2);
      auto ta = attr_int(p, "transA").value_or(0);
      auto tb = attr_int(p, "transB").value_or(0);
      const auto& a = in[0];
      const auto& b = in[1];
      if (a.rank() != 2 || b.rank() != 2) shape_conflict(id, a, b, "Gemm operands must be rank 2");
      auto m = ta ? a.dims[1] : a.dims[0];
      auto ka = ta ? a.dims[0] : a.dims[1];
      auto kb = tb ? b.dims[1] : b.dims[0];
      auto n = tb ? b.dims[0] : b.dims[1];
      if (ka != kb) shape_conflict(id, a, b, "Gemm inner dimension mismatch");
      TensorShape y{{m, n}, dt};
      if (in.size() > 2) {
        auto c = broadcast(id, y, in[2]);
        if (c.dims != y.dims) shape_conflict(id, y, in[2], "Gemm bias not broadcastable to output");
      }
      p["transA"] = ta;
      p["transB"] = tb;
      p["alpha"] = attr_float(p, "alpha").value_or(1.0);
      p["beta"] = attr_float(p, "beta").value_or(1.0);
      keep_only(p, {"transA", "transB", "alpha", "beta"});
      r.out_shapes.push_back(y);
      break;
    }
    case OpType::MatMul: {
      need(2);
      auto a = in[0], b = in[1];
      bool va = a.rank() == 1, vb = b.rank() == 1;
      if (va) a.dims.insert(a.dims.begin(), 1);
      if (vb) b.dims.push_back(1);
      if (a.dims.back() != b.dims[b.rank() - 2]) shape_conflict(id, in[0], in[1], "MatMul inner dimension mismatch");
      TensorShape ba{{a.dims.begin(), a.dims.end() - 2}, dt};
      TensorShape bb{{b.dims.begin(), b.dims.end() - 2}, dt};
      auto batch = broadcast(id, ba, bb);
      auto dims = batch.dims;
      if (!va) dims.push_back(a.dims[a.rank() - 2]);
      if (!vb) dims.push_back(b.dims.back());
      p.clear();
      r.out_shapes.push_back({dims, dt});
      break;
    }
    case OpType::Relu:
    case OpType::Sigmoid:
    case OpType::Tanh:
    case OpType::Identity:
      need(1);
      p.clear();
      same(in[0]);
      break;
    case OpType::Dropout:
      need(1);
      p.clear();
      same(in[0]);
      break;
    case OpType::Softmax:
      need(1);
      p["axis"] = norm_axis(id, attr_int(p, "axis").value_or(1), in[0].rank());
      keep_only(p, {"axis"});
      same(in[0]);
      break;
    case OpType::BatchNorm: {
      need(5);
      if (in[0].rank() < 2) shape_fail(id, "BatchNorm input [" + in[0].to_string() + "] must have rank >= 2");
      for (std::size_t i = 1; i < 5; ++i)
        if (in[i].element_count() != in[0].dims[1]) shape_conflict(id, in[0], in[i], "BatchNorm parameter length mismatch");
      p["epsilon"] = attr_float(p, "epsilon").value_or(1e-5);
      keep_only(p, {"epsilon"});
      r.out_shapes.push_back(in[0]);
      break;
    }
    case OpType::Add:
    case OpType::Mul: {
      need(2);
      auto out = in[0];
      for (std::size_t i = 1; i < in.size(); ++i) out = broadcast(id, out, in[i]);
      out.dtype = dt;
      p.clear();
      r.out_shapes.push_back(out);
      break;
    }
    case OpType::Concat: {
      need(1);
      auto axis = norm_axis(id, attr_int(p, "axis").value_or(1), in[0].rank());
      auto out = in[0];
      for (std::size_t i = 1; i < in.size(); ++i) {
        if (in[i].rank() != out.rank()) shape_conflict(id, in[0], in[i], "Concat rank mismatch");
        for (std::size_t d = 0; d < out.rank(); ++d) {
          if (static_cast<std::int64_t>(d) == axis) continue;
          if (in[i].dims[d] != in[0].dims[d]) shape_conflict(id, in[0], in[i], "Concat shape mismatch");
        }
        out.dims[axis] += in[i].dims[axis];
      }
      p["axis"] = axis;
      keep_only(p, {"axis"});
      r.out_shapes.push_back(out);
      break;
    }
    case OpType::Flatten: {
      need(1);
      auto rank = static_cast<std::int64_t>(in[0].rank());
      auto axis = attr_int(p, "axis").value_or(1);
      if (axis < 0) axis += rank;
      if (axis < 0 || axis > rank) shape_fail(id, "Flatten axis out of range");
      std::int64_t outer = 1, inner = 1;
      for (std::int64_t d = 0; d < rank; ++d) (d < axis ? outer : inner) *= in[0].dims[d];
      p["axis"] = axis;
      keep_only(p, {"axis"});
      r.out_shapes.push_back({{outer, inner}, dt});
      break;
    }
    case OpType::Reshape: {
      need(1);
      auto target = attr_ints(p, "shape");
      if (!target) shape_fail(id, "Reshape target shape unknown (not a constant)");
      std::vector<std::int64_t> dims;
      std::int64_t known = 1;
      int infer_at = -1;
      for (std::size_t i = 0; i < target->size(); ++i) {
        auto v = (*target)[i];
        if (v == 0) {
          if (i >= in[0].rank()) shape_fail(id, "Reshape copies a dimension beyond input rank");
          v = in[0].dims[i];
        }
        if (v == -1) {
          if (infer_at >= 0) shape_fail(id, "Reshape with more than one -1");
          infer_at = static_cast<int>(i);
          dims.push_back(1);
          continue;
        }
        if (v < 1) shape_fail(id, "Reshape target has invalid dimension");
        known *= v;
        dims.push_back(v);
      }
      auto total = in[0].element_count();
      if (infer_at >= 0) {
        if (total % known != 0) shape_conflict(id, in[0], TensorShape{dims, dt}, "Reshape element count mismatch");
        dims[infer_at] = total / known;
      } else if (known != total) {
        shape_conflict(id, in[0], TensorShape{dims, dt}, "Reshape element count mismatch");
      }
      keep_only(p, {"shape"});
      r.out_shapes.push_back({dims, dt});
      break;
    }
    case OpType::Unsqueeze: {
      need(1);
      auto axes = attr_ints(p, "axes");
      if (!axes) shape_fail(id, "Unsqueeze without axes");
      auto out_rank = in[0].rank() + axes->size();
      IntList norm;
      for (auto a : *axes) norm.push_back(norm_axis(id, a, out_rank));
      std::sort(norm.begin(), norm.end());
      if (std::adjacent_find(norm.begin(), norm.end()) != norm.end()) shape_fail(id, "Unsqueeze repeated axis");
      std::vector<std::int64_t> dims;
      std::size_t src = 0;
      for (std::size_t d = 0; d < out_rank; ++d) {
        if (std::binary_search(norm.begin(), norm.end(), static_cast<std::int64_t>(d))) dims.push_back(1);
        else dims.push_back(in[0].dims[src++]);
      }
      p["axes"] = norm;
      keep_only(p, {"axes"});
      r.out_shapes.push_back({dims, dt});
      break;
    }
    case OpType::Squeeze: {
      need(1);
      IntList norm;
      if (auto axes = attr_ints(p, "axes")) {
        for (auto a : *axes) norm.push_back(norm_axis(id, a, in[0].rank()));
      } else {
        for (std::size_t d = 0; d < in[0].rank(); ++d)
          if (in[0].dims[d] == 1) norm.push_back(static_cast<std::int64_t>(d));
      }
      std::sort(norm.begin(), norm.end());
      std::vector<std::int64_t> dims;
      for (std::size_t d = 0; d < in[0].rank(); ++d) {
        bool drop = std::binary_search(norm.begin(), norm.end(), static_cast<std::int64_t>(d));
        if (drop && in[0].dims[d] != 1) shape_fail(id, "Squeeze of non-unit axis in [" + in[0].to_string() + "]");
        if (!drop) dims.push_back(in[0].dims[d]);
      }
      if (dims.empty()) dims.push_back(1);
      p["axes"] = norm;
      keep_only(p, {"axes"});
      r.out_shapes.push_back({dims, dt});
      break;
    }
    case OpType::Transpose: {
      need(1);
      auto rank = in[0].rank();
      IntList perm = attr_ints(p, "perm").value_or(IntList{});
      if (perm.empty())
        for (std::size_t d = 0; d < rank; ++d) perm.push_back(static_cast<std::int64_t>(rank - 1 - d));
      if (perm.size() != rank) shape_fail(id, "Transpose perm arity mismatch");
      std::vector<std::int64_t> dims;
      for (auto a : perm) dims.push_back(in[0].dims[norm_axis(id, a, rank)]);
      p["perm"] = perm;
      keep_only(p, {"perm"});
      r.out_shapes.push_back({dims, dt});
      break;
    }
    case OpType::Opaque: {
      // Unknown semantics: trust declared output dims when present, otherwise
      // assume the output mirrors the first input.
      int outs = std::max(num_outputs, 1);
      for (int o = 0; o < outs; ++o) {
        std::vector<std::int64_t> dims;
        if (o < static_cast<int>(declared_out.size()) && !declared_out[o].empty()) {
          dims = declared_out[o];
          if (has_activation_input && !in.empty() && !dims.empty()) dims[0] = in[0].dims[0];
          for (auto d : dims)
            if (d < 1) shape_fail(id, "opaque operator output has unresolved dimension");
        } else if (!in.empty()) {
          dims = in[0].dims;
        } else {
          shape_fail(id, "opaque operator without inputs or declared output shape");
        }
        r.out_shapes.push_back({dims, dt});
      }
      break;
    }
  }
  r.params = std::move(p);
  return r;
}

// Multiply-accumulate count for one layer; zero for everything but Conv/Gemm/MatMul.
inline std::int64_t layer_macs(OpType op, const Attributes& p, const std::vector<TensorShape>& in,
                               const std::vector<TensorShape>& out) {
  switch (op) {
    case OpType::Conv: {
      const auto& w = in[1];
      const auto& y = out[0];
      std::int64_t spatial_out = 1;
      for (std::size_t i = 2; i < y.rank(); ++i) spatial_out *= y.dims[i];
      std::int64_t kernel = 1;
      for (std::size_t i = 2; i < w.rank(); ++i) kernel *= w.dims[i];
      // w.dims[1] is already C/g.
      return y.dims[0] * w.dims[0] * w.dims[1] * kernel * spatial_out;
    }
    case OpType::Gemm: {
      auto ta = attr_int(p, "transA").value_or(0);
      auto k = ta ? in[0].dims[0] : in[0].dims[1];
      return out[0].dims[0] * out[0].dims[1] * k;
    }
    case OpType::MatMul: {
      auto k = in[0].dims.back();
      return out[0].element_count() * k;
    }
    default:
      return 0;
  }
}

// Propagates shapes in topological order. Graph inputs get their leading
// dimension replaced by `batch`. Returns a new graph; the input is untouched.
inline ModelGraph infer_shapes(const ModelGraph& g, std::int64_t batch) {
  if (batch < 1) throw Error(ErrorKind::config, "batch must be positive");
  std::map<std::string, TensorShape> input_shapes;
  auto inputs = g.graph_inputs();
  for (auto& gi : inputs) {
    if (!gi.dims.empty()) gi.dims[0] = batch;
    TensorShape s{gi.dims, gi.dtype};
    for (auto d : s.dims)
      if (d < 1) throw Error(ErrorKind::inference, "graph input '" + gi.name + "' has unresolved dimension");
    input_shapes.emplace(gi.name, s);
  }
  auto nodes = g.nodes();
  for (auto idx : topo_indices(g)) {
    auto& n = nodes[idx];
    n.in_shapes.clear();
    bool has_act = false;
    for (const auto& in : n.inputs) {
      switch (in.kind) {
        case SourceKind::graph_input:
          n.in_shapes.push_back(input_shapes.at(in.source));
          has_act = true;
          break;
        case SourceKind::initializer:
          n.in_shapes.push_back(g.find_initializer(in.source)->shape);
          break;
        case SourceKind::node: {
          const auto& p = nodes[g.index_of(in.source)];
          if (in.output_index >= static_cast<int>(p.out_shapes.size()))
            throw Error(ErrorKind::inference, "node '" + n.id + "' reads missing output " +
                                                  std::to_string(in.output_index) + " of '" + p.id + "'");
          n.in_shapes.push_back(p.out_shapes[in.output_index]);
          has_act = true;
          break;
        }
      }
    }
    // Opaque layers keep their original attributes; inference only fills shapes.
    auto r = infer_layer(n.id, n.op_type, n.params, n.in_shapes, n.num_outputs, n.declared_out_dims, has_act);
    if (n.op_type != OpType::Opaque) n.params = std::move(r.params);
    n.out_shapes = std::move(r.out_shapes);
    n.macs = n.op_type == OpType::Opaque ? 0 : layer_macs(n.op_type, n.params, n.in_shapes, n.out_shapes);
    n.shapes_inferred = true;
  }
  return g.with_nodes(std::move(nodes), std::move(inputs));
}

struct MacReport {
  std::map<std::string, std::int64_t> per_node;
  std::int64_t total = 0;
};

inline MacReport macs(const ModelGraph& g) {
  MacReport r;
  for (const auto& n : g.nodes()) {
    if (!n.shapes_inferred) throw Error(ErrorKind::state, "shapes not inferred for node '" + n.id + "'");
    r.per_node[n.id] = n.macs;
    r.total += n.macs;
  }
  return r;
}

}  // namespace lbound
