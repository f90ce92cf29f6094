// SPDX-License-Identifier: Apache-2.0
#pragma once

// Line-based graph format used for fixtures:
//
//   graph <name>
//   input <name> <d0xd1x...> [f16]          (N or ? for the batch dimension)
//   init <name> <d0xd1x...> [ints=a,b,...]  (weight shape; optional small int payload)
//   node <id> <op_type> inputs=<csv> [attrs=<k=v;...>] [outputs=<n>]
//   output <node id>
//
// Inputs name graph inputs, initializers or node ids (`id:k` selects output k).
// Attribute values: integer, comma-separated integer list, float, or string.
// `#` starts a comment.

#include <set>
#include <sstream>
#include <string>

#include "lbound/onnx.hpp"

namespace lbound {

namespace detail {

inline std::vector<std::int64_t> parse_dims(std::string_view text, int line) {
  std::vector<std::int64_t> dims;
  for (const auto& part : split(text, 'x')) {
    if (part == "N" || part == "?") {
      dims.push_back(-1);
      continue;
    }
    auto v = parse_int(part);
    if (!v || *v < 1)
      throw Error(ErrorKind::parse, "line " + std::to_string(line) + ": bad dimension '" + part + "'");
    dims.push_back(*v);
  }
  return dims;
}

inline AttrValue parse_attr_value(const std::string& v) {
  auto parts = split(v, ',');
  IntList ints;
  bool all_int = true;
  for (const auto& p : parts) {
    auto i = parse_int(p);
    if (!i) {
      all_int = false;
      break;
    }
    ints.push_back(*i);
  }
  if (all_int) {
    if (ints.size() == 1) return ints[0];
    return ints;
  }
  if (parts.size() == 1)
    if (auto f = parse_double(v)) return *f;
  FloatList floats;
  for (const auto& p : parts) {
    auto f = parse_double(p);
    if (!f) return v;
    floats.push_back(*f);
  }
  return floats;
}

inline std::string render_attr_value(const AttrValue& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::int64_t>) return std::to_string(x);
        else if constexpr (std::is_same_v<T, double>) {
          auto s = format_double(x);
          if (s.find_first_of(".e") == std::string::npos) s += ".0";
          return s;
        } else if constexpr (std::is_same_v<T, IntList>) {
          std::string s;
          for (std::size_t i = 0; i < x.size(); ++i) s += (i ? "," : "") + std::to_string(x[i]);
          return s;
        } else if constexpr (std::is_same_v<T, FloatList>) {
          std::string s;
          for (std::size_t i = 0; i < x.size(); ++i) s += (i ? "," : "") + format_double(x[i]);
          return s;
        } else {
          return x;
        }
      },
      v);
}

}  // namespace detail

inline ModelGraph parse_text_graph(std::string_view text) {
  RawGraph raw;
  std::set<std::string> node_ids;
  raw.name = "model";
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorKind::parse, "line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    const auto& kw = tok[0];
    if (kw == "graph") {
      if (tok.size() != 2) fail("expected 'graph <name>'");
      raw.name = tok[1];
    } else if (kw == "input") {
      if (tok.size() < 3 || tok.size() > 4) fail("expected 'input <name> <dims> [dtype]'");
      GraphInput gi{tok[1], detail::parse_dims(tok[2], lineno), tok.size() == 4 ? parse_dtype(tok[3]) : DType::f32};
      raw.inputs.push_back(std::move(gi));
    } else if (kw == "init") {
      if (tok.size() < 3 || tok.size() > 4) fail("expected 'init <name> <dims> [ints=...]'");
      Initializer init{tok[1], {detail::parse_dims(tok[2], lineno), DType::f32}, std::nullopt};
      if (tok.size() == 4) {
        if (!starts_with(tok[3], "ints=")) fail("unknown init option '" + tok[3] + "'");
        IntList vals;
        for (const auto& p : split(tok[3].substr(5), ',')) {
          auto v = parse_int(p);
          if (!v) fail("bad integer '" + p + "'");
          vals.push_back(*v);
        }
        init.int_values = vals;
      }
      raw.initializers.push_back(std::move(init));
    } else if (kw == "node") {
      if (tok.size() < 3) fail("expected 'node <id> <op_type> inputs=<csv> attrs=<k=v;...>'");
      if (!node_ids.insert(tok[1]).second)
        throw Error(ErrorKind::structure, "line " + std::to_string(lineno) + ": duplicate node id '" + tok[1] + "'");
      RawNode n;
      n.name = tok[1];
      n.op_type = tok[2];
      int outputs = 1;
      for (std::size_t i = 3; i < tok.size(); ++i) {
        const auto& t = tok[i];
        if (starts_with(t, "inputs=")) {
          auto csv = t.substr(7);
          if (!csv.empty())
            for (auto& s : split(csv, ',')) n.inputs.push_back(s);
        } else if (starts_with(t, "attrs=")) {
          auto body = t.substr(6);
          if (body.empty()) continue;
          for (const auto& kv : split(body, ';')) {
            if (kv.empty()) continue;
            auto eq = kv.find('=');
            if (eq == std::string::npos || eq == 0) fail("bad attribute '" + kv + "'");
            n.attrs[kv.substr(0, eq)] = detail::parse_attr_value(kv.substr(eq + 1));
          }
        } else if (starts_with(t, "outputs=")) {
          auto v = parse_int(t.substr(8));
          if (!v || *v < 1) fail("bad output count");
          outputs = static_cast<int>(*v);
        } else {
          fail("unexpected token '" + t + "'");
        }
      }
      for (int o = 0; o < outputs; ++o) n.outputs.push_back(o == 0 ? n.name : n.name + ":" + std::to_string(o));
      raw.nodes.push_back(std::move(n));
    } else if (kw == "output") {
      if (tok.size() != 2) fail("expected 'output <id>'");
      raw.outputs.push_back(tok[1]);
    } else {
      fail("unknown directive '" + kw + "'");
    }
  }
  return detail::assemble(std::move(raw));
}

inline std::string write_text_graph(const ModelGraph& g) {
  std::ostringstream out;
  auto dims = [](const std::vector<std::int64_t>& d) {
    std::string s;
    for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "x" : "") + (d[i] < 1 ? std::string("N") : std::to_string(d[i]));
    return s;
  };
  out << "graph " << g.name() << "\n";
  for (const auto& gi : g.graph_inputs())
    out << "input " << gi.name << " " << dims(gi.dims) << (gi.dtype == DType::f16 ? " f16" : "") << "\n";
  for (const auto& [name, init] : g.initializers()) {
    out << "init " << name << " " << dims(init.shape.dims);
    if (init.int_values) out << " ints=" << detail::render_attr_value(*init.int_values);
    out << "\n";
  }
  for (const auto& n : g.nodes()) {
    out << "node " << n.id << " " << (n.onnx_op.empty() ? to_string(n.op_type) : n.onnx_op) << " inputs=";
    for (std::size_t i = 0; i < n.inputs.size(); ++i) out << (i ? "," : "") << detail::tensor_name(n.inputs[i]);
    if (!n.params.empty()) {
      out << " attrs=";
      bool first = true;
      for (const auto& [k, v] : n.params) {
        out << (first ? "" : ";") << k << "=" << detail::render_attr_value(v);
        first = false;
      }
    }
    if (n.num_outputs > 1) out << " outputs=" << n.num_outputs;
    out << "\n";
  }
  for (const auto& o : g.graph_outputs()) out << "output " << o << "\n";
  return out.str();
}

// Dispatches on content: ONNX binary or the text format.
inline ModelGraph load_model_file(const std::string& path) {
  auto bytes = read_file(path);
  auto ends_with = [&](std::string_view suf) {
    return path.size() >= suf.size() && path.compare(path.size() - suf.size(), suf.size(), suf) == 0;
  };
  if (ends_with(".onnx")) return load_model(bytes);
  return parse_text_graph(bytes);
}

}  // namespace lbound
