#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Regenerates the ONNX fixtures and their expectation files.

Expected shapes come from onnx's reference shape inference and MACs are
computed here from those shapes, so the C++ loader and inference are checked
against an independent implementation.

    python3 tests/data/make_fixtures.py
"""
import json
import os

import onnx
from onnx import TensorProto, helper, shape_inference

HERE = os.path.dirname(os.path.abspath(__file__))


def weight(name, dims):
    # Dims only; weight values are irrelevant to the loader.
    t = TensorProto()
    t.name = name
    t.data_type = TensorProto.FLOAT
    t.dims.extend(dims)
    return t


def int_tensor(name, vals):
    return helper.make_tensor(name, TensorProto.INT64, [len(vals)], vals)


def mixed_model():
    nodes, inits = [], []

    def w(name, dims):
        inits.append(weight(name, dims))
        return name

    nodes.append(helper.make_node("Conv", ["data", w("c1_w", [16, 3, 3, 3])], ["c1"], name="c1",
                                  kernel_shape=[3, 3], pads=[1, 1, 1, 1], strides=[1, 1]))
    nodes.append(helper.make_node("BatchNormalization",
                                  ["c1", w("bn_s", [16]), w("bn_b", [16]), w("bn_m", [16]), w("bn_v", [16])],
                                  ["bn"], name="bn", epsilon=1e-5))
    nodes.append(helper.make_node("Relu", ["bn"], ["r1"], name="r1"))
    nodes.append(helper.make_node("MaxPool", ["r1"], ["p1"], name="p1", kernel_shape=[2, 2], strides=[2, 2]))
    nodes.append(helper.make_node("Conv", ["p1", w("c2_w", [32, 16, 3, 3]), w("c2_b", [32])], ["c2"], name="c2",
                                  kernel_shape=[3, 3], auto_pad="SAME_UPPER", strides=[2, 2]))
    nodes.append(helper.make_node("Conv", ["p1", w("dw_w", [16, 1, 3, 3])], ["dw"], name="dw",
                                  kernel_shape=[3, 3], pads=[1, 1, 1, 1], strides=[2, 2], group=16))
    nodes.append(helper.make_node("Concat", ["c2", "dw"], ["cat"], name="cat", axis=1))
    nodes.append(helper.make_node("AveragePool", ["cat"], ["ap"], name="ap", kernel_shape=[3, 3], strides=[1, 1],
                                  pads=[1, 1, 1, 1]))
    nodes.append(helper.make_node("Sigmoid", ["ap"], ["sg"], name="sg"))
    nodes.append(helper.make_node("Mul", ["ap", "sg"], ["mul"], name="mul"))
    nodes.append(helper.make_node("GlobalAveragePool", ["mul"], ["gap"], name="gap"))
    inits.append(int_tensor("shape", [0, -1]))
    nodes.append(helper.make_node("Reshape", ["gap", "shape"], ["flat"], name="flat"))
    nodes.append(helper.make_node("Gemm", ["flat", w("fc_w", [10, 48]), w("fc_b", [10])], ["fc"], name="fc",
                                  transB=1))
    nodes.append(helper.make_node("Dropout", ["fc"], ["drop"], name="drop"))
    nodes.append(helper.make_node("Softmax", ["drop"], ["prob"], name="prob", axis=1))
    nodes.append(helper.make_node("Unsqueeze", ["prob"], ["unsq"], name="unsq", axes=[2]))
    nodes.append(helper.make_node("Tanh", ["unsq"], ["out"], name="tanh"))
    graph = helper.make_graph(
        nodes, "mixed",
        [helper.make_tensor_value_info("data", TensorProto.FLOAT, ["N", 3, 32, 32])],
        [helper.make_tensor_value_info("out", TensorProto.FLOAT, None)],
        initializer=inits)
    return helper.make_model(graph, opset_imports=[helper.make_opsetid("", 11)])


def opaque_model():
    # An operator outside the supported set, with declared output shape.
    nodes = [
        helper.make_node("Relu", ["x"], ["r"], name="r"),
        helper.make_node("LRN", ["r"], ["lrn"], name="lrn", size=5),
        helper.make_node("NonMaxSuppressionLike", ["lrn"], ["custom"], name="custom", domain="com.example"),
        helper.make_node("Relu", ["custom"], ["y"], name="y"),
    ]
    graph = helper.make_graph(
        nodes, "opaque",
        [helper.make_tensor_value_info("x", TensorProto.FLOAT, ["N", 8, 4, 4])],
        [helper.make_tensor_value_info("y", TensorProto.FLOAT, None)],
        value_info=[helper.make_tensor_value_info("custom", TensorProto.FLOAT, ["N", 8, 2, 2])])
    return helper.make_model(graph, opset_imports=[helper.make_opsetid("", 11),
                                                   helper.make_opsetid("com.example", 1)])


def bound(model, batch):
    m = onnx.ModelProto()
    m.CopyFrom(model)
    for vi in m.graph.input:
        dim = vi.type.tensor_type.shape.dim[0]
        dim.Clear()
        dim.dim_value = batch
    return m


def inferred_shapes(model):
    m = shape_inference.infer_shapes(model)
    shapes = {}
    for vi in list(m.graph.value_info) + list(m.graph.output):
        dims = [d.dim_value for d in vi.type.tensor_type.shape.dim]
        if dims and all(d > 0 for d in dims):
            shapes[vi.name] = dims
    return shapes


def prod(xs):
    p = 1
    for x in xs:
        p *= x
    return p


def macs(model, shapes):
    weights = {t.name: list(t.dims) for t in model.graph.initializer}
    total = {}
    for n in model.graph.node:
        if n.op_type == "Conv":
            w = weights[n.input[1]]
            y = shapes[n.output[0]]
            total[n.name] = y[0] * w[0] * w[1] * prod(w[2:]) * prod(y[2:])
        elif n.op_type == "Gemm":
            w = weights[n.input[1]]
            y = shapes[n.output[0]]
            total[n.name] = y[0] * y[1] * w[1]
    return total


def main():
    for name, model in (("mixed", mixed_model()), ("opaque", opaque_model())):
        onnx.save(model, os.path.join(HERE, name + ".onnx"))
        expect = {}
        for batch in (1, 4):
            b = bound(model, batch)
            shapes = inferred_shapes(b) if name == "mixed" else {}
            expect[str(batch)] = {"shapes": shapes, "macs": macs(b, shapes) if shapes else {}}
        with open(os.path.join(HERE, name + ".expect.json"), "w") as f:
            json.dump(expect, f, indent=1, sort_keys=True)
            f.write("\n")


if __name__ == "__main__":
    main()
