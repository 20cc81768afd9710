"""Numpy evaluation of the supported ONNX operator subset.

Graphs are executed in node order (ONNX graphs are topologically sorted).
Only the operators emitted by plain convolutional backbones are handled;
anything else raises :class:`OnnxError` up front rather than mid-run.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .graph import OnnxError, OnnxModel


def _conv(x, weight, bias, strides, pads, dilations, group):
    if group != 1:
        raise OnnxError("grouped convolution is not supported")
    sh, sw = strides
    dh, dw = dilations
    ph0, pw0, ph1, pw1 = pads
    xp = np.pad(x, ((0, 0), (0, 0), (ph0, ph1), (pw0, pw1)))
    kh, kw = weight.shape[2], weight.shape[3]
    eh, ew = (kh - 1) * dh + 1, (kw - 1) * dw + 1
    win = sliding_window_view(xp, (eh, ew), axis=(2, 3))
    win = win[:, :, ::sh, ::sw, ::dh, ::dw]
    y = np.einsum("nchwuv,ocuv->nohw", win, weight, optimize=True)
    if bias is not None:
        y = y + bias[None, :, None, None]
    return np.ascontiguousarray(y)


def _max_pool(x, kernel, strides, pads):
    kh, kw = kernel
    sh, sw = strides
    ph0, pw0, ph1, pw1 = pads
    xp = np.pad(
        x,
        ((0, 0), (0, 0), (ph0, ph1), (pw0, pw1)),
        constant_values=-np.inf,
    )
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::sh, ::sw]
    return np.ascontiguousarray(win.max(axis=(-2, -1)))


def _average_pool(x, kernel, strides):
    kh, kw = kernel
    sh, sw = strides
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::sh, ::sw]
    return np.ascontiguousarray(win.mean(axis=(-2, -1), dtype=x.dtype))


def _batch_norm(x, scale, bias, mean, var, epsilon):
    inv = scale / np.sqrt(var + epsilon)
    return x * inv[None, :, None, None] + (bias - mean * inv)[None, :, None, None]


def _ints(node, name, default):
    value = node.attr(name, default)
    return [int(v) for v in value]


def run_graph(model: OnnxModel, feeds: dict, output_names=None) -> dict:
    """Execute ``model`` on the given input arrays.

    ``feeds`` maps graph input names to numpy arrays; returns a dict of the
    requested output names (defaults to the graph's declared outputs).
    """
    graph = model.graph
    values = dict(graph.initializers)
    declared = {info.name for info in graph.inputs}
    for name, array in feeds.items():
        if name not in declared:
            raise OnnxError(f"unknown graph input {name!r}")
        values[name] = np.asarray(array)
    missing = declared - set(values)
    if missing:
        raise OnnxError(f"missing graph inputs: {sorted(missing)}")

    for node in graph.nodes:
        op = node.op_type
        ins = [values[n] if n else None for n in node.inputs]
        if op == "Conv":
            kh, kw = ins[1].shape[2], ins[1].shape[3]
            out = _conv(
                ins[0],
                ins[1],
                ins[2] if len(ins) > 2 else None,
                _ints(node, "strides", [1, 1]),
                _ints(node, "pads", [0, 0, 0, 0]),
                _ints(node, "dilations", [1, 1]),
                int(node.attr("group", 1)),
            )
        elif op == "Relu":
            out = np.maximum(ins[0], 0)
        elif op == "MaxPool":
            if int(node.attr("ceil_mode", 0)) != 0:
                raise OnnxError("MaxPool ceil_mode is not supported")
            out = _max_pool(
                ins[0],
                _ints(node, "kernel_shape", None),
                _ints(node, "strides", [1, 1]),
                _ints(node, "pads", [0, 0, 0, 0]),
            )
        elif op == "AveragePool":
            if _ints(node, "pads", [0, 0, 0, 0]) != [0, 0, 0, 0]:
                raise OnnxError("AveragePool with padding is not supported")
            out = _average_pool(
                ins[0],
                _ints(node, "kernel_shape", None),
                _ints(node, "strides", [1, 1]),
            )
        elif op == "Add":
            out = ins[0] + ins[1]
        elif op == "BatchNormalization":
            out = _batch_norm(ins[0], ins[1], ins[2], ins[3], ins[4], float(node.attr("epsilon", 1e-5)))
        elif op == "Identity":
            out = ins[0]
        elif op == "Constant":
            out = node.attr("value").array
        else:
            raise OnnxError(f"unsupported operator {op!r}")
        for out_name in node.outputs:
            values[out_name] = out

    wanted = output_names or [info.name for info in graph.outputs]
    results = {}
    for name in wanted:
        if name not in values:
            raise OnnxError(f"graph did not produce output {name!r}")
        results[name] = values[name]
    return results
