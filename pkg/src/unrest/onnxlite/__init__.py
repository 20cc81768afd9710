"""Minimal ONNX support: parse, build and execute small inference graphs.

This subpackage exists because the backbone exchange format is an ONNX
file while the runtime dependency footprint stays numpy-only.  It speaks
the protobuf wire format directly (the ONNX schema subset needed for plain
convolutional feature extractors) and evaluates graphs with numpy.

Supported operators: Conv, Relu, MaxPool, AveragePool, Add,
BatchNormalization, Identity, Constant.
"""

from .graph import (
    Attribute,
    GraphBuilder,
    Node,
    OnnxError,
    OnnxGraph,
    OnnxModel,
    TensorData,
    ValueInfo,
    parse_model,
    serialize_model,
)
from .runtime import run_graph

__all__ = [
    "Attribute",
    "GraphBuilder",
    "Node",
    "OnnxError",
    "OnnxGraph",
    "OnnxModel",
    "TensorData",
    "ValueInfo",
    "parse_model",
    "serialize_model",
    "run_graph",
]
