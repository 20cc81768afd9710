"""ONNX model representation: parse from and serialize to protobuf bytes.

Field numbers follow the public ONNX schema (ModelProto and friends).
Serialization is deterministic: identical models produce identical bytes,
and no timestamps or environment-dependent metadata are emitted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import wire
from .wire import field_bytes, field_string, field_varint, iter_fields, to_signed


class OnnxError(Exception):
    """Unreadable or unsupported ONNX payload."""


# TensorProto.DataType values
DTYPE_TO_ONNX = {"float32": 1, "uint8": 2, "int8": 3, "int32": 6, "int64": 7, "float64": 11}
ONNX_TO_DTYPE = {v: k for k, v in DTYPE_TO_ONNX.items()}

# AttributeProto.AttributeType values
ATTR_FLOAT, ATTR_INT, ATTR_STRING, ATTR_TENSOR = 1, 2, 3, 4
ATTR_FLOATS, ATTR_INTS, ATTR_STRINGS = 6, 7, 8


@dataclass
class Attribute:
    name: str
    type: int
    value: object


@dataclass
class Node:
    op_type: str
    inputs: list
    outputs: list
    name: str = ""
    attrs: dict = field(default_factory=dict)

    def attr(self, name, default=None):
        a = self.attrs.get(name)
        return default if a is None else a.value


@dataclass
class ValueInfo:
    """Graph input/output declaration; shape entries are int or str (symbolic)."""

    name: str
    elem_type: int = 1
    shape: tuple = ()


@dataclass
class TensorData:
    name: str
    array: np.ndarray


@dataclass
class OnnxGraph:
    name: str = ""
    nodes: list = field(default_factory=list)
    initializers: dict = field(default_factory=dict)  # name -> np.ndarray
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)


@dataclass
class OnnxModel:
    graph: OnnxGraph
    opset: int = 11
    ir_version: int = 8
    producer_name: str = ""
    producer_version: str = ""


# ---------------------------------------------------------------------------
# parsing


def _parse_tensor(buf: bytes) -> TensorData:
    dims, data_type, name = [], 1, ""
    raw = None
    float_data, int_data, double_data = [], [], []
    for fnum, wtype, value in iter_fields(buf):
        if fnum == 1:
            if wtype == wire.VARINT:
                dims.append(to_signed(value))
            else:
                dims.extend(wire.decode_packed_varints(value))
        elif fnum == 2:
            data_type = value
        elif fnum == 4:
            if wtype == wire.LEN:
                float_data.extend(np.frombuffer(value, dtype="<f4").tolist())
            else:
                float_data.append(np.frombuffer(value, dtype="<f4")[0])
        elif fnum == 7:
            if wtype == wire.VARINT:
                int_data.append(to_signed(value))
            else:
                int_data.extend(wire.decode_packed_varints(value))
        elif fnum == 8:
            name = value.decode("utf-8")
        elif fnum == 9:
            raw = value
        elif fnum == 10:
            if wtype == wire.LEN:
                double_data.extend(np.frombuffer(value, dtype="<f8").tolist())
    if data_type not in ONNX_TO_DTYPE:
        raise OnnxError(f"tensor {name!r}: unsupported data type {data_type}")
    dtype = ONNX_TO_DTYPE[data_type]
    if raw is not None:
        array = np.frombuffer(raw, dtype=np.dtype(dtype).newbyteorder("<")).astype(dtype)
    elif float_data and dtype == "float32":
        array = np.asarray(float_data, dtype=dtype)
    elif double_data and dtype == "float64":
        array = np.asarray(double_data, dtype=dtype)
    elif int_data:
        array = np.asarray(int_data, dtype=dtype)
    else:
        array = np.zeros(0, dtype=dtype)
    try:
        array = array.reshape(dims)
    except ValueError as exc:
        raise OnnxError(f"tensor {name!r}: data does not match dims {dims}") from exc
    return TensorData(name=name, array=array)


def _parse_attribute(buf: bytes) -> Attribute:
    name, atype = "", 0
    f_val, i_val, s_val, t_val = None, None, None, None
    floats, ints, strings = [], [], []
    for fnum, wtype, value in iter_fields(buf):
        if fnum == 1:
            name = value.decode("utf-8")
        elif fnum == 2:
            f_val = float(np.frombuffer(value, dtype="<f4")[0])
        elif fnum == 3:
            i_val = to_signed(value)
        elif fnum == 4:
            s_val = value
        elif fnum == 5:
            t_val = _parse_tensor(value)
        elif fnum == 7:
            if wtype == wire.LEN:
                floats.extend(np.frombuffer(value, dtype="<f4").tolist())
            else:
                floats.append(float(np.frombuffer(value, dtype="<f4")[0]))
        elif fnum == 8:
            if wtype == wire.VARINT:
                ints.append(to_signed(value))
            else:
                ints.extend(wire.decode_packed_varints(value))
        elif fnum == 9:
            strings.append(value)
        elif fnum == 20:
            atype = value
    if atype == 0:  # infer for producers that omit the type field
        if i_val is not None:
            atype = ATTR_INT
        elif f_val is not None:
            atype = ATTR_FLOAT
        elif ints:
            atype = ATTR_INTS
        elif floats:
            atype = ATTR_FLOATS
        elif t_val is not None:
            atype = ATTR_TENSOR
        elif s_val is not None:
            atype = ATTR_STRING
    value_by_type = {
        ATTR_FLOAT: f_val,
        ATTR_INT: i_val,
        ATTR_STRING: s_val,
        ATTR_TENSOR: t_val,
        ATTR_FLOATS: floats,
        ATTR_INTS: ints,
        ATTR_STRINGS: strings,
    }
    if atype not in value_by_type:
        raise OnnxError(f"attribute {name!r}: unsupported attribute type {atype}")
    return Attribute(name=name, type=atype, value=value_by_type[atype])


def _parse_node(buf: bytes) -> Node:
    node = Node(op_type="", inputs=[], outputs=[])
    for fnum, _wtype, value in iter_fields(buf):
        if fnum == 1:
            node.inputs.append(value.decode("utf-8"))
        elif fnum == 2:
            node.outputs.append(value.decode("utf-8"))
        elif fnum == 3:
            node.name = value.decode("utf-8")
        elif fnum == 4:
            node.op_type = value.decode("utf-8")
        elif fnum == 5:
            attr = _parse_attribute(value)
            node.attrs[attr.name] = attr
    return node


def _parse_value_info(buf: bytes) -> ValueInfo:
    name, elem_type, shape = "", 1, []
    for fnum, _wtype, value in iter_fields(buf):
        if fnum == 1:
            name = value.decode("utf-8")
        elif fnum == 2:  # TypeProto
            for f2, _w2, v2 in iter_fields(value):
                if f2 != 1:  # tensor_type
                    continue
                for f3, _w3, v3 in iter_fields(v2):
                    if f3 == 1:
                        elem_type = v3
                    elif f3 == 2:  # TensorShapeProto
                        for f4, _w4, v4 in iter_fields(v3):
                            if f4 != 1:
                                continue
                            dim_value, dim_param = None, None
                            for f5, _w5, v5 in iter_fields(v4):
                                if f5 == 1:
                                    dim_value = to_signed(v5)
                                elif f5 == 2:
                                    dim_param = v5.decode("utf-8")
                            shape.append(dim_value if dim_value is not None else dim_param)
    return ValueInfo(name=name, elem_type=elem_type, shape=tuple(shape))


def _parse_graph(buf: bytes) -> OnnxGraph:
    graph = OnnxGraph()
    for fnum, _wtype, value in iter_fields(buf):
        if fnum == 1:
            graph.nodes.append(_parse_node(value))
        elif fnum == 2:
            graph.name = value.decode("utf-8")
        elif fnum == 5:
            tensor = _parse_tensor(value)
            graph.initializers[tensor.name] = tensor.array
        elif fnum == 11:
            graph.inputs.append(_parse_value_info(value))
        elif fnum == 12:
            graph.outputs.append(_parse_value_info(value))
    return graph


def parse_model(data: bytes) -> OnnxModel:
    """Parse serialized ONNX bytes into an :class:`OnnxModel`."""
    graph, opset, ir_version = None, 0, 0
    producer_name = producer_version = ""
    try:
        for fnum, _wtype, value in iter_fields(data):
            if fnum == 1:
                ir_version = value
            elif fnum == 2:
                producer_name = value.decode("utf-8")
            elif fnum == 3:
                producer_version = value.decode("utf-8")
            elif fnum == 7:
                graph = _parse_graph(value)
            elif fnum == 8:  # OperatorSetIdProto
                domain, version = "", 0
                for f2, _w2, v2 in iter_fields(value):
                    if f2 == 1:
                        domain = v2.decode("utf-8")
                    elif f2 == 2:
                        version = to_signed(v2)
                if domain == "":
                    opset = max(opset, version)
    except wire.WireError as exc:
        raise OnnxError(f"malformed ONNX payload: {exc}") from exc
    if graph is None:
        raise OnnxError("no graph found in ONNX payload")
    return OnnxModel(
        graph=graph,
        opset=opset or 11,
        ir_version=ir_version or 8,
        producer_name=producer_name,
        producer_version=producer_version,
    )


# ---------------------------------------------------------------------------
# serialization


def _serialize_tensor(name: str, array: np.ndarray) -> bytes:
    dtype = str(array.dtype)
    if dtype not in DTYPE_TO_ONNX:
        raise OnnxError(f"tensor {name!r}: unsupported dtype {dtype}")
    out = bytearray()
    for d in array.shape:
        out += field_varint(1, d)
    out += field_varint(2, DTYPE_TO_ONNX[dtype])
    out += field_string(8, name)
    out += field_bytes(9, np.ascontiguousarray(array).astype(np.dtype(dtype).newbyteorder("<")).tobytes())
    return bytes(out)


def _serialize_attribute(attr: Attribute) -> bytes:
    out = bytearray()
    out += field_string(1, attr.name)
    if attr.type == ATTR_FLOAT:
        out += wire.field_float(2, attr.value)
    elif attr.type == ATTR_INT:
        out += field_varint(3, attr.value)
    elif attr.type == ATTR_STRING:
        raw = attr.value if isinstance(attr.value, bytes) else str(attr.value).encode("utf-8")
        out += field_bytes(4, raw)
    elif attr.type == ATTR_TENSOR:
        out += field_bytes(5, _serialize_tensor(attr.value.name, attr.value.array))
    elif attr.type == ATTR_FLOATS:
        for v in attr.value:
            out += wire.field_float(7, v)
    elif attr.type == ATTR_INTS:
        for v in attr.value:
            out += field_varint(8, v)
    elif attr.type == ATTR_STRINGS:
        for v in attr.value:
            out += field_bytes(9, v)
    else:
        raise OnnxError(f"attribute {attr.name!r}: unsupported attribute type {attr.type}")
    out += field_varint(20, attr.type)
    return bytes(out)


def _serialize_node(node: Node) -> bytes:
    out = bytearray()
    for name in node.inputs:
        out += field_string(1, name)
    for name in node.outputs:
        out += field_string(2, name)
    if node.name:
        out += field_string(3, node.name)
    out += field_string(4, node.op_type)
    for attr_name in sorted(node.attrs):
        out += field_bytes(5, _serialize_attribute(node.attrs[attr_name]))
    return bytes(out)


def _serialize_value_info(info: ValueInfo) -> bytes:
    shape = bytearray()
    for dim in info.shape:
        if isinstance(dim, str):
            dim_bytes = field_string(2, dim)
        else:
            dim_bytes = field_varint(1, int(dim))
        shape += field_bytes(1, dim_bytes)
    tensor_type = field_varint(1, info.elem_type) + field_bytes(2, bytes(shape))
    type_proto = field_bytes(1, tensor_type)
    return field_string(1, info.name) + field_bytes(2, type_proto)


def _serialize_graph(graph: OnnxGraph) -> bytes:
    out = bytearray()
    for node in graph.nodes:
        out += field_bytes(1, _serialize_node(node))
    if graph.name:
        out += field_string(2, graph.name)
    for name, array in graph.initializers.items():
        out += field_bytes(5, _serialize_tensor(name, array))
    for info in graph.inputs:
        out += field_bytes(11, _serialize_value_info(info))
    for info in graph.outputs:
        out += field_bytes(12, _serialize_value_info(info))
    return bytes(out)


def serialize_model(model: OnnxModel) -> bytes:
    """Serialize to ONNX protobuf bytes (deterministic field order)."""
    out = bytearray()
    out += field_varint(1, model.ir_version)
    if model.producer_name:
        out += field_string(2, model.producer_name)
    if model.producer_version:
        out += field_string(3, model.producer_version)
    opset = field_string(1, "") + field_varint(2, model.opset)
    out += field_bytes(8, opset)
    out += field_bytes(7, _serialize_graph(model.graph))
    return bytes(out)


class GraphBuilder:
    """Incremental construction of a plain feed-forward ONNX graph."""

    def __init__(self, name: str = "net", opset: int = 11):
        self.graph = OnnxGraph(name=name)
        self.opset = opset
        self._counter = 0

    def fresh(self, stem: str) -> str:
        self._counter += 1
        return f"{stem}_{self._counter}"

    def add_input(self, name: str, shape: tuple, elem_type: int = 1):
        self.graph.inputs.append(ValueInfo(name=name, elem_type=elem_type, shape=shape))

    def add_output(self, name: str, shape: tuple, elem_type: int = 1):
        self.graph.outputs.append(ValueInfo(name=name, elem_type=elem_type, shape=shape))

    def add_initializer(self, name: str, array: np.ndarray):
        self.graph.initializers[name] = array

    def add_node(self, op_type: str, inputs: list, outputs: list, **attrs):
        node = Node(op_type=op_type, inputs=list(inputs), outputs=list(outputs))
        for name, value in attrs.items():
            node.attrs[name] = _attribute_from_python(name, value)
        self.graph.nodes.append(node)
        return outputs[0]

    def model(self) -> OnnxModel:
        return OnnxModel(graph=self.graph, opset=self.opset)


def _attribute_from_python(name: str, value) -> Attribute:
    if isinstance(value, bool):
        return Attribute(name, ATTR_INT, int(value))
    if isinstance(value, int):
        return Attribute(name, ATTR_INT, value)
    if isinstance(value, float):
        return Attribute(name, ATTR_FLOAT, value)
    if isinstance(value, (bytes, str)):
        return Attribute(name, ATTR_STRING, value)
    if isinstance(value, np.ndarray):
        return Attribute(name, ATTR_TENSOR, TensorData(name=name, array=value))
    if isinstance(value, (list, tuple)):
        if all(isinstance(v, int) for v in value):
            return Attribute(name, ATTR_INTS, list(value))
        if all(isinstance(v, (int, float)) for v in value):
            return Attribute(name, ATTR_FLOATS, [float(v) for v in value])
    raise OnnxError(f"cannot infer attribute type for {name!r}={value!r}")
