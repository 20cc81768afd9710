"""Loading and running the feature-extraction backbone.

The backbone is an opaque ONNX file with one float32 image input and three
named feature-map outputs ``feat1``/``feat2``/``feat3``, tapped at
increasing depth.  Channel counts and spatial strides are discovered by a
probe inference at load time, so any network honoring the naming contract
works, including the small fixed-weight test network used by the test
suite.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .onnxlite import OnnxError, parse_model, run_graph

OUTPUT_NAMES = ("feat1", "feat2", "feat3")


class BackboneError(Exception):
    """Backbone file missing, corrupt, or violating the I/O contract."""


@dataclass(frozen=True)
class LayerInfo:
    channels: int
    stride: int


class BackboneHandle:
    """An immutable, shareable inference handle for a loaded backbone."""

    def __init__(self, path: str, model, input_name: str, input_channels: int,
                 input_size: int, layers: tuple, file_sha256: str):
        self.path = str(path)
        self._model = model
        self.input_name = input_name
        self.input_channels = input_channels
        self.input_size = input_size
        self.layers = layers
        self.file_sha256 = file_sha256

    @classmethod
    def load(cls, path, input_size: int) -> "BackboneHandle":
        """Parse the ONNX file and probe it at ``input_size`` pixels.

        Raises :class:`BackboneError` if the file is unreadable, does not
        expose exactly the three contract outputs, or produces feature maps
        whose strides do not divide the input size.
        """
        path = Path(path)
        try:
            blob = path.read_bytes()
        except OSError as exc:
            raise BackboneError(f"cannot read backbone {path}: {exc}") from exc
        try:
            model = parse_model(blob)
        except OnnxError as exc:
            raise BackboneError(f"corrupt backbone {path}: {exc}") from exc

        graph = model.graph
        feed_inputs = [i for i in graph.inputs if i.name not in graph.initializers]
        if len(feed_inputs) != 1:
            raise BackboneError(
                f"backbone must have exactly one input, found {len(feed_inputs)}"
            )
        out_names = tuple(o.name for o in graph.outputs)
        if out_names != OUTPUT_NAMES:
            raise BackboneError(
                f"backbone outputs must be {OUTPUT_NAMES}, found {out_names}"
            )
        info = feed_inputs[0]
        channels = info.shape[1] if len(info.shape) == 4 and isinstance(info.shape[1], int) else 3

        probe = np.zeros((1, channels, input_size, input_size), dtype=np.float32)
        try:
            outs = run_graph(model, {info.name: probe})
        except OnnxError as exc:
            raise BackboneError(f"backbone probe inference failed: {exc}") from exc
        layers = []
        for name in OUTPUT_NAMES:
            arr = outs[name]
            if arr.ndim != 4 or arr.shape[2] != arr.shape[3]:
                raise BackboneError(f"{name}: expected square NCHW feature map, got {arr.shape}")
            if input_size % arr.shape[2] != 0:
                raise BackboneError(
                    f"{name}: spatial size {arr.shape[2]} does not divide input {input_size}"
                )
            layers.append(LayerInfo(channels=arr.shape[1], stride=input_size // arr.shape[2]))
        strides = [l.stride for l in layers]
        if strides != sorted(strides):
            raise BackboneError(f"feature strides must be non-decreasing, got {strides}")

        return cls(
            path=path,
            model=model,
            input_name=info.name,
            input_channels=channels,
            input_size=input_size,
            layers=tuple(layers),
            file_sha256=hashlib.sha256(blob).hexdigest(),
        )

    @property
    def layer_channels(self) -> tuple:
        return tuple(l.channels for l in self.layers)

    @property
    def total_channels(self) -> int:
        return sum(self.layer_channels)

    @property
    def finest_stride(self) -> int:
        return self.layers[0].stride

    def descriptor(self) -> dict:
        """Stable description used in the model fingerprint."""
        return {
            "input_size": self.input_size,
            "layers": [[l.channels, l.stride] for l in self.layers],
            "sha256": self.file_sha256,
        }

    def features(self, patches: np.ndarray) -> list:
        """Run a batch of patches; returns the three NCHW feature maps.

        ``patches`` is (N, size, size) or (N, C, size, size); single-channel
        input is replicated to the backbone's expected channel count.
        """
        x = np.asarray(patches, dtype=np.float32)
        if x.ndim == 3:
            x = x[:, None, :, :]
        if x.ndim != 4:
            raise BackboneError(f"expected a batch of patches, got shape {x.shape}")
        if x.shape[2] != self.input_size or x.shape[3] != self.input_size:
            raise BackboneError(
                f"patch size {x.shape[2:]} does not match backbone input {self.input_size}"
            )
        if x.shape[1] == 1 and self.input_channels > 1:
            x = np.repeat(x, self.input_channels, axis=1)
        elif x.shape[1] != self.input_channels:
            raise BackboneError(
                f"patch channels {x.shape[1]} incompatible with backbone input "
                f"channels {self.input_channels}"
            )
        outs = run_graph(self._model, {self.input_name: x})
        return [outs[name] for name in OUTPUT_NAMES]
