#!/usr/bin/env python3
"""Generate the small fixed-weight test backbone (tests/fixtures/tiny_backbone.onnx).

Three feature stages at strides 4 / 8 / 16 with 16 / 32 / 64 channels and
random seed-pinned conv weights.  The first stage uses zero-mean
(edge-detector-like) kernels and strided convs, so it responds to
pixel-scale noise and texture but barely to smooth fields; the deeper
stages downsample with 2x2 average pools that attenuate noise while
aggregated large-scale structure survives.  This mirrors how trained
backbones behave: shallow taps are noise-sensitive, deep taps semantic.  Spatial dims are
symbolic so any input size the strides divide works (the test suite uses
32- and 64-pixel patches).  Deterministic: rerunning writes byte-identical
output.
"""

import argparse
from pathlib import Path

import numpy as np

from unrest.onnxlite import GraphBuilder, serialize_model

SEED = 2024
CHANNELS = (16, 32, 64)


def _he(rng, shape, zero_mean=False):
    fan_in = shape[1] * shape[2] * shape[3]
    w = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
    if zero_mean:
        # edge-detector-like kernels: no DC response, blind to smooth fields
        w = w - w.mean(axis=(1, 2, 3), keepdims=True)
    return w.astype(np.float32)


def build_tiny_backbone() -> bytes:
    rng = np.random.Generator(np.random.Philox(SEED))
    b = GraphBuilder("tiny_backbone", opset=11)
    b.add_input("input", ("N", 3, "H", "W"))

    c1, c2, c3 = CHANNELS

    def conv(name, src, dst, shape, stride=1, zero_mean=False):
        b.add_initializer(f"{name}_w", _he(rng, shape, zero_mean))
        b.add_initializer(f"{name}_b", (rng.standard_normal(shape[0]) * 0.05).astype(np.float32))
        b.add_node(
            "Conv",
            [src, f"{name}_w", f"{name}_b"],
            [dst],
            kernel_shape=[shape[2], shape[3]],
            strides=[stride, stride],
            pads=[shape[2] // 2] * 4,
        )

    def pool(src, dst):
        b.add_node("AveragePool", [src], [dst], kernel_shape=[2, 2], strides=[2, 2])

    conv("stem", "input", "stem_raw", (c1, 3, 3, 3), zero_mean=True)
    b.add_node("Relu", ["stem_raw"], ["stem"])

    conv("s1a", "stem", "s1a_raw", (c1, c1, 3, 3), stride=2, zero_mean=True)
    b.add_node("Relu", ["s1a_raw"], ["s1a"])
    conv("s1b", "s1a", "s1b_raw", (c1, c1, 3, 3), stride=2, zero_mean=True)
    b.add_node("Relu", ["s1b_raw"], ["feat1"])

    pool("feat1", "p2")
    conv("s2", "p2", "s2_raw", (c2, c1, 3, 3))
    b.add_node("Relu", ["s2_raw"], ["feat2"])

    pool("feat2", "p3")
    conv("s3", "p3", "s3_raw", (c3, c2, 3, 3))
    b.add_node("Relu", ["s3_raw"], ["feat3"])

    b.add_output("feat1", ("N", c1, "H4", "W4"))
    b.add_output("feat2", ("N", c2, "H8", "W8"))
    b.add_output("feat3", ("N", c3, "H16", "W16"))
    return serialize_model(b.model())


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    default_out = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "tiny_backbone.onnx"
    parser.add_argument("--out", type=Path, default=default_out)
    args = parser.parse_args()
    blob = build_tiny_backbone()
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_bytes(blob)
    print(f"wrote {args.out} ({len(blob)} bytes)")


if __name__ == "__main__":
    main()
