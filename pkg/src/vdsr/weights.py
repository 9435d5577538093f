"""Binary weight files.

Layout (all little-endian)::

    b"VDSR"                       magic
    u16 version, depth, width, in_channels, out_channels
    per layer: f32 weights in (out, in, ky, kx) order, then f32 biases
    u64 checksum: first 8 bytes of BLAKE2b over everything before it
"""

import hashlib
import struct

import numpy as np

from .errors import CorruptWeightsError
from .network import VdsrModel
from .tensor import ConvParams

MAGIC = b"VDSR"
VERSION = 1
_HEADER = struct.Struct("<4s5H")
_CHECKSUM = struct.Struct("<Q")


def _checksum(payload):
    return _CHECKSUM.unpack(hashlib.blake2b(payload, digest_size=8).digest())[0]


def to_bytes(model):
    parts = [_HEADER.pack(MAGIC, VERSION, model.depth, model.width, 1, 1)]
    for layer in model.layers:
        parts.append(layer.weight.astype("<f4").tobytes())
        parts.append(layer.bias.astype("<f4").tobytes())
    payload = b"".join(parts)
    return payload + _CHECKSUM.pack(_checksum(payload))


def _layer_shapes(depth, width, cin, cout):
    chans = [cin] + [width] * (depth - 1) + [cout]
    return list(zip(chans[1:], chans[:-1]))


def from_bytes(blob, dtype=np.float32):
    if len(blob) < _HEADER.size + _CHECKSUM.size:
        raise CorruptWeightsError("weight file is truncated")
    magic, version, depth, width, cin, cout = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CorruptWeightsError("not a VDSR weight file (bad magic)")
    if version != VERSION:
        raise CorruptWeightsError(f"unsupported weight format version {version}")
    if depth < 2 or cin != 1 or cout != 1:
        raise CorruptWeightsError(f"invalid header depth={depth} in={cin} out={cout}")
    shapes = _layer_shapes(depth, width, cin, cout)
    n_floats = sum(co * ci * 9 + co for co, ci in shapes)
    if len(blob) != _HEADER.size + 4 * n_floats + _CHECKSUM.size:
        raise CorruptWeightsError(f"file length {len(blob)} does not match declared shapes")
    payload, (stored,) = blob[:-_CHECKSUM.size], _CHECKSUM.unpack(blob[-_CHECKSUM.size:])
    if _checksum(payload) != stored:
        raise CorruptWeightsError("weight file checksum mismatch")
    values = np.frombuffer(payload, dtype="<f4", offset=_HEADER.size)
    layers = []
    pos = 0
    for co, ci in shapes:
        w = values[pos:pos + co * ci * 9].reshape(co, ci, 3, 3)
        pos += w.size
        b = values[pos:pos + co]
        pos += co
        layers.append(ConvParams(w.astype(dtype), b.astype(dtype)))
    return VdsrModel(layers)


def save(path, model):
    data = to_bytes(model)
    with open(path, "wb") as fh:
        fh.write(data)


def load(path, dtype=np.float32):
    with open(path, "rb") as fh:
        return from_bytes(fh.read(), dtype)
