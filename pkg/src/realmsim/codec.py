"""Canonical CBOR subset used for every on-wire and on-disk structure.

Supported items: integers, byte strings, text strings, arrays, and maps
with integer keys. Encoding is deterministic: definite lengths only,
minimal-length integer heads, map keys in ascending order. The decoder
rejects anything the encoder cannot produce, so decode(encode(x)) == x
and encode(decode(b)) == b for every accepted b.
"""

from .errors import DecodeError

_MAJOR_UINT = 0
_MAJOR_NEGINT = 1
_MAJOR_BYTES = 2
_MAJOR_TEXT = 3
_MAJOR_ARRAY = 4
_MAJOR_MAP = 5


def _encode_head(major: int, value: int) -> bytes:
    base = major << 5
    if value < 24:
        return bytes([base | value])
    if value <= 0xFF:
        return bytes([base | 24, value])
    if value <= 0xFFFF:
        return bytes([base | 25]) + value.to_bytes(2, "big")
    if value <= 0xFFFFFFFF:
        return bytes([base | 26]) + value.to_bytes(4, "big")
    if value <= 0xFFFFFFFFFFFFFFFF:
        return bytes([base | 27]) + value.to_bytes(8, "big")
    raise ValueError("integer too large for canonical encoding")


def encode(obj) -> bytes:
    out = bytearray()
    _encode_into(out, obj)
    return bytes(out)


def _encode_into(out: bytearray, obj) -> None:
    if isinstance(obj, bool):
        raise TypeError("booleans are not part of the wire subset")
    if isinstance(obj, int):
        if obj >= 0:
            out += _encode_head(_MAJOR_UINT, obj)
        else:
            out += _encode_head(_MAJOR_NEGINT, -1 - obj)
    elif isinstance(obj, (bytes, bytearray, memoryview)):
        data = bytes(obj)
        out += _encode_head(_MAJOR_BYTES, len(data))
        out += data
    elif isinstance(obj, str):
        data = obj.encode("utf-8")
        out += _encode_head(_MAJOR_TEXT, len(data))
        out += data
    elif isinstance(obj, (list, tuple)):
        out += _encode_head(_MAJOR_ARRAY, len(obj))
        for item in obj:
            _encode_into(out, item)
    elif isinstance(obj, dict):
        keys = list(obj.keys())
        for k in keys:
            if not isinstance(k, int) or isinstance(k, bool) or k < 0:
                raise TypeError("map keys must be non-negative integers")
        keys.sort()
        out += _encode_head(_MAJOR_MAP, len(keys))
        for k in keys:
            _encode_into(out, k)
            _encode_into(out, obj[k])
    else:
        raise TypeError(f"cannot encode {type(obj).__name__}")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("truncated input", self.pos)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def head(self):
        start = self.pos
        initial = self.take(1)[0]
        major = initial >> 5
        info = initial & 0x1F
        if info < 24:
            return major, info
        if info == 24:
            value = self.take(1)[0]
            minimum = 24
        elif info == 25:
            value = int.from_bytes(self.take(2), "big")
            minimum = 0x100
        elif info == 26:
            value = int.from_bytes(self.take(4), "big")
            minimum = 0x10000
        elif info == 27:
            value = int.from_bytes(self.take(8), "big")
            minimum = 0x100000000
        else:
            raise DecodeError("indefinite or reserved length", start)
        if value < minimum:
            raise DecodeError("non-minimal integer head", start)
        return major, value

    def item(self):
        start = self.pos
        major, value = self.head()
        if major == _MAJOR_UINT:
            return value
        if major == _MAJOR_NEGINT:
            return -1 - value
        if major == _MAJOR_BYTES:
            return self.take(value)
        if major == _MAJOR_TEXT:
            raw = self.take(value)
            try:
                return raw.decode("utf-8")
            except UnicodeDecodeError:
                raise DecodeError("invalid utf-8 in text string", start)
        if major == _MAJOR_ARRAY:
            return [self.item() for _ in range(value)]
        if major == _MAJOR_MAP:
            result = {}
            prev_key = None
            for _ in range(value):
                key_start = self.pos
                key = self.item()
                if not isinstance(key, int) or key < 0:
                    raise DecodeError("map key is not a non-negative integer", key_start)
                if prev_key is not None and key <= prev_key:
                    raise DecodeError("map keys not in ascending order", key_start)
                prev_key = key
                result[key] = self.item()
            return result
        raise DecodeError(f"unsupported major type {major}", start)


def decode(data: bytes):
    reader = _Reader(data)
    value = reader.item()
    if reader.pos != len(data):
        raise DecodeError("trailing bytes after value", reader.pos)
    return value
