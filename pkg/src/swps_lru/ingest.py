"""Dataset I/O: binary and text stroke formats, synthesis, splitting.

Binary layout (little-endian), one record per character::

    u16  record size in bytes, header included
    4B   tag, zero-padded on the right
    u16  stroke count
    i16  x, i16 y   ...repeated...
         (-1,  0)   ends a stroke
         (-1, -1)   ends the character (last pair of the record)

Text format, one character per line::

    tag SP stroke('|' stroke)*      stroke = point(';' point)*    point = x,y

Coordinates in the text format are written with ``repr`` so floats
round-trip exactly.  Tags must not contain spaces or newlines.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from .errors import ParseError, StructuralError
from .types import Dataset, RawSample, SplitSpec

_HEADER = struct.Struct("<H4sH")
_STROKE_END = (-1, 0)
_CHAR_END = (-1, -1)


def parse_stroke_binary(data: bytes, encoding: str = "latin-1"):
    """Decode a byte string of binary records into a list of samples.

    Truncated input raises :class:`ParseError` with the byte offset of the
    failing record; internally inconsistent records (bad stroke counts,
    missing terminators, empty strokes) raise :class:`StructuralError`.
    """
    samples = []
    pos = 0
    total = len(data)
    while pos < total:
        if total - pos < 2:
            raise ParseError("truncated record size field", offset=pos)
        (size,) = struct.unpack_from("<H", data, pos)
        if size < _HEADER.size + 4:
            raise StructuralError(f"record at offset {pos} declares size {size}, below the 12-byte minimum")
        if pos + size > total:
            raise ParseError(f"record declares {size} bytes but only {total - pos} remain", offset=pos)
        _, tag_raw, n_strokes = _HEADER.unpack_from(data, pos)
        body = data[pos + _HEADER.size : pos + size]
        if len(body) % 4 != 0:
            raise StructuralError(f"record at offset {pos} has a point payload of {len(body)} bytes, not a multiple of 4")
        pairs = np.frombuffer(body, dtype="<i2").reshape(-1, 2)
        strokes = []
        current = []
        terminated = False
        for j in range(pairs.shape[0]):
            x, y = int(pairs[j, 0]), int(pairs[j, 1])
            if (x, y) == _STROKE_END:
                if not current:
                    raise StructuralError(f"record at offset {pos}: empty stroke (stroke {len(strokes)})")
                strokes.append(np.array(current, dtype=np.float64))
                current = []
            elif (x, y) == _CHAR_END:
                if j != pairs.shape[0] - 1:
                    raise StructuralError(f"record at offset {pos}: data after the character terminator")
                if current:
                    raise StructuralError(f"record at offset {pos}: character terminator inside an open stroke")
                terminated = True
            else:
                current.append((float(x), float(y)))
        if not terminated:
            raise StructuralError(f"record at offset {pos}: missing character terminator")
        if len(strokes) != n_strokes:
            raise StructuralError(
                f"record at offset {pos}: header declares {n_strokes} strokes, payload holds {len(strokes)}"
            )
        try:
            tag = tag_raw.rstrip(b"\x00").decode(encoding)
        except UnicodeDecodeError as exc:
            raise ParseError(f"tag bytes {tag_raw!r} not decodable as {encoding}", offset=pos) from exc
        samples.append(RawSample(tag, strokes))
        pos += size
    return samples


def _encode_point(x: float, y: float) -> tuple:
    xi, yi = int(round(x)), int(round(y))
    if not (-32768 <= xi <= 32767 and -32768 <= yi <= 32767):
        raise StructuralError(f"point ({x}, {y}) outside the signed 16-bit range")
    if (xi, yi) in (_STROKE_END, _CHAR_END):
        raise StructuralError(f"point ({xi}, {yi}) collides with a reserved terminator pair")
    return xi, yi


def write_stroke_binary(samples, encoding: str = "latin-1") -> bytes:
    """Encode samples to the binary record format (inverse of the parser).

    Coordinates are rounded to the nearest integer; values outside the
    signed 16-bit range, or equal to a terminator pair, are rejected.
    """
    chunks = []
    for sample in samples:
        tag_bytes = sample.tag.encode(encoding)
        if len(tag_bytes) > 4:
            raise StructuralError(f"tag {sample.tag!r} encodes to {len(tag_bytes)} bytes, limit is 4")
        points = []
        for stroke in sample.strokes:
            for x, y in np.asarray(stroke, dtype=np.float64):
                points.append(_encode_point(x, y))
            points.append(_STROKE_END)
        points.append(_CHAR_END)
        size = _HEADER.size + 4 * len(points)
        if size > 0xFFFF:
            raise StructuralError(f"record for tag {sample.tag!r} needs {size} bytes, above the 16-bit size limit")
        body = struct.pack(f"<{2 * len(points)}h", *[c for p in points for c in p])
        chunks.append(_HEADER.pack(size, tag_bytes.ljust(4, b"\x00"), len(sample.strokes)) + body)
    return b"".join(chunks)


def parse_text_dataset(text: str) -> Dataset:
    """Parse the line-oriented text format into a Dataset.

    Blank lines are skipped; the label map is built from the sorted
    distinct tags.
    """
    samples = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        tag, sep, rest = line.partition(" ")
        if not sep or not tag or not rest.strip():
            raise ParseError("expected 'tag SP strokes'", line=lineno)
        strokes = []
        for stroke_text in rest.split("|"):
            stroke_text = stroke_text.strip()
            if not stroke_text:
                raise StructuralError(f"line {lineno}: empty stroke")
            points = []
            for point_text in stroke_text.split(";"):
                coords = point_text.split(",")
                if len(coords) != 2:
                    raise ParseError(f"point {point_text!r} is not 'x,y'", line=lineno)
                try:
                    points.append((float(coords[0]), float(coords[1])))
                except ValueError as exc:
                    raise ParseError(f"non-numeric coordinate in {point_text!r}", line=lineno) from exc
            strokes.append(np.array(points, dtype=np.float64))
        samples.append(RawSample(tag, strokes))
    return Dataset.from_samples(samples)


def serialize_text_dataset(data) -> str:
    """Render a Dataset (or sample list) in the text format, one line per sample."""
    samples = data.samples if isinstance(data, Dataset) else data
    lines = []
    for sample in samples:
        if " " in sample.tag or "\n" in sample.tag or not sample.tag:
            raise StructuralError(f"tag {sample.tag!r} cannot be written to the text format")
        strokes = "|".join(
            ";".join(f"{float(x)!r},{float(y)!r}" for x, y in np.asarray(s, dtype=np.float64)) for s in sample.strokes
        )
        lines.append(f"{sample.tag} {strokes}")
    return "\n".join(lines) + ("\n" if lines else "")


def _polyline(vertices, n: int) -> np.ndarray:
    """Arc-length resample a vertex chain to n evenly spaced points."""
    v = np.asarray(vertices, dtype=np.float64)
    seg = np.hypot(*np.diff(v, axis=0).T)
    pos = np.concatenate([[0.0], np.cumsum(seg)])
    where = np.linspace(0.0, pos[-1], n)
    return np.column_stack([np.interp(where, pos, v[:, 0]), np.interp(where, pos, v[:, 1])])


def _templates() -> dict:
    """Ten fixed glyph templates, t0..t9; t4 and t5 are two-stroke."""
    theta = np.linspace(0.0, 2.0 * math.pi, 48)
    spiral_t = np.linspace(0.0, 1.0, 60)
    spiral_r = 5.0 + 45.0 * spiral_t
    spiral_a = 4.0 * math.pi * spiral_t
    sine_x = np.linspace(0.0, 100.0, 40)
    return {
        "t0": [_polyline([(0, 100), (0, 0), (90, 0)], 24)],
        "t1": [_polyline([(0, 100), (85, 100), (0, 0), (85, 0)], 30)],
        "t2": [_polyline([(50, 95), (5, 5), (95, 5), (50, 95)], 33)],
        "t3": [np.column_stack([sine_x, 50.0 + 40.0 * np.sin(2.0 * math.pi * sine_x / 100.0)])],
        "t4": [_polyline([(50, 95), (50, 5)], 16), _polyline([(5, 50), (95, 50)], 16)],
        "t5": [_polyline([(5, 95), (95, 95)], 16), _polyline([(50, 95), (50, 5)], 16)],
        "t6": [np.column_stack([50.0 + spiral_r * np.cos(spiral_a), 50.0 + spiral_r * np.sin(spiral_a)])],
        "t7": [np.column_stack([50.0 + 45.0 * np.cos(theta), 50.0 + 45.0 * np.sin(theta)])],
        "t8": [_polyline([(10, 10), (90, 10), (90, 90), (10, 90), (10, 10)], 40)],
        "t9": [_polyline([(5, 5), (27, 95), (50, 25), (73, 95), (95, 5)], 40)],
    }


def synth_generate(n_classes: int, per_class: int, noise: float = 2.0, seed: int = 0) -> Dataset:
    """Jittered copies of the first n_classes templates, class-major.

    Every point of every stroke gets independent Gaussian noise of the
    given standard deviation (template units span roughly 0..100).
    Deterministic given the seed; noise 0 reproduces the templates exactly.
    """
    templates = sorted(_templates().items())
    if not 1 <= n_classes <= len(templates):
        raise ValueError(f"n_classes must be in [1, {len(templates)}], got {n_classes}")
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    if noise < 0:
        raise ValueError(f"noise must be >= 0, got {noise}")
    rng = np.random.default_rng(seed)
    samples = []
    for tag, strokes in templates[:n_classes]:
        for _ in range(per_class):
            jittered = [s + rng.normal(0.0, noise, s.shape) for s in strokes]
            samples.append(RawSample(tag, jittered))
    return Dataset.from_samples(samples)


def split_dataset(data, spec: SplitSpec):
    """Stratified split into (train, test) sharing one label map.

    Per class: shuffle deterministically, round down to train_fraction * n
    samples for training, remainder to test.  Original sample order is
    preserved inside each side.
    """
    ds = data if isinstance(data, Dataset) else Dataset.from_samples(data)
    if not 0.0 < spec.train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {spec.train_fraction}")
    rng = np.random.default_rng((spec.seed, 5))
    labels = ds.labels()
    train_idx = []
    test_idx = []
    for cls in range(ds.n_classes):
        idx = np.flatnonzero(labels == cls)
        if idx.size < 2:
            raise ValueError(f"class index {cls} has {idx.size} sample(s); need at least 2 to split")
        perm = idx[rng.permutation(idx.size)]
        n_train = int(math.floor(spec.train_fraction * idx.size))
        train_idx.extend(perm[:n_train].tolist())
        test_idx.extend(perm[n_train:].tolist())
    train = Dataset([ds.samples[i] for i in sorted(train_idx)], ds.label_map)
    test = Dataset([ds.samples[i] for i in sorted(test_idx)], ds.label_map)
    return train, test
