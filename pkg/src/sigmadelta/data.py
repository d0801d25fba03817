"""Dataset plumbing: IDX container IO, temporal reshuffling, random fixtures.

The IDX format is the classic big-endian container used for digit images
(magic 0x00000803 for ubyte image cubes, 0x00000801 for ubyte label
vectors).  Gzipped files are detected and handled transparently.
"""

import gzip
import json
import struct
from dataclasses import dataclass

import numpy as np

from .network import LayerSpec, NetworkSpec

__all__ = [
    "FrameDataset",
    "load_idx",
    "save_idx",
    "temporal_reshuffle",
    "gen_random_network",
    "gen_random_stream",
]

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


@dataclass
class FrameDataset:
    """An ordered set of equal-width frames with optional integer labels.

    ordering records how the frames were arranged: 'original' as produced,
    'temporal' after similarity reshuffling.
    """

    frames: np.ndarray
    labels: np.ndarray = None
    ordering: str = "original"

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise ValueError("frames must be a 2-D (n, width) array")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.frames.shape[0],):
                raise ValueError("labels must align 1:1 with frames")
        if self.ordering not in ("original", "temporal"):
            raise ValueError(f"unknown ordering {self.ordering!r}")

    def __len__(self):
        return self.frames.shape[0]

    @property
    def width(self):
        return self.frames.shape[1]


def _open_maybe_gz(path):
    with open(path, "rb") as f:
        head = f.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(f, n, path):
    data = f.read(n)
    if len(data) != n:
        raise ValueError(f"truncated IDX file: {path}")
    return data


def load_idx(image_path, label_path=None):
    """Load an IDX image file (plus optional labels) as a FrameDataset.

    Pixels come out as float64 in [0, 1]; images are flattened row-major
    to width rows*cols.
    """
    with _open_maybe_gz(image_path) as f:
        magic, count, rows, cols = struct.unpack(
            ">IIII", _read_exact(f, 16, image_path))
        if magic != IMAGE_MAGIC:
            raise ValueError(
                f"bad image magic 0x{magic:08x} in {image_path} "
                f"(expected 0x{IMAGE_MAGIC:08x})")
        raw = _read_exact(f, count * rows * cols, image_path)
    frames = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    frames = frames.reshape(count, rows * cols)

    labels = None
    if label_path is not None:
        with _open_maybe_gz(label_path) as f:
            magic, n = struct.unpack(">II", _read_exact(f, 8, label_path))
            if magic != LABEL_MAGIC:
                raise ValueError(
                    f"bad label magic 0x{magic:08x} in {label_path} "
                    f"(expected 0x{LABEL_MAGIC:08x})")
            if n != count:
                raise ValueError(
                    f"label count {n} does not match image count {count}")
            labels = np.frombuffer(_read_exact(f, n, label_path),
                                   dtype=np.uint8).astype(np.int64)
    return FrameDataset(frames, labels)


def save_idx(ds, image_path, label_path=None, sidecar_path=None, meta=None,
             image_shape=None):
    """Write a FrameDataset back to IDX containers.

    Frames must lie in [0, 1]; they are stored as ubyte (value * 255,
    rounded), so only data on the 1/255 grid round-trips exactly.  An
    optional JSON sidecar records generation parameters (seed, buffer
    size, ...) next to the data.
    """
    frames = ds.frames
    if frames.size and (frames.min() < 0 or frames.max() > 1):
        raise ValueError("IDX export requires frame values in [0, 1]")
    if image_shape is None:
        side = int(round(frames.shape[1] ** 0.5))
        if side * side != frames.shape[1]:
            raise ValueError("frames are not square; pass image_shape")
        image_shape = (side, side)
    rows, cols = image_shape
    if rows * cols != frames.shape[1]:
        raise ValueError("image_shape does not match frame width")
    pixels = np.round(frames * 255.0).astype(np.uint8)
    with open(image_path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, len(ds), rows, cols))
        f.write(pixels.tobytes())
    if label_path is not None:
        if ds.labels is None:
            raise ValueError("dataset has no labels to write")
        if ds.labels.size and (ds.labels.min() < 0 or ds.labels.max() > 255):
            raise ValueError("IDX labels must fit in a ubyte")
        with open(label_path, "wb") as f:
            f.write(struct.pack(">II", LABEL_MAGIC, len(ds)))
            f.write(ds.labels.astype(np.uint8).tobytes())
    if sidecar_path is not None:
        doc = {"count": len(ds), "width": int(frames.shape[1]),
               "ordering": ds.ordering}
        doc.update(meta or {})
        with open(sidecar_path, "w") as f:
            json.dump(doc, f, sort_keys=True, indent=2)
            f.write("\n")


def temporal_reshuffle(ds, buffer_size=1000, rng=None):
    """Reorder frames so consecutive ones are similar, like video.

    The frames are first put in random order, then greedily re-sequenced:
    a fixed-size buffer of candidates is kept, the candidate closest (L2)
    to the current frame becomes the next frame, and its slot is refilled
    from the unseen pool.  The result is a permutation of the input.
    """
    if len(ds) == 0:
        raise ValueError("cannot reshuffle an empty dataset")
    if buffer_size < 1:
        raise ValueError("buffer_size must be >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    n = len(ds)
    order = rng.permutation(n)
    frames = ds.frames

    seq = np.empty(n, dtype=np.int64)
    seq[0] = order[0]
    buf = list(order[1:1 + buffer_size])
    pool = iter(order[1 + buffer_size:])
    current = frames[seq[0]]
    pos = 1
    while buf:
        cand = frames[buf]
        d2 = ((cand - current) ** 2).sum(axis=1)
        w = int(np.argmin(d2))
        seq[pos] = buf[w]
        current = frames[buf[w]]
        pos += 1
        nxt = next(pool, None)
        if nxt is not None:
            buf[w] = nxt
        else:
            buf[w] = buf[-1]
            buf.pop()
    labels = None if ds.labels is None else ds.labels[seq]
    return FrameDataset(frames[seq], labels, ordering="temporal")


def glorot_uniform(rng, d_in, d_out):
    limit = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, size=(d_in, d_out))


def gen_random_network(rng, dims=(100, 100, 100, 100), factors=(0.5, 8.0, 0.25)):
    """The random-net fixture: Glorot-initialized ReLU stack whose weight
    matrices are rescaled by the given factors.

    The default factors multiply out to 1 through the homogeneous hidden
    layers, so the function is unchanged while the intermediate signal
    ranges become badly matched to unit-grid discretization (first layer
    too coarse, second too fine).  Biases are zero; all scales start at 1.
    """
    if len(factors) != len(dims) - 1:
        raise ValueError("need one rescaling factor per weight matrix")
    layers = []
    for i, f in enumerate(factors):
        act = "relu" if i < len(factors) - 1 else "identity"
        W = glorot_uniform(rng, dims[i], dims[i + 1]) * f
        layers.append(LayerSpec(W, np.zeros(dims[i + 1]), act, 1.0))
    return NetworkSpec(layers)


def gen_random_stream(rng, n_frames, width, smoothness=0.0):
    """Gaussian frames with tunable temporal redundancy.

    smoothness=0 gives i.i.d. frames; as it approaches 1 each frame blends
    into its predecessor until the stream is constant at 1.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if not 0.0 <= smoothness <= 1.0:
        raise ValueError("smoothness must lie in [0, 1]")
    raw = rng.standard_normal((n_frames, width))
    if smoothness == 0.0:
        return FrameDataset(raw)
    frames = np.empty_like(raw)
    frames[0] = raw[0]
    for t in range(1, n_frames):
        frames[t] = smoothness * frames[t - 1] + (1.0 - smoothness) * raw[t]
    return FrameDataset(frames)
