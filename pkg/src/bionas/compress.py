"""Model compression: magnitude pruning, k-means quantization, containers.

Pruning zeroes the smallest-magnitude weights, either per tensor
(layer-wise) or across the whole store (class-blind). Exactly
floor(fraction * n) elements are zeroed per scope; magnitude ties are
broken by (tensor order, element index), so tightening the fraction only
ever grows the pruned set. Bias and normalization tensors are exempt by
default (see :func:`default_prunable`).

Quantization clusters each tensor's surviving non-zero values with 1-D
k-means (k = min(2^q, distinct values), k-means++ seeding from a seeded
generator) and then replaces every cluster with one of 2^q equally spaced
codebook values running from the tensor's minimum non-zero value (code 0)
to its maximum (code 2^q - 1). Each cluster takes the codebook value
nearest its centroid; with a full set of 2^q clusters this is the ordered
cluster-to-slot assignment, and when there are fewer clusters it keeps the
reconstruction error within one grid step plus the cluster radius. Zeros
survive through the sparsity bitmap, never through the codebook.

Container layout (all integers little-endian, bits packed LSB-first):

    file      magic "BNXC" | u16 version | u32 tensor count | tensors...
    tensor    u16 name length | name UTF-8 | u8 q | u8 rank | u32 dims[rank]
              | bitmap ceil(n/8) | codebook 2^q * f32 | codes ceil(nnz*q/8)

The uncompressed weight store uses the same header scheme with magic
"BNXW" and raw f32 values in place of bitmap/codebook/codes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import Rng

MAGIC_COMPRESSED = b"BNXC"
MAGIC_WEIGHTS = b"BNXW"
FORMAT_VERSION = 1


class ContainerError(Exception):
    """Corrupt or truncated container data."""


@dataclass(frozen=True)
class Tensor:
    name: str
    shape: tuple[int, ...]
    values: np.ndarray  # float32, 1-D row-major

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float32).reshape(-1)
        object.__setattr__(self, "values", values)
        if values.size != math.prod(self.shape):
            raise ValueError(f"tensor {self.name!r}: {values.size} values for shape {self.shape}")


@dataclass(frozen=True)
class TensorStore:
    tensors: tuple[Tensor, ...]

    def __post_init__(self):
        names = [t.name for t in self.tensors]
        if len(set(names)) != len(names):
            raise ValueError("tensor names must be unique")

    @property
    def total_elements(self) -> int:
        return sum(t.values.size for t in self.tensors)

    @property
    def dense_bytes(self) -> int:
        return 4 * self.total_elements


@dataclass(frozen=True)
class PruneSpec:
    fraction: float
    mode: str = "class-blind"  # or "layer-wise"

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("prune fraction must lie in [0, 1]")
        if self.mode not in ("layer-wise", "class-blind"):
            raise ValueError(f"unknown prune mode {self.mode!r}")


@dataclass(frozen=True)
class QuantSpec:
    bits: int
    codebook: str = "spaced"  # or "centroid", for comparison runs

    def __post_init__(self):
        if not 1 <= self.bits <= 8:
            raise ValueError("quantization bits must lie in [1, 8]")
        if self.codebook not in ("spaced", "centroid"):
            raise ValueError(f"unknown codebook mode {self.codebook!r}")


@dataclass(frozen=True)
class CompressedTensor:
    name: str
    shape: tuple[int, ...]
    bits: int
    bitmap: np.ndarray    # uint8, packed mask of non-zero positions
    codebook: np.ndarray  # float32, 2^bits entries
    codes: np.ndarray     # uint8, packed q-bit indices of non-zero elements

    @property
    def element_count(self) -> int:
        return math.prod(self.shape)

    @property
    def nonzero_count(self) -> int:
        mask = np.unpackbits(self.bitmap, bitorder="little")[: self.element_count]
        return int(mask.sum())


@dataclass(frozen=True)
class CompressedStore:
    tensors: tuple[CompressedTensor, ...]


def default_prunable(name: str) -> bool:
    """Conv/dense/lstm weight matrices are prunable; biases and norms are not."""
    lowered = name.lower()
    return not any(tag in lowered for tag in ("bias", "batchnorm", "bn.", ".bn", "norm"))


def prune(store: TensorStore, spec: PruneSpec, prunable=default_prunable
          ) -> tuple[TensorStore, list[np.ndarray]]:
    """Zero the lowest-magnitude fraction; returns the new store and keep-masks."""
    masks = [np.ones(t.values.size, dtype=bool) for t in store.tensors]
    targets = [i for i, t in enumerate(store.tensors) if prunable(t.name)]

    if spec.mode == "layer-wise":
        for i in targets:
            values = store.tensors[i].values
            kill = math.floor(spec.fraction * values.size)
            if kill:
                order = np.argsort(np.abs(values), kind="stable")
                masks[i][order[:kill]] = False
    else:  # class-blind: one global ranking across all prunable tensors
        if targets:
            magnitudes = np.concatenate([np.abs(store.tensors[i].values) for i in targets])
            kill = math.floor(spec.fraction * magnitudes.size)
            if kill:
                order = np.argsort(magnitudes, kind="stable")
                flat_kill = np.zeros(magnitudes.size, dtype=bool)
                flat_kill[order[:kill]] = True
                offset = 0
                for i in targets:
                    size = store.tensors[i].values.size
                    masks[i][flat_kill[offset:offset + size]] = False
                    offset += size

    pruned = tuple(
        Tensor(t.name, t.shape, np.where(mask, t.values, np.float32(0.0)))
        for t, mask in zip(store.tensors, masks)
    )
    return TensorStore(pruned), masks


def kmeans_1d(values: np.ndarray, k: int, rng: Rng,
              max_iter: int = 100, tol: float = 1e-9) -> np.ndarray:
    """Lloyd's algorithm on a 1-D array with k-means++ seeding; sorted centroids."""
    values = np.asarray(values, dtype=np.float64)
    distinct = np.unique(values)
    k = min(k, distinct.size)
    if k == distinct.size:
        return distinct  # every distinct value is its own centroid

    # k-means++: first center uniform, then proportional to squared distance.
    centers = [values[rng.randrange(values.size)]]
    d2 = (values - centers[0]) ** 2
    for _ in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            centers.append(centers[0])
            continue
        pick = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(d2), pick))
        idx = min(idx, values.size - 1)
        centers.append(values[idx])
        d2 = np.minimum(d2, (values - centers[-1]) ** 2)

    centroids = np.sort(np.unique(np.array(centers)))
    for _ in range(max_iter):
        # Nearest-centroid assignment via boundaries between sorted centroids.
        boundaries = (centroids[:-1] + centroids[1:]) / 2.0
        assign = np.searchsorted(boundaries, values)
        sums = np.bincount(assign, weights=values, minlength=centroids.size)
        counts = np.bincount(assign, minlength=centroids.size)
        occupied = counts > 0
        updated = np.where(occupied, sums / np.maximum(counts, 1), centroids)
        updated = np.sort(updated[occupied])
        movement = (
            np.abs(updated - centroids).max() if updated.size == centroids.size
            else np.inf
        )
        centroids = updated
        if movement < tol:
            break
    return centroids


def _pack_bits(flags: np.ndarray) -> np.ndarray:
    return np.packbits(flags.astype(np.uint8), bitorder="little")


def _pack_codes(codes: np.ndarray, bits: int) -> np.ndarray:
    if codes.size == 0:
        return np.zeros(0, dtype=np.uint8)
    spread = ((codes[:, None] >> np.arange(bits)) & 1).astype(np.uint8)
    return np.packbits(spread.reshape(-1), bitorder="little")


def _unpack_codes(packed: np.ndarray, bits: int, count: int) -> np.ndarray:
    if count == 0:
        return np.zeros(0, dtype=np.uint32)
    flat = np.unpackbits(packed, bitorder="little")[: count * bits]
    spread = flat.reshape(count, bits).astype(np.uint32)
    return (spread << np.arange(bits, dtype=np.uint32)).sum(axis=1)


def quantize(store: TensorStore, spec: QuantSpec, seed: int = 0) -> CompressedStore:
    """Cluster non-zero values per tensor and encode against the spaced codebook."""
    rng = Rng(seed)
    levels = 1 << spec.bits
    out = []
    for tensor in store.tensors:
        values = tensor.values
        mask = values != 0.0
        nonzero = values[mask].astype(np.float64)
        codebook = np.zeros(levels, dtype=np.float32)
        codes = np.zeros(0, dtype=np.uint32)
        if nonzero.size:
            lo, hi = float(nonzero.min()), float(nonzero.max())
            centroids = kmeans_1d(nonzero, levels, rng)
            if spec.codebook == "spaced":
                if hi > lo:
                    grid = lo + np.arange(levels, dtype=np.float64) * (hi - lo) / (levels - 1)
                    # Each cluster reconstructs as the grid value nearest its centroid.
                    slots = np.rint((centroids - lo) / (hi - lo) * (levels - 1))
                    slots = np.clip(slots, 0, levels - 1).astype(np.uint32)
                else:
                    grid = np.full(levels, lo, dtype=np.float64)
                    slots = np.zeros(centroids.size, dtype=np.uint32)
                codebook = grid.astype(np.float32)
            else:
                slots = np.arange(centroids.size, dtype=np.uint32)
                codebook[: centroids.size] = centroids.astype(np.float32)
            boundaries = (centroids[:-1] + centroids[1:]) / 2.0
            cluster_of = np.searchsorted(boundaries, nonzero)
            codes = slots[cluster_of]
        out.append(CompressedTensor(
            name=tensor.name,
            shape=tensor.shape,
            bits=spec.bits,
            bitmap=_pack_bits(mask),
            codebook=codebook,
            codes=_pack_codes(codes, spec.bits),
        ))
    return CompressedStore(tuple(out))


def decompress(cs: CompressedStore) -> TensorStore:
    """Reconstruct: zeros where the bitmap says zero, codebook values elsewhere."""
    tensors = []
    for ct in cs.tensors:
        n = ct.element_count
        mask = np.unpackbits(ct.bitmap, bitorder="little")[:n].astype(bool)
        nnz = int(mask.sum())
        codes = _unpack_codes(ct.codes, ct.bits, nnz)
        values = np.zeros(n, dtype=np.float32)
        values[mask] = ct.codebook[codes]
        tensors.append(Tensor(ct.name, ct.shape, values))
    return TensorStore(tuple(tensors))


def storage_bytes(cs: CompressedStore) -> int:
    """Exact serialized size of the container."""
    return len(serialize_compressed(cs))


def compression_ratio(store: TensorStore, cs: CompressedStore) -> float:
    """Dense 32-bit baseline size over container size."""
    return store.dense_bytes / storage_bytes(cs)


def reconstruction_error(store: TensorStore, cs: CompressedStore) -> dict[str, float]:
    """Largest |original - reconstructed| per tensor (zeros reconstruct exactly)."""
    restored = {t.name: t for t in decompress(cs).tensors}
    report = {}
    for tensor in store.tensors:
        diff = np.abs(tensor.values - restored[tensor.name].values)
        report[tensor.name] = float(diff.max()) if diff.size else 0.0
    return report


# --- binary containers -------------------------------------------------------

def _header(magic: bytes, count: int) -> bytearray:
    buf = bytearray(magic)
    buf += FORMAT_VERSION.to_bytes(2, "little")
    buf += count.to_bytes(4, "little")
    return buf


class _Cursor:
    def __init__(self, data: bytes, magic: bytes):
        self.data = data
        self.pos = 0
        if self.take(4) != magic:
            raise ContainerError(f"bad magic; expected {magic!r}")
        version = int.from_bytes(self.take(2), "little")
        if version != FORMAT_VERSION:
            raise ContainerError(f"unsupported container version {version}")
        self.count = int.from_bytes(self.take(4), "little")

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ContainerError("truncated container")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return int.from_bytes(self.take(2), "little")

    def u32(self) -> int:
        return int.from_bytes(self.take(4), "little")

    def done(self):
        if self.pos != len(self.data):
            raise ContainerError(f"{len(self.data) - self.pos} trailing bytes")


def _name_field(name: str) -> bytearray:
    encoded = name.encode("utf-8")
    buf = bytearray(len(encoded).to_bytes(2, "little"))
    buf += encoded
    return buf


def serialize_compressed(cs: CompressedStore) -> bytes:
    buf = _header(MAGIC_COMPRESSED, len(cs.tensors))
    for ct in cs.tensors:
        buf += _name_field(ct.name)
        buf.append(ct.bits)
        buf.append(len(ct.shape))
        for dim in ct.shape:
            buf += dim.to_bytes(4, "little")
        buf += ct.bitmap.tobytes()
        buf += ct.codebook.astype("<f4").tobytes()
        buf += ct.codes.tobytes()
    return bytes(buf)


def parse_compressed(data: bytes) -> CompressedStore:
    cur = _Cursor(data, MAGIC_COMPRESSED)
    tensors = []
    for _ in range(cur.count):
        name = cur.take(cur.u16()).decode("utf-8")
        bits = cur.u8()
        if not 1 <= bits <= 8:
            raise ContainerError(f"tensor {name!r}: invalid bit width {bits}")
        rank = cur.u8()
        shape = tuple(cur.u32() for _ in range(rank))
        n = math.prod(shape)
        bitmap = np.frombuffer(cur.take((n + 7) // 8), dtype=np.uint8)
        codebook = np.frombuffer(cur.take((1 << bits) * 4), dtype="<f4")
        nnz = int(np.unpackbits(bitmap, bitorder="little")[:n].sum())
        codes = np.frombuffer(cur.take((nnz * bits + 7) // 8), dtype=np.uint8)
        tensors.append(CompressedTensor(name, shape, bits, bitmap, codebook, codes))
    cur.done()
    return CompressedStore(tuple(tensors))


def serialize_weights(store: TensorStore) -> bytes:
    buf = _header(MAGIC_WEIGHTS, len(store.tensors))
    for tensor in store.tensors:
        buf += _name_field(tensor.name)
        buf.append(len(tensor.shape))
        for dim in tensor.shape:
            buf += dim.to_bytes(4, "little")
        buf += tensor.values.astype("<f4").tobytes()
    return bytes(buf)


def parse_weights(data: bytes) -> TensorStore:
    cur = _Cursor(data, MAGIC_WEIGHTS)
    tensors = []
    for _ in range(cur.count):
        name = cur.take(cur.u16()).decode("utf-8")
        rank = cur.u8()
        shape = tuple(cur.u32() for _ in range(rank))
        n = math.prod(shape)
        values = np.frombuffer(cur.take(n * 4), dtype="<f4")
        tensors.append(Tensor(name, shape, values))
    cur.done()
    return TensorStore(tuple(tensors))
