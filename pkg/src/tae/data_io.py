"""Dataset loaders, the synthetic 2-D S-curve, corruption materialisation and
artifact writers (PGM grids, manifests)."""
from __future__ import annotations

import gzip
import io
import json
import struct
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .compute.rng import seeded_rng
from .corruption import NoiseSpec, generate_mask_mar, generate_mask_window

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataFormatError(ValueError):
    pass


@dataclass
class Dataset:
    name: str
    x: np.ndarray  # (n, d) clean values in [0, 1]
    labels: Optional[np.ndarray] = None
    shape: Optional[tuple] = None  # image (rows, cols) when applicable

    def __post_init__(self):
        if self.labels is not None and len(self.labels) != len(self.x):
            raise ValueError("labels must align with samples")

    @property
    def d(self) -> int:
        return int(self.x.shape[1])

    def __len__(self):
        return len(self.x)

    def subset(self, idx) -> "Dataset":
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.name, self.x[idx], labels, self.shape)


@dataclass
class CorruptedDataset:
    name: str
    y: np.ndarray
    alpha: np.ndarray
    x: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    shape: Optional[tuple] = None
    manifest: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return int(self.y.shape[1])

    def __len__(self):
        return len(self.y)

    def subset(self, idx) -> "CorruptedDataset":
        pick = lambda a: None if a is None else a[idx]
        return CorruptedDataset(self.name, self.y[idx], self.alpha[idx], pick(self.x), pick(self.labels),
                                self.shape, dict(self.manifest))

    def save(self, path) -> None:
        arrays = {"y": self.y, "alpha": self.alpha}
        if self.x is not None:
            arrays["x"] = self.x
        if self.labels is not None:
            arrays["labels"] = self.labels
        save_npz(path, arrays)

    @classmethod
    def load(cls, path, manifest: Optional[dict] = None) -> "CorruptedDataset":
        with np.load(path) as data:
            get = lambda k: np.array(data[k]) if k in data.files else None
            manifest = manifest or {}
            shape = tuple(manifest["shape"]) if manifest.get("shape") else None
            return cls(manifest.get("dataset", "unknown"), get("y"), get("alpha"), get("x"), get("labels"),
                       shape, manifest)


def save_npz(path, arrays: dict) -> None:
    """npz writer with fixed member timestamps, so equal arrays give equal bytes."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())


# IDX

def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def _read_idx(path, magic, what):
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise DataFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    got_magic, count = struct.unpack(">II", raw[:8])
    if got_magic != magic:
        raise DataFormatError(f"{path}: bad magic 0x{got_magic:08x} for {what} (expected 0x{magic:08x})")
    dims = [count]
    header = 8
    if magic == IDX_IMAGES_MAGIC:
        if len(raw) < 16:
            raise DataFormatError(f"{path}: truncated header ({len(raw)} bytes)")
        dims += list(struct.unpack(">II", raw[8:16]))
        header = 16
    expected = header + int(np.prod(dims))
    if len(raw) < expected:
        raise DataFormatError(f"{path}: truncated file, expected {expected} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, count=int(np.prod(dims)), offset=header).reshape(dims)


def load_idx(images_path, labels_path=None, name="mnist") -> Dataset:
    """Read an IDX image file (optionally with labels); pixels scaled to [0, 1]."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, "images")
    n, rows, cols = images.shape
    labels = None
    if labels_path is not None:
        labels = _read_idx(labels_path, IDX_LABELS_MAGIC, "labels").astype(np.int64)
        if len(labels) != n:
            raise DataFormatError(f"{n} images but {len(labels)} labels")
    x = images.reshape(n, rows * cols).astype(np.float64) / 255.0
    return Dataset(name, x, labels, (rows, cols))


def write_idx(path, images, labels=None) -> None:
    """Write uint8 images (n, rows, cols) and optional labels as IDX files;
    ``path`` is the image file; labels go next to it with 'images-idx3' renamed
    to 'labels-idx1' (or plain 'images' to 'labels')."""
    images = np.asarray(images, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())
    if labels is not None:
        lpath = str(path).replace("images-idx3", "labels-idx1").replace("images", "labels")
        with open(lpath, "wb") as fh:
            fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
            fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


# UCI HAR

def load_har(dir_path, split_name="train", scaling="per_feature") -> Dataset:
    """Whitespace-delimited ``X_<split>.txt`` / ``y_<split>.txt`` (labels 1-6)."""
    root = Path(dir_path)
    candidates = [root / f"X_{split_name}.txt", root / split_name / f"X_{split_name}.txt"]
    xpath = next((p for p in candidates if p.exists()), None)
    if xpath is None:
        raise FileNotFoundError(f"no X_{split_name}.txt under {root}")
    ypath = xpath.with_name(f"y_{split_name}.txt")
    rows = []
    with open(xpath) as fh:
        for lineno, line in enumerate(fh, 1):
            vals = line.split()
            if not vals:
                continue
            if rows and len(vals) != len(rows[0]):
                raise DataFormatError(f"{xpath}:{lineno}: ragged row ({len(vals)} vs {len(rows[0])} values)")
            rows.append([float(v) for v in vals])
    x = np.array(rows, dtype=np.float64)
    labels = None
    if ypath.exists():
        raw = np.array([int(t) for t in ypath.read_text().split()])
        if raw.size and (raw.min() < 1 or raw.max() > 6):
            bad = raw[(raw < 1) | (raw > 6)][0]
            raise DataFormatError(f"{ypath}: unknown activity label {bad}")
        if len(raw) != len(x):
            raise DataFormatError(f"{len(x)} feature rows but {len(raw)} labels")
        labels = raw - 1
    return Dataset("har", _minmax(x, scaling), labels)


def _minmax(x, scaling):
    if scaling == "per_feature":
        lo, hi = x.min(axis=0), x.max(axis=0)
    elif scaling == "global":
        lo, hi = x.min(), x.max()
    else:
        raise ValueError(f"unknown scaling {scaling!r}")
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    return np.where(hi - lo > 0, (x - lo) / span, 0.0)


# synthetic 2-D S-curve

@dataclass(frozen=True)
class SCurve:
    """Points c(t) = (cx + ax sign(t)(cos t - 1), cy + ay sin t), t ~ U(-t_max, t_max),
    plus isotropic Gaussian thickness noise truncated at ``cutoff`` std."""

    cx: float = 0.5
    cy: float = 0.5
    ax: float = 0.2
    ay: float = 0.3
    t_max: float = 1.5 * np.pi
    thickness: float = 0.02
    cutoff: float = 3.0

    def curve(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.stack([self.cx + self.ax * np.sign(t) * (np.cos(t) - 1.0),
                         self.cy + self.ay * np.sin(t)], axis=-1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        t = rng.uniform(-self.t_max, self.t_max, size=n)
        noise = rng.standard_normal((n, 2))
        radius = self.cutoff
        bad = (noise ** 2).sum(axis=1) > radius ** 2
        while bad.any():
            noise[bad] = rng.standard_normal((int(bad.sum()), 2))
            bad = (noise ** 2).sum(axis=1) > radius ** 2
        return self.curve(t) + self.thickness * noise

    def distance_to_curve(self, points, n_grid: int = 20001) -> np.ndarray:
        c = self.curve(np.linspace(-self.t_max, self.t_max, n_grid))
        out = np.empty(len(points))
        for start in range(0, len(points), 512):
            p = points[start:start + 512]
            d2 = ((p[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
            out[start:start + 512] = np.sqrt(d2.min(axis=1))
        return out


def synth_2d(n: int, seed: int, spec: SCurve = SCurve()) -> Dataset:
    if n < 1:
        raise ValueError("n must be >= 1")
    return Dataset("synth2d", spec.sample(n, seeded_rng(seed)))


# PGM

def write_pgm_grid(samples, rows: int, cols: int, path, separator: int = 128) -> tuple:
    """Tile square images row-major into one binary (P5) PGM with 1-px
    separators; returns (height, width)."""
    samples = [np.asarray(s, dtype=np.float64).reshape(-1) for s in samples]
    if len(samples) > rows * cols:
        raise ValueError(f"{len(samples)} images do not fit a {rows}x{cols} grid")
    d = samples[0].size if samples else 0
    side = int(round(np.sqrt(d)))
    if side * side != d:
        raise ValueError(f"image dimension {d} is not square")
    height = rows * side + (rows - 1)
    width = cols * side + (cols - 1)
    canvas = np.full((height, width), separator, dtype=np.uint8)
    for i, s in enumerate(samples):
        r, c = divmod(i, cols)
        tile = np.round(np.clip(s, 0.0, 1.0) * 255.0).astype(np.uint8).reshape(side, side)
        canvas[r * (side + 1):r * (side + 1) + side, c * (side + 1):c * (side + 1) + side] = tile
    write_pgm(canvas, path)
    return height, width


def write_pgm(image: np.ndarray, path) -> None:
    image = np.asarray(image, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    fields_, pos = [], 0
    while len(fields_) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        fields_.append(raw[pos:end])
        pos = end
    if fields_[0] != b"P5":
        raise DataFormatError(f"{path}: not a binary PGM")
    width, height, maxval = (int(v) for v in fields_[1:])
    if maxval != 255:
        raise DataFormatError(f"{path}: only 8-bit PGM is supported")
    pos += 1
    data = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=pos)
    return data.reshape(height, width).copy()


# corruption materialisation

@dataclass(frozen=True)
class MissingSpec:
    observed_ratio: Optional[float] = 0.5
    window: Optional[tuple] = None  # (win_h, win_w) for structured masks

    def to_manifest(self) -> dict:
        if self.window is not None:
            return {"window": list(self.window)}
        return {"observed_ratio": self.observed_ratio}


def materialize_corruption(ds: Dataset, missing: MissingSpec, noise: NoiseSpec, seed: int) -> CorruptedDataset:
    """Corrupt every sample with masks and noise from one seeded stream. The
    returned manifest is enough to regenerate the set bit-exactly."""
    rng = seeded_rng(seed)
    n, d = ds.x.shape
    if missing.window is not None:
        if ds.shape is None:
            raise ValueError("window masks need image-shaped data")
        h, w = ds.shape
        alpha = np.stack([generate_mask_window(h, w, missing.window[0], missing.window[1], rng) for _ in range(n)])
    else:
        alpha = generate_mask_mar(d, missing.observed_ratio, rng, n=n)
    y = alpha * (ds.x + noise.sigma * rng.standard_normal((n, d)))
    manifest = {"dataset": ds.name, "seed": int(seed), "sigma": noise.sigma, "count": int(n),
                **missing.to_manifest()}
    if ds.shape is not None:
        manifest["shape"] = list(ds.shape)
    return CorruptedDataset(ds.name, y, alpha, ds.x.copy(), None if ds.labels is None else ds.labels.copy(),
                            ds.shape, manifest)


def write_manifest(manifest: dict, path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def spec_dict(spec) -> dict:
    return asdict(spec)
