"""Dataset plumbing: XYZ text clouds, OFF mesh sampling, synthetic shapes.

The synthetic generator exists so the whole attack stack can be exercised
without any external data: a handful of parametric surface families whose
instances share per-class base samplings (so class means are clean
prototypes) plus per-instance jitter.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import PointCloud, normalize_unit_ball


class XyzFormatError(ValueError):
    """An XYZ text file does not parse."""


class OffFormatError(ValueError):
    """An OFF mesh file does not parse or is degenerate."""


class ManifestError(ValueError):
    """A dataset manifest is malformed or references missing data."""


def write_xyz(path: str | Path, cloud: PointCloud) -> None:
    """Write a cloud as text, one 'x y z' line per point.

    Coordinates are printed with 17 significant digits, which round-trips
    float64 exactly.
    """
    path = Path(path)
    lines = ["%.17g %.17g %.17g" % (x, y, z) for x, y, z in cloud.points]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_xyz(path: str | Path) -> PointCloud:
    """Read an XYZ text cloud; '#' starts a comment, blank lines are skipped."""
    path = Path(path)
    rows = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise XyzFormatError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise XyzFormatError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise XyzFormatError(f"{path}: no points found")
    return PointCloud(np.asarray(rows))


def _parse_off(path: Path) -> tuple[np.ndarray, list[list[int]]]:
    tokens: list[str] = []
    text = path.read_text(encoding="utf-8")
    for raw in text.splitlines():
        line = raw.split("#", 1)[0]
        tokens.extend(line.split())
    if not tokens:
        raise OffFormatError(f"{path}: empty file")
    # Header may be 'OFF' alone or fused with the counts ('OFF 8 6 12').
    head = tokens[0]
    if head == "OFF":
        tokens = tokens[1:]
    elif head.startswith("OFF"):
        tokens = [head[3:]] + tokens[1:]
    else:
        raise OffFormatError(f"{path}: missing OFF header")
    try:
        nv, nf = int(tokens[0]), int(tokens[1])
        cursor = 3  # vertex, face, edge counts; edges ignored
        verts = np.asarray(
            [float(t) for t in tokens[cursor : cursor + 3 * nv]], dtype=np.float64
        ).reshape(nv, 3)
        cursor += 3 * nv
        faces = []
        for _ in range(nf):
            sz = int(tokens[cursor])
            cursor += 1
            if sz < 3:
                raise OffFormatError(f"{path}: face with {sz} vertices")
            idx = [int(t) for t in tokens[cursor : cursor + sz]]
            cursor += sz
            if len(idx) != sz or any(not 0 <= i < nv for i in idx):
                raise OffFormatError(f"{path}: face references invalid vertex")
            faces.append(idx)
    except OffFormatError:
        raise
    except (ValueError, IndexError) as exc:
        raise OffFormatError(f"{path}: truncated or malformed OFF data") from exc
    if not faces:
        raise OffFormatError(f"{path}: mesh has no faces")
    return verts, faces


def sample_mesh_surface(vertices: np.ndarray, faces: list[list[int]], n: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Area-weighted uniform sampling of a triangulated mesh surface.

    Polygonal faces are fan-triangulated.  Raises OffFormatError when the
    total surface area vanishes.
    """
    tris = []
    for face in faces:
        for i in range(1, len(face) - 1):
            tris.append((face[0], face[i], face[i + 1]))
    tri = np.asarray(tris, dtype=np.int64)
    a = vertices[tri[:, 0]]
    b = vertices[tri[:, 1]]
    c = vertices[tri[:, 2]]
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    total = areas.sum()
    if total < 1e-300:
        raise OffFormatError("mesh surface area is zero; cannot sample")
    chosen = rng.choice(len(tri), size=n, p=areas / total)
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    return (a[chosen] + u[:, None] * (b[chosen] - a[chosen])
            + v[:, None] * (c[chosen] - a[chosen]))


def read_off_and_sample(path: str | Path, n: int, seed: int) -> PointCloud:
    """Load an OFF mesh, sample n surface points, normalize to the unit ball."""
    if n < 2:
        raise ValueError("need at least 2 sample points")
    verts, faces = _parse_off(Path(path))
    rng = np.random.default_rng(seed)
    points = sample_mesh_surface(verts, faces, n, rng)
    return normalize_unit_ball(PointCloud(points))


# --- synthetic shape families ------------------------------------------------

def _sphere(n: int, rng: np.random.Generator) -> np.ndarray:
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _box(n: int, rng: np.random.Generator) -> np.ndarray:
    face = rng.integers(0, 6, size=n)
    uv = rng.uniform(-1.0, 1.0, size=(n, 2))
    pts = np.empty((n, 3))
    axis = face // 2
    sign = np.where(face % 2 == 0, 1.0, -1.0)
    for i in range(n):
        rest = [a for a in range(3) if a != axis[i]]
        pts[i, axis[i]] = sign[i]
        pts[i, rest[0]] = uv[i, 0]
        pts[i, rest[1]] = uv[i, 1]
    return 0.7 * pts


def _cylinder(n: int, rng: np.random.Generator) -> np.ndarray:
    r, h = 0.45, 1.8
    lateral = 2 * np.pi * r * h
    caps = 2 * np.pi * r**2
    on_side = rng.random(n) < lateral / (lateral + caps)
    theta = rng.uniform(0, 2 * np.pi, size=n)
    pts = np.empty((n, 3))
    z = rng.uniform(-h / 2, h / 2, size=n)
    rad = r * np.sqrt(rng.random(n))
    top = np.where(rng.random(n) < 0.5, h / 2, -h / 2)
    pts[:, 0] = np.where(on_side, r * np.cos(theta), rad * np.cos(theta))
    pts[:, 1] = np.where(on_side, r * np.sin(theta), rad * np.sin(theta))
    pts[:, 2] = np.where(on_side, z, top)
    return pts


def _cone(n: int, rng: np.random.Generator) -> np.ndarray:
    r, h = 0.7, 1.5
    slant = np.sqrt(r**2 + h**2)
    lateral = np.pi * r * slant
    base = np.pi * r**2
    on_side = rng.random(n) < lateral / (lateral + base)
    theta = rng.uniform(0, 2 * np.pi, size=n)
    # Lateral surface: radius density grows linearly toward the rim.
    s = np.sqrt(rng.random(n))
    rad_side = r * s
    z_side = h * (1.0 - s) - h / 2
    rad_base = r * np.sqrt(rng.random(n))
    pts = np.empty((n, 3))
    rad = np.where(on_side, rad_side, rad_base)
    pts[:, 0] = rad * np.cos(theta)
    pts[:, 1] = rad * np.sin(theta)
    pts[:, 2] = np.where(on_side, z_side, -h / 2)
    return pts


def _torus(n: int, rng: np.random.Generator) -> np.ndarray:
    big_r, small_r = 0.7, 0.25
    phi = rng.uniform(0, 2 * np.pi, size=n)
    # Rejection sampling corrects the surface density in the tube angle.
    theta = np.empty(n)
    filled = 0
    while filled < n:
        cand = rng.uniform(0, 2 * np.pi, size=2 * (n - filled))
        accept = rng.random(len(cand)) < (big_r + small_r * np.cos(cand)) / (big_r + small_r)
        good = cand[accept][: n - filled]
        theta[filled : filled + len(good)] = good
        filled += len(good)
    ring = big_r + small_r * np.cos(theta)
    return np.column_stack([ring * np.cos(phi), ring * np.sin(phi),
                            small_r * np.sin(theta)])


def _disc(n: int, rng: np.random.Generator) -> np.ndarray:
    theta = rng.uniform(0, 2 * np.pi, size=n)
    rad = np.sqrt(rng.random(n))
    return np.column_stack([rad * np.cos(theta), rad * np.sin(theta), np.zeros(n)])


def _helix(n: int, rng: np.random.Generator) -> np.ndarray:
    t = rng.random(n)
    angle = t * 5 * np.pi
    return np.column_stack([0.7 * np.cos(angle), 0.7 * np.sin(angle), 1.6 * (t - 0.5)])


def _saddle(n: int, rng: np.random.Generator) -> np.ndarray:
    theta = rng.uniform(0, 2 * np.pi, size=n)
    rad = np.sqrt(rng.random(n))
    x, y = rad * np.cos(theta), rad * np.sin(theta)
    return np.column_stack([x, y, 0.8 * (x**2 - y**2)])


SHAPE_FAMILIES: dict[str, callable] = {
    "sphere": _sphere,
    "box": _box,
    "cylinder": _cylinder,
    "cone": _cone,
    "torus": _torus,
    "disc": _disc,
    "helix": _helix,
    "saddle": _saddle,
}


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    class_name: str


@dataclass(frozen=True)
class DatasetManifest:
    """Index of a generated or imported cloud dataset.

    Entry paths are stored relative to the manifest file; ``root`` is filled
    in at load/save time so clouds resolve regardless of the working
    directory.
    """

    entries: list[ManifestEntry]
    class_count: int
    sample_points: int
    normalization: str
    root: Path

    def save(self, path: str | Path) -> None:
        path = Path(path)
        payload = {
            "class_count": self.class_count,
            "sample_points": self.sample_points,
            "normalization": self.normalization,
            "entries": [
                {"path": e.path, "label": e.label, "class_name": e.class_name}
                for e in self.entries
            ],
        }
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
        try:
            entries = [
                ManifestEntry(path=str(e["path"]), label=int(e["label"]),
                              class_name=str(e["class_name"]))
                for e in payload["entries"]
            ]
            manifest = cls(
                entries=entries,
                class_count=int(payload["class_count"]),
                sample_points=int(payload["sample_points"]),
                normalization=str(payload["normalization"]),
                root=path.parent,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"malformed manifest {path}: {exc}") from exc
        if manifest.class_count < 2:
            raise ManifestError("manifest needs at least 2 classes")
        if not entries:
            raise ManifestError("manifest has no entries")
        for e in entries:
            if not 0 <= e.label < manifest.class_count:
                raise ManifestError(f"entry label {e.label} outside [0, {manifest.class_count})")
        return manifest

    def load_cloud(self, entry: ManifestEntry) -> PointCloud:
        full = self.root / entry.path
        if not full.exists():
            raise ManifestError(f"manifest references missing file {full}")
        return read_xyz(full)

    def source_ids(self) -> list[str]:
        return [Path(e.path).stem for e in self.entries]

    def find_entry(self, source_id: str) -> ManifestEntry:
        for e in self.entries:
            if Path(e.path).stem == source_id:
                return e
        raise ManifestError(f"no manifest entry with id {source_id!r}")


def gen_synthetic_dataset(out_dir: str | Path, classes: int, per_class: int,
                          n: int, seed: int, jitter: float = 0.02) -> DatasetManifest:
    """Generate a labeled synthetic cloud dataset under ``out_dir``.

    Instances of one class share a base surface sampling and differ by
    seeded Gaussian jitter, so the index-wise class mean is a clean
    prototype of the family.  All clouds are unit-ball normalized.

    Args:
        out_dir: directory to create (must not contain a manifest already).
        classes: number of shape families to use, 2..len(SHAPE_FAMILIES).
        per_class: instances per class.
        n: points per cloud.
        seed: master seed; class and instance streams derive from it.
        jitter: per-coordinate noise scale before normalization.
    """
    if not 2 <= classes <= len(SHAPE_FAMILIES):
        raise ValueError(f"classes must lie in [2, {len(SHAPE_FAMILIES)}], got {classes}")
    if per_class < 1:
        raise ValueError("per_class must be at least 1")
    if n < 8:
        raise ValueError("need at least 8 points per cloud")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = list(SHAPE_FAMILIES)[:classes]
    entries: list[ManifestEntry] = []
    for label, name in enumerate(names):
        base = SHAPE_FAMILIES[name](n, np.random.default_rng([seed, label]))
        for idx in range(per_class):
            inst_rng = np.random.default_rng([seed, label, idx])
            points = base + inst_rng.normal(0.0, jitter, size=base.shape)
            cloud = normalize_unit_ball(PointCloud(points))
            fname = f"{name}_{idx:03d}.xyz"
            write_xyz(out_dir / fname, cloud)
            entries.append(ManifestEntry(path=fname, label=label, class_name=name))
    manifest = DatasetManifest(entries=entries, class_count=classes,
                               sample_points=n, normalization="unit_ball",
                               root=out_dir)
    manifest.save(out_dir / "manifest.json")
    return manifest


def class_prototypes(manifest: DatasetManifest) -> list[tuple[PointCloud, int]]:
    """Index-wise mean cloud per class, the centroids for the label oracle."""
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for entry in manifest.entries:
        cloud = manifest.load_cloud(entry)
        if cloud.n != manifest.sample_points:
            raise ManifestError(
                f"{entry.path} has {cloud.n} points, manifest says {manifest.sample_points}"
            )
        sums[entry.label] = sums.get(entry.label, 0) + cloud.points
        counts[entry.label] = counts.get(entry.label, 0) + 1
    return [(PointCloud(sums[label] / counts[label]), label) for label in sorted(sums)]


def select_targets(manifest: DatasetManifest, y_true: int, count: int,
                   seed: int, exclude_id: str | None = None,
                   ) -> list[tuple[PointCloud, int]]:
    """Draw target clouds: at most one per distinct non-true class, seeded.

    At most ``count`` distinct classes are used; within each class one entry
    is chosen uniformly.  ``exclude_id`` removes the source itself from the
    draw (relevant only when its class differs from y_true, i.e. never, but
    cheap insurance against odd manifests).
    """
    rng = np.random.default_rng([seed, 0x7A6])
    by_label: dict[int, list[ManifestEntry]] = {}
    for e in manifest.entries:
        if e.label == y_true:
            continue
        if exclude_id is not None and Path(e.path).stem == exclude_id:
            continue
        by_label.setdefault(e.label, []).append(e)
    labels = sorted(by_label)
    if not labels:
        raise ManifestError("manifest has no entries outside the source class")
    if len(labels) > count:
        chosen = rng.choice(len(labels), size=count, replace=False)
        labels = [labels[i] for i in sorted(chosen)]
    targets = []
    for label in labels:
        pool = by_label[label]
        pick = pool[int(rng.integers(0, len(pool)))]
        targets.append((manifest.load_cloud(pick), label))
    return targets
