"""Seeded synthetic HDR scenes standing in for a captured dataset."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .io import write_pfm
from .sensor import HdrImage, itoh_satisfied

MANIFEST_VERSION = 1
ENFORCE_ATTEMPTS = 12


class SceneKind(str, Enum):
    RAMP = "ramp"
    BLOBS = "gaussian-blobs"
    SINUSOID = "sinusoid"
    PIECEWISE = "piecewise-constant"
    COMPOSITE = "composite"


class ItohMode(str, Enum):
    ENFORCE = "enforce"
    FREE = "free"


class ItohEnforcementError(ValueError):
    pass


@dataclass(frozen=True)
class SceneSpec:
    kind: SceneKind = SceneKind.COMPOSITE
    size: tuple[int, int] = (32, 32)
    channels: int = 1
    peak_factor: float = 4.0
    wrap_bit_depth: int = 4
    seed: int = 0
    itoh_mode: ItohMode = ItohMode.FREE

    def __post_init__(self):
        object.__setattr__(self, "kind", SceneKind(self.kind))
        object.__setattr__(self, "itoh_mode", ItohMode(self.itoh_mode))
        object.__setattr__(self, "size", (int(self.size[0]), int(self.size[1])))
        if min(self.size) < 8:
            raise ValueError(f"scene size must be at least 8x8, got {self.size}")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if not self.peak_factor > 0:
            raise ValueError("peak_factor must be > 0")
        if int(self.wrap_bit_depth) != self.wrap_bit_depth or self.wrap_bit_depth < 1:
            raise ValueError("wrap_bit_depth must be an integer >= 1")

    @property
    def peak(self) -> float:
        return self.peak_factor * 2.0**self.wrap_bit_depth

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["itoh_mode"] = self.itoh_mode.value
        d["size"] = list(self.size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(
            SceneKind(d["kind"]), tuple(d["size"]), d["channels"], d["peak_factor"],
            d["wrap_bit_depth"], d["seed"], ItohMode(d["itoh_mode"]),
        )


def _grid(h, w):
    return np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")


def _ramp(h, w, rng):
    i, j = _grid(h, w)
    return (i + j) / (h + w - 2)


def _blobs(h, w, rng, count=None):
    i, j = _grid(h, w)
    count = count or int(rng.integers(2, 6))
    out = np.zeros((h, w))
    for _ in range(count):
        ci, cj = rng.uniform(0, h), rng.uniform(0, w)
        s = rng.uniform(0.05, 0.2) * min(h, w)
        out += rng.uniform(0.3, 1.0) * np.exp(-((i - ci) ** 2 + (j - cj) ** 2) / (2 * s * s))
    return out


def _sinusoid(h, w, rng):
    i, j = _grid(h, w)
    theta = rng.uniform(0, np.pi)
    period = rng.uniform(0.3, 1.0) * max(h, w)
    phase = rng.uniform(0, 2 * np.pi)
    return 0.5 + 0.5 * np.sin(2 * np.pi * (i * np.cos(theta) + j * np.sin(theta)) / period + phase)


def _piecewise(h, w, rng):
    out = np.full((h, w), rng.uniform(0.0, 0.2))
    for _ in range(int(rng.integers(2, 6))):
        i0, j0 = int(rng.integers(0, h - 2)), int(rng.integers(0, w - 2))
        i1, j1 = int(rng.integers(i0 + 2, h + 1)), int(rng.integers(j0 + 2, w + 1))
        out[i0:i1, j0:j1] = rng.uniform(0.1, 1.0)
    return out


def _composite(h, w, rng):
    base = gaussian_filter(rng.normal(size=(h, w)), sigma=min(h, w) / 6, mode="reflect")
    base = (base - base.min()) / max(np.ptp(base), 1e-12)
    return 0.35 * base + _blobs(h, w, rng, count=int(rng.integers(1, 4)))


_GENERATORS = {
    SceneKind.RAMP: _ramp,
    SceneKind.BLOBS: _blobs,
    SceneKind.SINUSOID: _sinusoid,
    SceneKind.PIECEWISE: _piecewise,
    SceneKind.COMPOSITE: _composite,
}


def _normalise(lum: np.ndarray, peak: float) -> np.ndarray:
    lum = lum - lum.min()
    top = lum.max()
    return lum * (peak / top) if top > 0 else lum


def generate(spec: SceneSpec) -> HdrImage:
    """Render a scene whose maximum radiance is ``peak_factor * 2**b``.

    Colour scenes multiply one luminance pattern by a random per-channel tint
    (max tint 1). In enforce mode the pattern is blurred with growing width
    and renormalised to the same peak until the Itoh check passes; a ramp
    that is too steep cannot be fixed this way and is rejected.
    """
    rng = np.random.default_rng(spec.seed)
    h, w = spec.size
    lum = _normalise(_GENERATORS[spec.kind](h, w, rng), spec.peak)
    if spec.channels == 3:
        tint = rng.uniform(0.6, 1.0, size=3)
        tint /= tint.max()
    else:
        tint = np.ones(1)

    def render(l):
        return l[:, :, None] * tint[None, None, :]

    img = render(lum)
    if spec.itoh_mode is ItohMode.ENFORCE:
        sigma = 0.5
        for _ in range(ENFORCE_ATTEMPTS):
            if itoh_satisfied(img, spec.wrap_bit_depth):
                break
            lum = _normalise(gaussian_filter(lum, sigma, mode="nearest"), spec.peak)
            img = render(lum)
            sigma *= 1.5
        else:
            if not itoh_satisfied(img, spec.wrap_bit_depth):
                raise ItohEnforcementError(
                    f"could not satisfy the Itoh condition for {spec.kind.value} scene "
                    f"after {ENFORCE_ATTEMPTS} smoothing passes"
                )
    return HdrImage(img)


def scene_seed(global_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([global_seed, index]).generate_state(1)[0])


@dataclass
class ManifestEntry:
    path: str
    spec: SceneSpec
    split: str


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    global_seed: int
    format_version: int = MANIFEST_VERSION

    def split(self, tag: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == tag]

    def to_json(self) -> str:
        return json.dumps(
            {
                "format_version": self.format_version,
                "global_seed": self.global_seed,
                "entries": [{"path": e.path, "spec": e.spec.to_dict(), "split": e.split} for e in self.entries],
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        d = json.loads(text)
        # unknown keys are ignored so newer writers stay readable
        entries = [ManifestEntry(e["path"], SceneSpec.from_dict(e["spec"]), e["split"]) for e in d["entries"]]
        return cls(entries, d["global_seed"], d.get("format_version", MANIFEST_VERSION))

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text())


def split_counts(n: int, splits: Sequence[float]) -> list[int]:
    """Integer counts for fractional ``splits``; the last split takes the remainder."""
    total = float(sum(splits))
    counts = [int(round(n * s / total)) for s in splits[:-1]]
    counts.append(n - sum(counts))
    if counts[-1] < 0:
        raise ValueError(f"splits {splits} do not fit {n} scenes")
    return counts


def build_dataset(
    specs: Sequence[SceneSpec],
    splits=(0.7, 0.15, 0.15),
    out_dir=".",
    global_seed: int = 0,
    tags=("train", "val", "test"),
    threads: int = 1,
) -> DatasetManifest:
    """Generate, write and index scenes; returns the manifest (also saved as ``manifest.json``).

    Each scene's seed is replaced by one derived from ``(global_seed, index)``.
    Rendering may use ``threads`` workers; output does not depend on it.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("no scene specs given")
    if len(tags) != len(splits):
        raise ValueError("need one tag per split")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {out}: {exc}") from exc
    counts = split_counts(len(specs), splits)
    labels = [t for t, c in zip(tags, counts) for _ in range(c)]
    specs = [
        SceneSpec(s.kind, s.size, s.channels, s.peak_factor, s.wrap_bit_depth, scene_seed(global_seed, k), s.itoh_mode)
        for k, s in enumerate(specs)
    ]
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        images = list(pool.map(generate, specs))
    entries = []
    for k, (spec, tag, img) in enumerate(zip(specs, labels, images)):
        name = f"scene_{k:05d}.pfm"
        write_pfm(out / name, img)
        entries.append(ManifestEntry(name, spec, tag))
    manifest = DatasetManifest(entries, global_seed)
    (out / "manifest.json").write_text(manifest.to_json() + "\n")
    return manifest
