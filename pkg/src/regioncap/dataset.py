"""Dataset building and manifest I/O for the synthetic world.

A dataset is a set of scene-disjoint splits of RegionSamples. Only scene
graphs are derivable state: images are re-rendered from (dataset seed,
scene_id) on demand, so manifests stay tiny and diff-able.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .world import (
    Box,
    RegionSample,
    SceneGraph,
    WorldConfig,
    generate_scene,
    realize_caption,
    render,
    scene_seed,
)

FORMAT_VERSION = 1
SPLIT_NAMES = ("train", "val", "test")


@dataclass
class DatasetConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    train_size: int = 10000
    val_size: int = 1000
    test_size: int = 1000
    num_scenes: Optional[int] = None  # defaults to the sum of split sizes

    def split_sizes(self) -> dict[str, int]:
        return {"train": self.train_size, "val": self.val_size, "test": self.test_size}

    def total(self) -> int:
        return self.train_size + self.val_size + self.test_size

    def to_dict(self) -> dict:
        return {
            "world": self.world.to_dict(),
            "train_size": self.train_size,
            "val_size": self.val_size,
            "test_size": self.test_size,
            "num_scenes": self.num_scenes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        return cls(
            world=WorldConfig.from_dict(d.get("world", {})),
            train_size=d.get("train_size", 10000),
            val_size=d.get("val_size", 1000),
            test_size=d.get("test_size", 1000),
            num_scenes=d.get("num_scenes"),
        )


@dataclass
class DatasetManifest:
    config: DatasetConfig
    seed: int
    splits: dict[str, list[RegionSample]]

    def save(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, samples in self.splits.items():
            path = out / f"{name}.jsonl"
            with path.open("w", encoding="utf-8") as fh:
                header = {
                    "format_version": FORMAT_VERSION,
                    "split": name,
                    "seed": self.seed,
                    "config": self.config.to_dict(),
                }
                fh.write(json.dumps(header, sort_keys=True) + "\n")
                for sample in samples:
                    fh.write(json.dumps(sample.to_record(), sort_keys=True) + "\n")
        return out

    @classmethod
    def load(cls, data_dir: str | Path) -> "DatasetManifest":
        data_dir = Path(data_dir)
        splits: dict[str, list[RegionSample]] = {}
        config: Optional[DatasetConfig] = None
        seed = 0
        for name in SPLIT_NAMES:
            path = data_dir / f"{name}.jsonl"
            if not path.exists():
                continue
            with path.open("r", encoding="utf-8") as fh:
                header = json.loads(fh.readline())
                if header.get("format_version") != FORMAT_VERSION:
                    raise ValueError(
                        f"unsupported manifest version {header.get('format_version')}"
                    )
                config = DatasetConfig.from_dict(header["config"])
                seed = header["seed"]
                splits[name] = [RegionSample.from_record(json.loads(line)) for line in fh]
        if config is None:
            raise FileNotFoundError(f"no split manifests found under {data_dir}")
        return cls(config=config, seed=seed, splits=splits)

    def scene(self, scene_id: int) -> SceneGraph:
        graph = generate_scene(scene_seed(self.seed, scene_id), self.config.world)
        graph.scene_id = scene_id
        return graph


def build_dataset(config: DatasetConfig, seed: int) -> DatasetManifest:
    """Build scene-disjoint train/val/test splits of RegionSamples.

    One sample per scene; scene ids are assigned contiguously per split, so
    disjointness holds by construction. The referred object is the scene's
    non-solid object when the sampled template is T1 (realize_caption falls
    back to T0 if the scene has none), uniform otherwise.
    """
    total = config.total()
    num_scenes = config.num_scenes if config.num_scenes is not None else total
    if num_scenes < total:
        raise ValueError(
            f"split sizes need {total} scenes but config provides {num_scenes}"
        )

    sizes = config.split_sizes()
    splits: dict[str, list[RegionSample]] = {name: [] for name in SPLIT_NAMES}
    scene_id = 0
    for name in SPLIT_NAMES:
        for _ in range(sizes[name]):
            graph = generate_scene(scene_seed(seed, scene_id), config.world)
            graph.scene_id = scene_id
            rng = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence(entropy=(seed, scene_id, 1)))
            )
            template = str(rng.choice(("T0", "T1", "T2"), p=list(config.world.template_weights)))
            textured = [o.id for o in graph.objects if o.texture != "solid"]
            if template == "T1" and textured:
                object_id = textured[0]
            else:
                object_id = int(rng.integers(len(graph.objects)))
            sample = realize_caption(
                graph,
                object_id,
                rng,
                template=template,
                jitter=config.world.box_jitter,
            )
            splits[name].append(sample)
            scene_id += 1
    return DatasetManifest(config=config, seed=seed, splits=splits)


class RenderCache:
    """Renders scenes on demand and keeps them as uint8 to bound memory."""

    def __init__(self, manifest: DatasetManifest):
        self.manifest = manifest
        self._cache: dict[int, np.ndarray] = {}

    def image(self, scene_id: int) -> np.ndarray:
        cached = self._cache.get(scene_id)
        if cached is None:
            img = render(self.manifest.scene(scene_id))
            cached = np.round(img * 255.0).astype(np.uint8)
            self._cache[scene_id] = cached
        return cached.astype(np.float32) / 255.0

    def __len__(self) -> int:
        return len(self._cache)


def iter_images(
    manifest: DatasetManifest, split: str, cache: Optional[RenderCache] = None
) -> Iterator[tuple[np.ndarray, RegionSample]]:
    cache = cache or RenderCache(manifest)
    for sample in manifest.splits[split]:
        yield cache.image(sample.scene_id), sample
