#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Benchmark Module

This module runs benchmark scenes through the penetration depth pipeline,
optionally compares the results against the brute-force oracle, sweeps
parameters over several seeds and writes the reports as JSON or CSV.
"""

import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import IO, Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from penetration_depth.datasets import MeshCache
from penetration_depth.hdist import (
    HdistConfig,
    HdistResult,
    Status,
    VertexUniform,
    penetration_depth,
)
from penetration_depth.mesh import (
    SceneConfig,
    TriangleMesh,
    load_mesh,
    make_builtin,
    make_overlap_scene,
    translate_mesh,
)
from penetration_depth.oracle import oracle_depth

SWEEP_VARIABLES = ("rate", "overlap_ratio", "count")
REPORT_FORMATS = ("json", "csv")

CSV_COLUMNS = [
    "mesh_a",
    "mesh_b",
    "overlap_ratio",
    "axis",
    "translation",
    "strategy",
    "rate",
    "count",
    "seed",
    "culling",
    "dpip_filter",
    "pip_axis",
    "status",
    "depth",
    "h_ab",
    "h_ba",
    "witness_ab",
    "witness_ba",
    "points_a",
    "points_b",
    "surface_triangles_a",
    "surface_triangles_b",
    "oracle_depth",
    "error_rate",
    "pip_ms",
    "psg_ms",
    "hdist_ms",
    "node_visits",
    "triangle_tests",
    "rays_cast",
]

AGGREGATE_COLUMNS = ["variable", "value", "runs", "mean_depth", "mean_error", "max_error"]

STAGES = ("pip", "psg", "hdist")


def config_echo(config: HdistConfig) -> Dict[str, Any]:
    """Flatten a configuration into report fields."""
    strategy = config.strategy
    return {
        "strategy": strategy.name,
        "rate": strategy.rate if isinstance(strategy, VertexUniform) else None,
        "count": None if isinstance(strategy, VertexUniform) else strategy.count,
        "seed": strategy.seed,
        "culling": config.culling,
        "dpip_filter": config.dpip_filter,
        "pip_axis": config.pip_axis,
    }


def relative_error(depth: float, reference: Optional[float]) -> Optional[float]:
    """Relative error of depth against reference; None without a nonzero reference."""
    if reference is None or reference == 0.0:
        return None
    return abs(depth - reference) / reference


@dataclass
class RunReport:
    """
    The outcome of one pipeline run on one scene.

    Attributes:
        scene: The scene that was run.
        config: The Hausdorff configuration used.
        result: The pipeline result.
        oracle_depth: Vertex-pair ground truth, when it was computed.
    """

    scene: SceneConfig
    config: HdistConfig
    result: HdistResult
    oracle_depth: Optional[float] = None

    @property
    def error_rate(self) -> Optional[float]:
        return relative_error(self.result.depth, self.oracle_depth)

    def to_dict(self, include_timing: bool = True, include_stats: bool = True) -> Dict[str, Any]:
        """
        Build the JSON object of this report.

        Args:
            include_timing: Whether to fill in stage timings (null otherwise).
            include_stats: Whether to fill in traversal statistics (null otherwise).

        Returns:
            Dict[str, Any]: Report fields in a stable order.
        """
        result = self.result
        timing = None
        if include_timing:
            timing = {stage: result.timings.get(stage) for stage in STAGES}
        stats = None
        if include_stats:
            stats = {"hdist": result.stats.as_dict(), "pip": result.pip_stats.as_dict()}
        return {
            "scene": {
                "mesh_a": self.scene.path_a,
                "mesh_b": self.scene.path_b,
                "overlap_ratio": self.scene.overlap_ratio,
                "axis": self.scene.axis,
                "translation": list(self.scene.translation) if self.scene.translation else None,
            },
            "config": config_echo(self.config),
            "status": result.status.value,
            "depth": result.depth,
            "h_ab": result.h_ab,
            "h_ba": result.h_ba,
            "witness_ab": result.witness_ab,
            "witness_ba": result.witness_ba,
            "points_a": result.points_a,
            "points_b": result.points_b,
            "surface_triangles_a": result.surface_triangles_a,
            "surface_triangles_b": result.surface_triangles_b,
            "oracle_depth": self.oracle_depth,
            "error_rate": self.error_rate,
            "timing_ms": timing,
            "stats": stats,
        }

    def to_row(self, include_timing: bool = True, include_stats: bool = True) -> Dict[str, Any]:
        """Flatten the report into one CSV row keyed by CSV_COLUMNS."""
        data = self.to_dict(include_timing, include_stats)
        row = dict(data["scene"])
        translation = row["translation"]
        if translation:
            row["translation"] = " ".join(_format_float(c) for c in translation)
        row.update(data["config"])
        for key in CSV_COLUMNS:
            if key in data and not isinstance(data[key], dict):
                row[key] = data[key]
        timing = data["timing_ms"] or {}
        for stage in STAGES:
            row[f"{stage}_ms"] = timing.get(stage)
        stats = (data["stats"] or {}).get("hdist", {})
        for key in ("node_visits", "triangle_tests", "rays_cast"):
            row[key] = stats.get(key)
        return {key: row.get(key) for key in CSV_COLUMNS}


@dataclass(frozen=True)
class SweepSpec:
    """
    A parameter sweep: every value is run once per seed.

    Attributes:
        variable: "rate", "overlap_ratio" or "count".
        values: Values of the variable.
        seeds: Sampling seeds.
    """

    variable: str
    values: Tuple[float, ...]
    seeds: Tuple[int, ...]

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ValueError(
                f"Sweep variable must be one of {SWEEP_VARIABLES}, got {self.variable!r}"
            )
        if not self.values:
            raise ValueError("Sweep needs at least one value")
        if not self.seeds:
            raise ValueError("Sweep needs at least one seed")
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


@dataclass(frozen=True)
class SweepAggregate:
    """Mean and max figures of all runs sharing one sweep value."""

    variable: str
    value: float
    runs: int
    mean_depth: float
    mean_error: Optional[float] = None
    max_error: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {key: getattr(self, key) for key in AGGREGATE_COLUMNS}


def aggregate_reports(variable: str, value: float, reports: Sequence[RunReport]) -> SweepAggregate:
    """Summarize the runs of one sweep value."""
    errors = [r.error_rate for r in reports if r.error_rate is not None]
    return SweepAggregate(
        variable=variable,
        value=value,
        runs=len(reports),
        mean_depth=math.fsum(r.result.depth for r in reports) / len(reports),
        mean_error=math.fsum(errors) / len(errors) if errors else None,
        max_error=max(errors) if errors else None,
    )


def _sweep_point(
    scene: SceneConfig, config: HdistConfig, variable: str, value: float, seed: int
) -> Tuple[SceneConfig, HdistConfig]:
    strategy = config.strategy
    if variable == "overlap_ratio":
        return replace(scene, overlap_ratio=float(value)), replace(
            config, strategy=replace(strategy, seed=seed)
        )
    if variable == "rate":
        if not isinstance(strategy, VertexUniform):
            raise ValueError("A rate sweep needs the vertex sampling strategy")
        return scene, replace(config, strategy=replace(strategy, rate=float(value), seed=seed))
    if isinstance(strategy, VertexUniform):
        raise ValueError("A count sweep needs a direction sampling strategy")
    return scene, replace(config, strategy=replace(strategy, count=int(value), seed=seed))


class BenchmarkHarness:
    """
    Runs scenes through the pipeline.

    Loaded meshes and oracle depths are kept per scene, so a sweep loads each
    scene and computes its ground truth only once.
    """

    def __init__(self, cache: Optional[MeshCache] = None, oracle_seed: int = 0):
        """
        Initialize the BenchmarkHarness.

        Args:
            cache: Mesh cache used for URL sources; created on first use if omitted.
            oracle_seed: Seed of the oracle's retry directions.
        """
        self.logger = logging.getLogger("penetration_depth.benchmark")
        self._cache = cache
        self.oracle_seed = oracle_seed
        self._meshes: Dict[str, TriangleMesh] = {}
        self._scenes: Dict[SceneConfig, Tuple[TriangleMesh, TriangleMesh]] = {}
        self._oracle: Dict[SceneConfig, float] = {}

    @property
    def cache(self) -> MeshCache:
        if self._cache is None:
            self._cache = MeshCache()
        return self._cache

    def load_source(self, source: str) -> TriangleMesh:
        """
        Load a mesh from a file path, an http(s) URL or a builtin spec.

        Args:
            source: The mesh source.

        Returns:
            TriangleMesh: The loaded mesh.
        """
        if source in self._meshes:
            return self._meshes[source]
        if source.startswith("builtin:"):
            mesh = make_builtin(source)
        elif source.startswith(("http://", "https://")):
            mesh = load_mesh(self.cache.fetch(source))
        else:
            mesh = load_mesh(source)
        self.logger.debug(f"Loaded {mesh!r} from {source}")
        self._meshes[source] = mesh
        return mesh

    def load_scene(self, scene: SceneConfig) -> Tuple[TriangleMesh, TriangleMesh]:
        """
        Build the two objects of a scene.

        Returns:
            Tuple[TriangleMesh, TriangleMesh]: Objects A and B in scene placement.
        """
        if scene in self._scenes:
            return self._scenes[scene]
        mesh_a = self.load_source(scene.path_a)
        other = None if scene.path_b == scene.path_a else self.load_source(scene.path_b)
        if scene.translation is not None:
            mesh_b = translate_mesh(other or mesh_a, scene.translation, name=f"{scene.path_b}_b")
        else:
            mesh_a, mesh_b = make_overlap_scene(mesh_a, scene.overlap_ratio, scene.axis, other)
        self._scenes[scene] = (mesh_a, mesh_b)
        return mesh_a, mesh_b

    def oracle_depth(self, scene: SceneConfig) -> float:
        """Vertex-pair ground truth of a scene, computed once per scene."""
        if scene not in self._oracle:
            mesh_a, mesh_b = self.load_scene(scene)
            self.logger.info(f"Computing oracle depth for {scene.path_a} / {scene.path_b}")
            self._oracle[scene] = oracle_depth(mesh_a, mesh_b, self.oracle_seed)
        return self._oracle[scene]

    def run_scene(
        self, scene: SceneConfig, config: HdistConfig, with_oracle: bool = False
    ) -> RunReport:
        """
        Run the full pipeline once.

        Args:
            scene: The scene to run.
            config: Sampling configuration.
            with_oracle: Whether to also compute the vertex-pair ground truth.

        Returns:
            RunReport: The run's report; NoOverlap scenes are reported, not raised.
        """
        mesh_a, mesh_b = self.load_scene(scene)
        result = penetration_depth(mesh_a, mesh_b, config)
        if result.status is Status.NO_OVERLAP:
            self.logger.warning(f"Scene {scene.path_a} / {scene.path_b} has no overlap")
        reference = self.oracle_depth(scene) if with_oracle else None
        report = RunReport(scene=scene, config=config, result=result, oracle_depth=reference)
        self.logger.info(
            f"depth={result.depth!r} status={result.status.value} error_rate={report.error_rate}"
        )
        return report

    def run_sweep(
        self,
        scene: SceneConfig,
        config: HdistConfig,
        sweep: SweepSpec,
        with_oracle: bool = False,
    ) -> Tuple[List[RunReport], List[SweepAggregate]]:
        """
        Run every (value, seed) pair of a sweep.

        Returns:
            Tuple[List[RunReport], List[SweepAggregate]]: Reports ordered by value
                then seed, and one aggregate per value.
        """
        reports: List[RunReport] = []
        aggregates: List[SweepAggregate] = []
        for value in sweep.values:
            group = []
            for seed in sweep.seeds:
                point_scene, point_config = _sweep_point(scene, config, sweep.variable, value, seed)
                self.logger.info(f"Sweep {sweep.variable}={value} seed={seed}")
                group.append(self.run_scene(point_scene, point_config, with_oracle))
            reports.extend(group)
            aggregates.append(aggregate_reports(sweep.variable, value, group))
        return reports, aggregates


def run_scene(scene: SceneConfig, config: HdistConfig, with_oracle: bool = False) -> RunReport:
    """Run one scene with a fresh harness."""
    return BenchmarkHarness().run_scene(scene, config, with_oracle)


def run_sweep(
    scene: SceneConfig, config: HdistConfig, sweep: SweepSpec, with_oracle: bool = False
) -> Tuple[List[RunReport], List[SweepAggregate]]:
    """Run a sweep with a fresh harness."""
    return BenchmarkHarness().run_sweep(scene, config, sweep, with_oracle)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _format_float(value: float) -> str:
    text = format(value, ".17g")
    if text.lstrip("-").isdigit():
        text += ".0"
    return text


def _json_value(value: Any, indent: int) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return _format_float(value) if math.isfinite(value) else "null"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return _json_string(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [
            f"{pad}{_json_string(str(k))}: {_json_value(v, indent + 1)}" for k, v in value.items()
        ]
        return "{\n" + ",\n".join(items) + f"\n{end}}}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        items = [f"{pad}{_json_value(v, indent + 1)}" for v in value]
        return "[\n" + ",\n".join(items) + f"\n{end}]"
    raise TypeError(f"Cannot serialize {type(value).__name__} to JSON")


def _json_string(text: str) -> str:
    return json.dumps(text)


def to_json(rows: Iterable[Dict[str, Any]]) -> str:
    """Serialize objects as a JSON array with floats written to 17 significant digits."""
    return _json_value(list(rows), 0) + "\n"


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return _format_float(value) if math.isfinite(value) else ""
    return str(value)


def _write_csv(stream: IO[str], columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_csv_cell(row.get(c)) for c in columns])


def _emit(
    text_or_rows: Union[str, Tuple[Sequence[str], List[Dict[str, Any]]]],
    path: Optional[Union[str, Path]],
) -> None:
    def write(stream: IO[str]) -> None:
        if isinstance(text_or_rows, str):
            stream.write(text_or_rows)
        else:
            _write_csv(stream, *text_or_rows)

    if path is None:
        write(sys.stdout)
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8", newline="") as f:
            write(f)


def emit_report(
    reports: Sequence[RunReport],
    format: str = "json",
    path: Optional[Union[str, Path]] = None,
    include_timing: bool = True,
    include_stats: bool = True,
) -> None:
    """
    Write run reports as a JSON array or as CSV with the CSV_COLUMNS header.

    Args:
        reports: The reports to write.
        format: "json" or "csv".
        path: Output file; standard output when omitted.
        include_timing: Whether stage timings are written.
        include_stats: Whether traversal statistics are written.

    Raises:
        ValueError: If the format is unknown.
        OSError: If the output cannot be written.
    """
    if format == "json":
        _emit(to_json(r.to_dict(include_timing, include_stats) for r in reports), path)
    elif format == "csv":
        rows = [r.to_row(include_timing, include_stats) for r in reports]
        _emit((CSV_COLUMNS, rows), path)
    else:
        raise ValueError(f"Unknown report format {format!r}, expected one of {REPORT_FORMATS}")


def emit_aggregates(
    aggregates: Sequence[SweepAggregate],
    format: str = "json",
    path: Optional[Union[str, Path]] = None,
) -> None:
    """Write sweep aggregates in the same formats as emit_report."""
    if format == "json":
        _emit(to_json(a.to_dict() for a in aggregates), path)
    elif format == "csv":
        _emit((AGGREGATE_COLUMNS, [a.to_dict() for a in aggregates]), path)
    else:
        raise ValueError(f"Unknown report format {format!r}, expected one of {REPORT_FORMATS}")
