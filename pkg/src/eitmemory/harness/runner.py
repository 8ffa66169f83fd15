"""Run a scenario end to end and record what was done."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__
from ..errors import PhysicsError
from . import export
from .config import ScenarioConfig, resolve_calibration
from .scenarios import SCENARIOS, ScenarioError

logger = logging.getLogger(__name__)


@dataclass
class RunManifest:
    config: dict
    calibration_version: str
    calibration_sha256: str
    calibration_source: str
    code_version: str
    duration_s: float = 0.0
    summary: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    status: str = "ok"
    error: str | None = None
    failed_points: list = field(default_factory=list)

    def header(self) -> dict:
        """Run description embedded in JSON results.

        Leaves out everything that may differ between runs producing the same
        numbers: wall-clock time, output location and worker count.
        """
        d = self.as_dict()
        for key in ("duration_s", "outputs"):
            d.pop(key)
        d["config"] = {k: v for k, v in d["config"].items() if k not in ("output", "jobs")}
        return d

    def as_dict(self) -> dict:
        return {
            "config": self.config,
            "calibration": {
                "version": self.calibration_version,
                "sha256": self.calibration_sha256,
                "source": self.calibration_source,
            },
            "code_version": self.code_version,
            "duration_s": self.duration_s,
            "summary": self.summary,
            "outputs": self.outputs,
            "status": self.status,
            "error": self.error,
            "failed_points": self.failed_points,
        }


def run_scenario(config: ScenarioConfig) -> RunManifest:
    """Execute ``config``, write its tables and ``manifest.json`` into ``config.output``.

    On a physics failure the completed partial tables are written, the
    manifest is marked ``failed`` and the error is re-raised.
    """
    start = time.perf_counter()
    cal = resolve_calibration(config)
    manifest = RunManifest(
        config=config.snapshot(),
        calibration_version=cal.version,
        calibration_sha256=cal.sha256,
        calibration_source=cal.source,
        code_version=__version__,
    )
    out_dir = Path(config.output)
    logger.info("running %s into %s", config.kind, out_dir)
    try:
        result = SCENARIOS[config.kind](cal, config)
    except PhysicsError as exc:
        manifest.status = "failed"
        manifest.error = f"{type(exc).__name__}: {exc}"
        partial = exc.partial if isinstance(exc, ScenarioError) else []
        manifest.failed_points = exc.failed_points if isinstance(exc, ScenarioError) else []
        for table in partial:
            manifest.outputs.append(export.export(table, config.format, out_dir, manifest.header()).name)
        manifest.duration_s = time.perf_counter() - start
        export.write_manifest(manifest.as_dict(), out_dir)
        raise
    manifest.summary = result.summary
    for table in result.tables:
        path = export.export(table, config.format, out_dir, manifest.header())
        manifest.outputs.append(path.name)
    manifest.duration_s = time.perf_counter() - start
    export.write_manifest(manifest.as_dict(), out_dir)
    return manifest
