"""Run orchestration: manifests, the time loop with outputs, and resolution scaling."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

from .config import ScenarioConfig, dump_config
from .dynamics import DIAGNOSTIC_COLUMNS, Simulation, StepFailure
from .io import DiagnosticsWriter, atomic_write_text, write_snapshot

logger = logging.getLogger(__name__)


def version_tag() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def coarsened(cfg: ScenarioConfig, factor: int) -> ScenarioConfig:
    """Same scenario with every mesh size multiplied by ``factor`` (a power of two).

    Newest-vertex bisection halves the bulk mesh size every ``d`` levels, so
    the fine and coarse levels drop by ``d·log2(factor)``.
    """
    if factor == 1:
        return cfg
    k = int(round(math.log2(factor)))
    if 2 ** k != factor:
        raise ValueError("the resolution factor must be a power of two")
    d = cfg.dim
    fine = max(cfg.fine_level - d * k, 0)
    return cfg.replace(surface_elements=max(int(round(cfg.surface_elements / factor)), 8),
                       sphere_level=max(cfg.sphere_level - k, 1),
                       fine_level=fine, coarse_level=min(cfg.coarse_level, fine))


def snapshot_steps(cfg: ScenarioConfig, n_steps: int) -> list[int]:
    """Steps written as snapshots: every ``snapshot_every`` steps, the listed times, and the last step."""
    steps = set()
    if cfg.snapshot_every > 0:
        steps.update(range(0, n_steps + 1, cfg.snapshot_every))
    steps.update(min(int(round(t / cfg.tau)), n_steps) for t in cfg.snapshot_times)
    steps.add(n_steps)
    return sorted(steps)


@dataclass
class RunManifest:
    """Everything needed to reproduce a run, plus how it ended."""

    config: ScenarioConfig
    seed: int
    version: str
    diagnostics: str
    snapshots: list[int]
    status: str = "running"
    cause: str = ""
    steps_done: int = 0
    wall_seconds: float = 0.0
    outputs: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        cfg = self.config.replace(seed=self.seed)
        run = ["[run]",
               f"version = {self.version}",
               f"seed = {self.seed}",
               f"diagnostics = {self.diagnostics}",
               f"snapshot_steps = {' '.join(str(s) for s in self.snapshots)}",
               f"status = {self.status}",
               f"termination = {self.cause}",
               f"steps_done = {self.steps_done}",
               f"wall_seconds = {self.wall_seconds:.3f}",
               f"outputs = {' '.join(self.outputs)}",
               ""]
        return dump_config(cfg) + "\n" + "\n".join(run)

    def write(self, path) -> None:
        atomic_write_text(path, self.to_text())


@dataclass
class RunResult:
    status: int
    manifest: RunManifest
    out_dir: Path
    simulation: Simulation | None


def run(cfg: ScenarioConfig, out_dir, seed: int | None = None, max_steps: int | None = None,
        progress_every: int = 0) -> RunResult:
    """Integrate to ``t_final`` writing the diagnostics CSV, snapshots and manifest into ``out_dir``.

    Returns status 0 on success and 1 when a step fails; the last good state
    is written as a snapshot tagged ``failure`` in that case.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seed if seed is None else seed
    cfg = cfg.replace(seed=seed)
    n_steps = int(round(cfg.t_final / cfg.tau))
    if max_steps is not None:
        n_steps = min(n_steps, max_steps)
    schedule = snapshot_steps(cfg, n_steps)
    manifest = RunManifest(cfg, seed, version_tag(), "diagnostics.csv", schedule)
    manifest_path = out / "manifest.txt"
    manifest.write(manifest_path)
    t0 = time.perf_counter()
    sim = None
    status = 0

    def snap(state, tag):
        manifest.outputs.extend(p.name for p in write_snapshot(state, out, tag))

    with DiagnosticsWriter(out / manifest.diagnostics, DIAGNOSTIC_COLUMNS) as diag:
        try:
            sim = Simulation(cfg, seed=seed)
            diag.write(sim.diagnostics())
            if 0 in schedule:
                snap(sim.state, f"{0:06d}")
            for k in range(1, n_steps + 1):
                sim.step()
                diag.write(sim.diagnostics())
                if k in schedule:
                    snap(sim.state, f"{k:06d}")
                if progress_every and k % progress_every == 0:
                    logger.info("step %d/%d t=%.4g  %.2fs/step", k, n_steps, sim.state.t,
                                sim.last_report.seconds)
                manifest.steps_done = k
            manifest.status, manifest.cause = "completed", "reached final time"
        except StepFailure as exc:
            status = 1
            manifest.status, manifest.cause = "failed", str(exc).replace("\n", " ")
            if exc.state is not None:
                snap(exc.state, "failure")
            logger.error("%s", exc)
        except KeyboardInterrupt:
            status = 130
            manifest.status, manifest.cause = "interrupted", "keyboard interrupt"
            if sim is not None:
                snap(sim.state, "interrupted")
        finally:
            manifest.wall_seconds = time.perf_counter() - t0
            manifest.write(manifest_path)
    return RunResult(status, manifest, out, sim)


def format_table(rows) -> str:
    """Fixed-width pass/fail table from (name, passed, detail) rows."""
    width = max(len(r[0]) for r in rows)
    lines = [f"{'check'.ljust(width)}  result  detail"]
    for name, ok, detail in rows:
        lines.append(f"{name.ljust(width)}  {'PASS' if ok else 'FAIL'}    {detail}")
    return "\n".join(lines)
