"""Evaluation reports and plot-data tables.

A report is a text file of ``key = value`` lines grouped in sections::

    # fedctr evaluation report
    format_version = 1
    experiment = run
    wall_clock = 12.5

    [config]
    seed = 0
    ...

    [metrics]
    auc = 0.6312
    ap = 0.6020

The ``[config]`` section is a valid configuration file, so every report can
be rerun. Reports are never overwritten.
"""

import csv
import io
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TextIO

from .options import ConfigError, ExperimentConfig, format_value

logger = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = 1
_SECTIONS = ("config", "metrics", "attack", "history", "versions")


@dataclass
class EvalReport:
    """The outcome of one experiment run.

    Args:
        experiment: Name of the experiment.
        config: The run configuration.
        metrics: Test metrics, ``auc`` and ``ap``.
        attack: Attack AUCs by attacked embedding, if an attack was run.
        history: One row per training epoch.
        wall_clock: Duration of the run in seconds.
        versions: Versions of the software used, see :func:`fedctr.about.version_dict`.
        format_version: Version of the report format.
    """

    experiment: str
    config: ExperimentConfig
    metrics: Dict[str, float]
    attack: Dict[str, float] = field(default_factory=dict)
    history: List[Dict[str, Any]] = field(default_factory=list)
    wall_clock: float = 0.0
    versions: Dict[str, str] = field(default_factory=dict)
    format_version: int = REPORT_FORMAT_VERSION

    @property
    def auc(self) -> Optional[float]:
        return self.metrics.get("auc")

    @property
    def ap(self) -> Optional[float]:
        return self.metrics.get("ap")

    def write_to(self, f: TextIO) -> None:
        f.write("# fedctr evaluation report\n")
        f.write(f"format_version = {self.format_version}\n")
        f.write(f"experiment = {self.experiment}\n")
        f.write(f"wall_clock = {self.wall_clock:.3f}\n")
        f.write("\n[config]\n")
        for line in self.config.to_lines():
            f.write(line + "\n")
        for name, values in (("metrics", self.metrics), ("attack", self.attack)):
            if values:
                f.write(f"\n[{name}]\n")
                for key, value in values.items():
                    f.write(f"{key} = {format_value(value)}\n")
        if self.history:
            f.write("\n[history]\n")
            writer = csv.DictWriter(f, fieldnames=list(self.history[0]), lineterminator="\n")
            writer.writeheader()
            writer.writerows(self.history)
        if self.versions:
            f.write("\n[versions]\n")
            for key, value in self.versions.items():
                f.write(f"{key} = {value}\n")

    def to_text(self) -> str:
        buffer = io.StringIO()
        self.write_to(buffer)
        return buffer.getvalue()


def _parse_float(value: str) -> Optional[float]:
    return None if value == "none" else float(value)


def read_report(path: str) -> EvalReport:
    """Reads a report written by :func:`write_report`."""
    header: Dict[str, str] = {}
    sections: Dict[str, List[str]] = {name: [] for name in _SECTIONS}
    current = None
    with open(path, "r", encoding="utf-8") as f:
        for line in f.read().splitlines():
            stripped = line.strip()
            if stripped.startswith("[") and stripped.endswith("]"):
                current = stripped[1:-1]
                if current not in sections:
                    raise ConfigError(f"{path}: unknown section [{current}].")
                continue
            if current is None:
                if stripped and not stripped.startswith("#"):
                    key, _, value = stripped.partition("=")
                    header[key.strip()] = value.strip()
            elif stripped:
                sections[current].append(stripped)

    def pairs(lines):
        return dict(
            (key.strip(), value.strip())
            for key, _, value in (line.partition("=") for line in lines)
        )

    history = list(csv.DictReader(sections["history"])) if sections["history"] else []
    return EvalReport(
        experiment=header.get("experiment", ""),
        config=ExperimentConfig.from_lines(sections["config"], source=path),
        metrics={k: _parse_float(v) for k, v in pairs(sections["metrics"]).items()},
        attack={k: _parse_float(v) for k, v in pairs(sections["attack"]).items()},
        history=history,
        wall_clock=float(header.get("wall_clock", 0.0)),
        versions=pairs(sections["versions"]),
        format_version=int(header.get("format_version", REPORT_FORMAT_VERSION)),
    )


def unique_path(directory: str, name: str, suffix: str) -> str:
    """Creates and returns ``directory/name.suffix``, or ``name-<n>.suffix`` with the
    smallest ``n`` not yet taken.
    """
    Path(directory).mkdir(parents=True, exist_ok=True)
    serial_number = None
    while True:
        name_suffix = f"-{serial_number}" if serial_number is not None else ""
        file_name = f"{name}{name_suffix}.{suffix}"
        file_path = os.path.join(directory, file_name)
        try:
            with open(file_path, "x"):
                pass
        except FileExistsError:
            serial_number = 1 if serial_number is None else serial_number + 1
            continue
        if serial_number is not None:
            logger.warning(f"Output file already exists. Renaming to {file_name}.")
        return file_path


def write_report(report: EvalReport, directory: str, name: Optional[str] = None) -> str:
    """Writes ``report`` to a new file in ``directory``.

    Returns:
        The path of the written file.
    """
    path = unique_path(directory, name or report.experiment, "txt")
    with open(path, "w", encoding="utf-8") as f:
        report.write_to(f)
    return path


def write_table(
    rows: Sequence[Dict[str, Any]], directory: str, name: str
) -> str:
    """Writes plot-data rows as a comma-separated table with a header row.

    Returns:
        The path of the written file.
    """
    if not rows:
        raise ValueError("Cannot write an empty table.")
    path = unique_path(directory, name, "csv")
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: format_value(value) for key, value in row.items()})
    return path
