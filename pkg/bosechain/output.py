"""Run directories and result writers (CSV, JSON, JSON lines)."""

import csv
import json
import logging
import subprocess
from pathlib import Path
from typing import Any, Iterable, Sequence

import yaml
from pydantic import BaseModel

from bosechain import __version__
from bosechain.config import RunConfig
from bosechain.errors import ConfigurationError

logger = logging.getLogger("bosechain.output")


def git_describe() -> str | None:
    """``git describe --always --dirty`` of the source tree, if available."""
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.TimeoutExpired):
        return None
    if result.returncode != 0:
        return None
    return result.stdout.strip() or None


def prepare_run_dir(config: RunConfig, out: str | Path | None = None) -> Path:
    """Create the output directory and write the resolved config and metadata."""
    path = Path(out) if out is not None else config.output.resolve(config.name)
    if path.exists() and any(path.iterdir()) and not config.output.overwrite:
        raise ConfigurationError(f"Output directory {path} is not empty (set output.overwrite)")
    path.mkdir(parents=True, exist_ok=True)
    (path / "config.yaml").write_text(
        yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)
    )
    write_json(path / "metadata.json", {
        "package": "bosechain",
        "version": __version__,
        "git": git_describe(),
        "task": config.task.value,
        "master_seed": config.ensemble.master_seed,
    })
    logger.info("Writing results to [bold]%s[/bold]", path, extra={"markup": True})
    return path


def _plain(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def write_json(path: str | Path, payload: Any) -> None:
    Path(path).write_text(json.dumps(_plain(payload), indent=2, allow_nan=True) + "\n")


def write_jsonl(path: str | Path, records: Iterable[BaseModel]) -> None:
    with Path(path).open("w") as fh:
        for record in records:
            fh.write(record.model_dump_json() + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    with Path(path).open() as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """CSV with floats written by repr so reruns are byte-identical."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(x)) if isinstance(x, float) else x for x in row])
