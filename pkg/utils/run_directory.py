"""
Run Directories
Every command writes under ``<out>/<command>-<config hash>-<YYYYmmdd-HHMMSS>/``
together with the resolved configuration that produced it.
"""

import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional, Union

RESOLVED_CONFIG_NAME = "config.resolved.json"


def run_directory_name(command: str, config_hash: str, now: Optional[datetime] = None) -> str:
    now = now or datetime.now()
    return f"{command}-{config_hash}-{now.strftime('%Y%m%d-%H%M%S')}"


def create_run_directory(out: Union[str, Path], command: str, config_hash: str, tree: Dict[str, Any],
                         now: Optional[datetime] = None) -> Path:
    """Create a fresh run directory and store the resolved config in it."""
    base = Path(out) / run_directory_name(command, config_hash, now)
    run_dir = base
    suffix = 1
    while run_dir.exists():
        run_dir = base.with_name(f"{base.name}-{suffix}")
        suffix += 1
    run_dir.mkdir(parents=True)
    with open(run_dir / RESOLVED_CONFIG_NAME, "w") as f:
        json.dump(tree, f, indent=2, sort_keys=True)
    return run_dir
