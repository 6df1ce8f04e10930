"""
paths.py

Utility function for initializing the run directory on the start of each CLI invocation that asks for persistent
logs. Decoupled from main code in case we want separate directory structures/artifact storage per infrastructure.
"""
import os
from pathlib import Path
from typing import Dict


def create_paths(run_id: str, run_dir: str) -> Dict[str, Path]:
    """
    Create the necessary directories conditioned on the `run_id` and run directory.

    :param run_id: Unique Run Identifier.
    :param run_dir: Path to run directory to save logs, metrics and intermediate artifacts.

    :return: Dictionary mapping str ids --> paths on the filesystem.
    """
    # To respect shortcuts in paths, such as ~
    run_dir = os.path.expanduser(run_dir)

    paths = {
        # Top-Level Directory for Given Run (holds the run log)
        "runs": Path(run_dir) / run_id,
    }

    # Programatically Create Paths for each Directory
    for p in paths:
        paths[p].mkdir(parents=True, exist_ok=True)

    return paths
