"""Where benchmark edge lists come from and where they are looked up locally.

The loaders never download anything; ``scripts/fetch_datasets.py`` does that.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

DATA_DIR_ENV = "HGE_DATA_DIR"


@dataclass(frozen=True)
class DatasetInfo:
    name: str
    filenames: tuple[str, ...]
    url: Optional[str]
    nodes: Optional[int] = None
    edges: Optional[int] = None


# node/edge counts as published with the SNAP downloads
DATASETS = {
    "grqc": DatasetInfo("GrQc", ("ca-GrQc.txt", "ca-GrQc.txt.gz", "grqc.edges"),
                        "https://snap.stanford.edu/data/ca-GrQc.txt.gz", 5242, 14496),
    "condmat": DatasetInfo("CondMat", ("ca-CondMat.txt", "ca-CondMat.txt.gz", "condmat.edges"),
                           "https://snap.stanford.edu/data/ca-CondMat.txt.gz", 23133, 93497),
    "hepph": DatasetInfo("HepPh", ("ca-HepPh.txt", "ca-HepPh.txt.gz", "hepph.edges"),
                         "https://snap.stanford.edu/data/ca-HepPh.txt.gz", 12008, 118521),
    "astroph": DatasetInfo("AstroPh", ("ca-AstroPh.txt", "ca-AstroPh.txt.gz", "astroph.edges"),
                           "https://snap.stanford.edu/data/ca-AstroPh.txt.gz", 18772, 198110),
    "hepth": DatasetInfo("HepTh", ("cit-HepTh.txt", "cit-HepTh.txt.gz", "hepth.edges"),
                         "https://snap.stanford.edu/data/cit-HepTh.txt.gz", 27770, 352807),
    "blogcatalog": DatasetInfo("BlogCatalog", ("blogcatalog.edges", "BlogCatalog.edges"), None, 10312, 333983),
    # USAir (332 airports, 2126 routes) is distributed with link-prediction benchmark
    # suites rather than SNAP; convert it to a plain edge list first.
    "usair": DatasetInfo("USAir", ("USAir.txt", "usair.edges", "USAir.edges"), None, 332, 2126),
}


def data_dir() -> Path:
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env)
    return Path(__file__).resolve().parents[2] / "data"


def find_dataset(name: str, directory: Optional[Path] = None) -> Optional[Path]:
    """Path of the first known file for ``name`` under ``directory``, or None."""
    info = DATASETS[name.lower()]
    root = Path(directory) if directory is not None else data_dir()
    for fname in info.filenames:
        candidate = root / fname
        if candidate.is_file():
            return candidate
    return None
