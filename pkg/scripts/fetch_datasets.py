"""Download the SNAP benchmark edge lists into the data directory.

Usage: python3 scripts/fetch_datasets.py [grqc condmat ...] [--dir DIR]

Datasets without a public URL in the registry (USAir, BlogCatalog) must be
placed in the directory by hand as whitespace-separated edge lists.
"""

import argparse
import shutil
import sys
import urllib.request
from pathlib import Path

from hebbian_embed.datasets import DATASETS, data_dir, find_dataset


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("names", nargs="*", default=["grqc"], help="registry keys (default: grqc)")
    parser.add_argument("--dir", type=Path, default=None, help="target directory (default: data dir)")
    args = parser.parse_args(argv)
    target = args.dir or data_dir()
    target.mkdir(parents=True, exist_ok=True)
    status = 0
    for name in args.names:
        info = DATASETS[name.lower()]
        if find_dataset(name, target):
            print(f"{info.name}: already present")
            continue
        if info.url is None:
            print(f"{info.name}: no download URL; place one of {', '.join(info.filenames)} in {target}")
            status = 1
            continue
        dest = target / info.url.rsplit("/", 1)[-1]
        print(f"{info.name}: {info.url} -> {dest}")
        with urllib.request.urlopen(info.url, timeout=60) as resp, open(dest, "wb") as fh:
            shutil.copyfileobj(resp, fh)
    return status


if __name__ == "__main__":
    sys.exit(main())
