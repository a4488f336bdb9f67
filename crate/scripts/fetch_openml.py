#!/usr/bin/env python3
"""Fetch the experimental datasets from OpenML as ARFF files.

The tuning harness itself never touches the network; run this once to
populate a local data directory, then point the configs at it.

Usage:
    python3 scripts/fetch_openml.py [DEST_DIR] [NAME ...]

DEST_DIR defaults to data/openml. With no NAME arguments every known
dataset is fetched. Each dataset lands at DEST_DIR/<name>.arff.
"""

import json
import sys
import urllib.request
from pathlib import Path

# OpenML dataset ids for the 24 experimental datasets. The id is pinned so
# the same version is fetched every time; override with NAME=ID on the
# command line if a mirror renumbers.
DATASETS = {
    "bank-marketing": 1461,
    "blood-transfusion": 1464,
    "climate-simulation": 1467,
    "credit-g": 31,
    "diabetes-37": 37,
    "tic-tac-toe": 50,
    "electricity": 151,
    "gina-agnostic": 1038,
    "hill-valley": 1479,
    "ilpd": 1480,
    "kr-vs-kp": 3,
    "madelon": 1485,
    "monks-problems-1": 333,
    "monks-problems-2": 334,
    "monks-problems-3": 335,
    "mozilla4": 1046,
    "musk": 1116,
    "nomao": 1486,
    "ozone-level-8hr": 1487,
    "phoneme": 1489,
    "qsar-biodeg": 1494,
    "scene": 312,
    "steel-plates-fault": 1504,
    "wdbc": 1510,
}

API = "https://www.openml.org/api/v1/json/data/{id}"


def fetch(name: str, dataset_id: int, dest: Path) -> None:
    out = dest / f"{name}.arff"
    if out.exists():
        print(f"{name}: already present, skipping")
        return
    meta_url = API.format(id=dataset_id)
    with urllib.request.urlopen(meta_url, timeout=60) as r:
        meta = json.load(r)
    url = meta["data_set_description"]["url"]
    print(f"{name}: downloading {url}")
    with urllib.request.urlopen(url, timeout=300) as r:
        data = r.read()
    out.write_bytes(data)
    print(f"{name}: wrote {out} ({len(data)} bytes)")


def main(argv: list[str]) -> int:
    dest = Path(argv[1]) if len(argv) > 1 else Path("data/openml")
    dest.mkdir(parents=True, exist_ok=True)
    names = argv[2:] or list(DATASETS)
    failures = 0
    for name in names:
        if "=" in name:
            name, _, override = name.partition("=")
            dataset_id = int(override)
        elif name in DATASETS:
            dataset_id = DATASETS[name]
        else:
            print(f"{name}: unknown dataset (use NAME=ID to force)", file=sys.stderr)
            failures += 1
            continue
        try:
            fetch(name, dataset_id, dest)
        except Exception as e:  # noqa: BLE001 - report and continue
            print(f"{name}: failed: {e}", file=sys.stderr)
            failures += 1
    return 1 if failures else 0


if __name__ == "__main__":
    raise SystemExit(main(sys.argv))
