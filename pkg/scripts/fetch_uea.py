"""Download UEA classification datasets used by the benchmark suite.

Grabs the official zip for each requested dataset and unpacks just the
<Name>_TRAIN.ts / <Name>_TEST.ts pair into <out>/<Name>/.  Needs network
access; run it on a connected machine and copy the directory over if the
evaluation host is offline.

    python3 scripts/fetch_uea.py                      # the four defaults
    python3 scripts/fetch_uea.py Epilepsy --out data/UEA
"""

import argparse
import io
import sys
import urllib.error
import urllib.request
import zipfile
from pathlib import Path

DEFAULT_DATASETS = [
    "Epilepsy",
    "RacketSports",
    "CharacterTrajectories",
    "SpokenArabicDigits",
]

# Hosting has moved over the years; try the known layouts in order.
URL_TEMPLATES = [
    "https://timeseriesclassification.com/aeon-toolkit/{name}.zip",
    "https://www.timeseriesclassification.com/aeon-toolkit/{name}.zip",
    "https://www.timeseriesclassification.com/Downloads/{name}.zip",
]


def download(name: str) -> bytes:
    last_err = None
    for template in URL_TEMPLATES:
        url = template.format(name=name)
        try:
            print(f"  trying {url}")
            with urllib.request.urlopen(url, timeout=120) as resp:
                return resp.read()
        except (urllib.error.URLError, OSError) as err:
            last_err = err
    raise RuntimeError(f"could not download {name}: {last_err}")


def extract_splits(blob: bytes, name: str, out_dir: Path) -> None:
    wanted = {f"{name}_TRAIN.ts", f"{name}_TEST.ts"}
    found = set()
    with zipfile.ZipFile(io.BytesIO(blob)) as zf:
        for info in zf.infolist():
            base = Path(info.filename).name
            if base in wanted:
                out_dir.mkdir(parents=True, exist_ok=True)
                (out_dir / base).write_bytes(zf.read(info))
                found.add(base)
    missing = wanted - found
    if missing:
        raise RuntimeError(f"{name}.zip did not contain {sorted(missing)}")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("datasets", nargs="*", default=DEFAULT_DATASETS,
                    help=f"dataset names (default: {' '.join(DEFAULT_DATASETS)})")
    ap.add_argument("--out", default="data/UEA", help="output directory")
    args = ap.parse_args()

    out_root = Path(args.out)
    failures = []
    for name in args.datasets:
        target = out_root / name
        if (target / f"{name}_TRAIN.ts").exists() and (target / f"{name}_TEST.ts").exists():
            print(f"{name}: already present, skipping")
            continue
        print(f"{name}: downloading")
        try:
            blob = download(name)
            extract_splits(blob, name, target)
            print(f"{name}: ok ({len(blob) / 1e6:.1f} MB)")
        except RuntimeError as err:
            print(f"{name}: FAILED ({err})", file=sys.stderr)
            failures.append(name)
    if failures:
        print(f"failed: {' '.join(failures)}", file=sys.stderr)
        return 1
    print(f"done; point the tests at it with SINBAD_UEA_DIR={out_root}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
