#!/usr/bin/env python3
"""Download the Fashion-MNIST IDX files needed by the dataset smoke test.

Files land uncompressed in ULAB_DATA_DIR (or ./data). Needs network access;
run it once, after which the test suite picks the files up automatically.
"""
import gzip
import os
import pathlib
import shutil
import sys
import urllib.request

MIRROR = "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com"
FILES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)


def main() -> int:
    dest = pathlib.Path(os.environ.get("ULAB_DATA_DIR", "data"))
    dest.mkdir(parents=True, exist_ok=True)
    for name in FILES:
        target = dest / name
        if target.exists():
            print(f"{target} already present")
            continue
        url = f"{MIRROR}/{name}.gz"
        print(f"fetching {url}")
        gz_path = dest / f"{name}.gz"
        urllib.request.urlretrieve(url, gz_path)
        with gzip.open(gz_path, "rb") as src, open(target, "wb") as out:
            shutil.copyfileobj(src, out)
        gz_path.unlink()
        print(f"wrote {target} ({target.stat().st_size} bytes)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
