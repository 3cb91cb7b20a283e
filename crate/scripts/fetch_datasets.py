#!/usr/bin/env python3
"""Fetch MovieLens 100K and FilmTrust rating files into ./data.

Neither dataset can be redistributed with this repository, so they are pulled
from PyPI wheels that bundle them:

  * MovieLens 100K: recbole 1.2.1 (recbole/dataset_example/ml-100k/ml-100k.inter)
  * FilmTrust:      librec-auto 0.0.50 (librec_auto/demo/data/filmtrust.txt)

Output:
  data/ml-100k/u.data          user<TAB>item<TAB>rating<TAB>timestamp
  data/filmtrust/ratings.txt   user<TAB>item<TAB>rating
"""
import glob
import os
import subprocess
import sys
import tempfile
import zipfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def wheel(spec, tmp):
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", spec, "-d", tmp],
        check=True,
    )
    name = spec.split("==")[0].replace("-", "_")
    return glob.glob(os.path.join(tmp, f"{name}-*.whl"))[0]


def main():
    with tempfile.TemporaryDirectory() as tmp:
        ml = zipfile.ZipFile(wheel("recbole==1.2.1", tmp))
        lines = ml.read("recbole/dataset_example/ml-100k/ml-100k.inter").decode().splitlines()
        os.makedirs(os.path.join(ROOT, "data", "ml-100k"), exist_ok=True)
        with open(os.path.join(ROOT, "data", "ml-100k", "u.data"), "w") as f:
            # drop the atomic-file header line
            f.write("\n".join(lines[1:]) + "\n")

        ft = zipfile.ZipFile(wheel("librec-auto==0.0.50", tmp))
        os.makedirs(os.path.join(ROOT, "data", "filmtrust"), exist_ok=True)
        with open(os.path.join(ROOT, "data", "filmtrust", "ratings.txt"), "wb") as f:
            f.write(ft.read("librec_auto/demo/data/filmtrust.txt"))


if __name__ == "__main__":
    main()
