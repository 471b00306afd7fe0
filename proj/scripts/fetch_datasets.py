#!/usr/bin/env python3
"""Fetch the public example datasets and convert them to the plain CSV layout
read by `uniqtest test`.

  turtles.csv   76 nest-leaving directions in degrees (Stephens 1969,
                Mardia & Jupp p. 9), taken from the pycircstat2 data bundle.
  faithful.csv  Old Faithful eruptions/waiting (R datasets), via pydataset.
  iris.csv      the four iris measurements (R datasets), via pydataset.

Packages are fetched with `pip download` (no install).  The converted files are
checked against data/SHA256SUMS.
"""
import argparse
import csv
import hashlib
import io
import pathlib
import subprocess
import sys
import tarfile
import tempfile
import zipfile

ROOT = pathlib.Path(__file__).resolve().parent.parent
DATA = ROOT / "data"


def pip_download(pkg, dest):
    subprocess.run([sys.executable, "-m", "pip", "download", pkg, "--no-deps",
                    "-d", str(dest), "-q"], check=True)
    return next(pathlib.Path(dest).iterdir())


def turtles(tmp):
    whl = pip_download("pycircstat2==0.1.15", tmp / "pc2")
    with zipfile.ZipFile(whl) as z:
        raw = z.read("pycircstat2/data/fisher/B3.csv").decode()
    rows = list(csv.reader(io.StringIO(raw)))[1:]
    lines = ["# turtles: direction in degrees, n=76"]
    lines += [r[1].strip() for r in rows if r]
    return "\n".join(lines) + "\n"


def r_datasets(tmp):
    sdist = pip_download("pydataset==0.2.0", tmp / "pyd")
    with tarfile.open(sdist) as t:
        member = next(m for m in t.getmembers() if m.name.endswith("resources.tar.gz"))
        inner = tarfile.open(fileobj=io.BytesIO(t.extractfile(member).read()))
        def read(name):
            m = inner.getmember(f"resources/rdata/csv/datasets/{name}.csv")
            return list(csv.reader(io.StringIO(inner.extractfile(m).read().decode())))
        faithful = read("faithful")
        iris = read("iris")
    f_lines = ["# faithful: eruptions,waiting"]
    f_lines += [f"{r[1]},{r[2]}" for r in faithful[1:]]
    i_lines = ["# iris: Sepal.Length,Sepal.Width,Petal.Length,Petal.Width"]
    i_lines += [",".join(r[1:5]) for r in iris[1:]]
    return "\n".join(f_lines) + "\n", "\n".join(i_lines) + "\n"


def sha256(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--verify-only", action="store_true")
    ap.add_argument("--write-sums", action="store_true",
                    help="regenerate data/SHA256SUMS from the converted files")
    args = ap.parse_args()
    names = ["turtles.csv", "faithful.csv", "iris.csv"]
    if not args.verify_only:
        with tempfile.TemporaryDirectory() as d:
            tmp = pathlib.Path(d)
            faithful, iris = r_datasets(tmp)
            contents = {"turtles.csv": turtles(tmp), "faithful.csv": faithful,
                        "iris.csv": iris}
        DATA.mkdir(exist_ok=True)
        for name in names:
            (DATA / name).write_text(contents[name])
    sums = DATA / "SHA256SUMS"
    if args.write_sums:
        sums.write_text("".join(f"{sha256(DATA / n)}  {n}\n" for n in names))
    expected = dict(reversed(line.split()) for line in sums.read_text().splitlines())
    bad = [n for n in names if expected.get(n) != sha256(DATA / n)]
    if bad:
        print("checksum mismatch:", ", ".join(bad), file=sys.stderr)
        return 1
    print("datasets ok:", ", ".join(names))
    return 0


if __name__ == "__main__":
    sys.exit(main())
