"""Place MovieLens 100K ``u.data`` under ``data/ml-100k/``.

Tries the GroupLens archive first. Offline mirrors that only serve Python
packages can still provide the file: the ``recbole`` wheel ships the same
100,000 ratings as ``dataset_example/ml-100k/ml-100k.inter`` (with a header
line), so the wheel is downloaded with pip and the file is extracted from it.
"""
import argparse
import io
import subprocess
import sys
import tempfile
import urllib.request
import zipfile
from pathlib import Path

GROUPLENS_URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
WHEEL_MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"


def from_grouplens():
    with urllib.request.urlopen(GROUPLENS_URL, timeout=30) as resp:
        archive = zipfile.ZipFile(io.BytesIO(resp.read()))
    return archive.read("ml-100k/u.data").decode()


def from_wheel():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "--timeout", "300",
             "-d", tmp, "recbole==1.2.1"],
            check=True,
        )
        wheel = next(Path(tmp).glob("recbole-*.whl"))
        text = zipfile.ZipFile(wheel).read(WHEEL_MEMBER).decode()
    lines = text.splitlines()
    if lines and lines[0].startswith("user_id"):
        lines = lines[1:]
    return "\n".join(lines) + "\n"


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dest", default=Path(__file__).resolve().parents[1] / "data" / "ml-100k",
                        type=Path)
    args = parser.parse_args()
    target = args.dest / "u.data"
    if target.exists():
        print(f"{target} already present")
        return
    try:
        text = from_grouplens()
    except OSError as exc:
        print(f"GroupLens unreachable ({exc}); extracting from the recbole wheel")
        text = from_wheel()
    n = sum(1 for line in text.splitlines() if line.strip())
    if n != 100_000:
        raise SystemExit(f"expected 100000 ratings, got {n}")
    args.dest.mkdir(parents=True, exist_ok=True)
    target.write_text(text)
    print(f"wrote {n} ratings to {target}")


if __name__ == "__main__":
    main()
