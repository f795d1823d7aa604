#!/usr/bin/env python3
"""Download the LINQS Cora tarball and write edges.tsv, features.csv, labels.csv."""
import argparse
import io
import pathlib
import tarfile
import urllib.request

URL = "https://linqs-data.soe.ucsc.edu/public/lbc/cora.tgz"


def read_members(tgz):
    with tarfile.open(fileobj=io.BytesIO(tgz), mode="r:gz") as tar:
        files = {pathlib.Path(m.name).name: tar.extractfile(m).read().decode() for m in tar if m.isfile()}
    return files["cora.content"], files["cora.cites"]


def convert(content, cites, out):
    ids, feats, labels = [], [], []
    for line in content.splitlines():
        parts = line.split()
        if not parts:
            continue
        ids.append(parts[0])
        feats.append(parts[1:-1])
        labels.append(parts[-1])
    index = {p: i for i, p in enumerate(ids)}
    classes = sorted(set(labels))
    edges = set()
    for line in cites.splitlines():
        parts = line.split()
        if len(parts) != 2 or parts[0] not in index or parts[1] not in index:
            continue
        u, v = index[parts[0]], index[parts[1]]
        if u != v:
            edges.add((min(u, v), max(u, v)))

    out.mkdir(parents=True, exist_ok=True)
    with open(out / "edges.tsv", "w") as f:
        f.write(f"# Cora, {len(ids)} vertices, {len(edges)} undirected unit-weight edges\n")
        for u, v in sorted(edges):
            f.write(f"{u}\t{v}\t1\n")
    with open(out / "features.csv", "w") as f:
        for row in feats:
            f.write(",".join(row) + "\n")
    with open(out / "labels.csv", "w") as f:
        f.write(f"K={len(classes)}\n")
        for i, lab in enumerate(labels):
            f.write(f"{i},{classes.index(lab)}\n")
    print(f"{len(ids)} vertices, {len(edges)} edges, {len(feats[0])} attributes, {len(classes)} classes -> {out}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data/cora", type=pathlib.Path)
    ap.add_argument("--tarball", type=pathlib.Path, help="use a local cora.tgz instead of downloading")
    args = ap.parse_args()
    tgz = args.tarball.read_bytes() if args.tarball else urllib.request.urlopen(URL, timeout=60).read()
    convert(*read_members(tgz), args.out)


if __name__ == "__main__":
    main()
