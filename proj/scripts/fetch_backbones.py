#!/usr/bin/env python3
"""Convert ImageNet-pretrained torchvision VGG19/ResNet50 (and optionally
LPIPS-VGG) weights into the toolkit's archive format.

    python scripts/fetch_backbones.py --out weights [--lpips]

Needs network access the first time torchvision downloads the weights.
LPIPS conversion needs the `lpips` package.
"""

import argparse
import json
import pathlib
import struct
import zlib

import numpy as np
import torch

MAGIC = b"DPSRARC\x01"
DTYPES = {np.dtype("float32"): 1, np.dtype("float64"): 2, np.dtype("int64"): 3, np.dtype("uint8"): 4}


def write_archive(path, entries):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".partial")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(entries)))
        for name, array in entries:
            array = np.array(array, order="C", copy=True)
            raw = name.encode()
            f.write(struct.pack("<I", len(raw)) + raw)
            f.write(struct.pack("<BB", DTYPES[array.dtype], array.ndim))
            f.write(struct.pack(f"<{array.ndim}q", *array.shape))
            payload = array.astype(array.dtype.newbyteorder("<"), copy=False).tobytes()
            f.write(struct.pack("<I", zlib.crc32(payload)))
            f.write(payload)
    tmp.replace(path)


def state_entries(state, rename=lambda k: k, skip=lambda k: False):
    out = []
    for key, value in state.items():
        if skip(key):
            continue
        out.append((rename(key), value.detach().cpu().numpy()))
    return out


def meta(kind, source):
    return ("__meta__", np.frombuffer(json.dumps({"kind": kind, "source": source}).encode(), dtype=np.uint8))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=pathlib.Path, default=pathlib.Path("weights"))
    parser.add_argument("--lpips", action="store_true", help="also convert LPIPS-VGG weights")
    args = parser.parse_args()

    import torchvision

    vgg = torchvision.models.vgg19(weights=torchvision.models.VGG19_Weights.IMAGENET1K_V1)
    entries = state_entries(vgg.state_dict(), skip=lambda k: not k.startswith("features."))
    write_archive(args.out / "vgg19.dpsr", entries + [meta("vgg19", "torchvision IMAGENET1K_V1")])

    resnet = torchvision.models.resnet50(weights=torchvision.models.ResNet50_Weights.IMAGENET1K_V1)
    entries = state_entries(resnet.state_dict(), skip=lambda k: k.startswith("fc."))
    write_archive(args.out / "resnet50.dpsr", entries + [meta("resnet50", "torchvision IMAGENET1K_V1")])

    if args.lpips:
        import lpips

        model = lpips.LPIPS(net="vgg", verbose=False)
        state = model.state_dict()

        def rename(key):
            # net.sliceK.N.weight -> features.N.weight, linK.model.1.weight -> linK.weight
            parts = key.split(".")
            if parts[0] == "net":
                return "features." + ".".join(parts[2:])
            return f"{parts[0]}.weight"

        entries = state_entries(state, rename, skip=lambda k: k.startswith(("scaling_layer", "lins.")))
        write_archive(args.out / "lpips_vgg.dpsr", entries + [meta("lpips-vgg", "lpips 0.1 vgg")])

    print(f"wrote weights to {args.out}")


if __name__ == "__main__":
    torch.set_grad_enabled(False)
    main()
