#!/usr/bin/env python3
"""Export perceptual-loss weights to the gansr tensor container (GSRC).

Backends:
  vgg19  torchvision VGG19 ImageNet features (16 convs); the trainer compares
         conv5_4 pre-activation features.
  lpips  torchvision VGG16 ImageNet features (13 convs) plus the five learned
         LPIPS linear reweighting kernels from the `lpips` package.

The container layout is the same GSRC format the trainer uses for
checkpoints: magic "GSRC", u32 version, u64 header length, JSON header
{"meta": ..., "tensors": [{name, dtype, shape, offset, bytes}, ...]},
then raw little-endian tensor payloads in header order.

Offline use: --random writes schema-shaped seeded random weights instead of
pretrained ones. The resulting file is only good for plumbing tests; it is
tagged in the container meta so a mixup is visible.
"""

import argparse
import json
import struct
import sys

import numpy as np

VGG19_WIDTHS = [64, 64, 128, 128, 256, 256, 256, 256,
                512, 512, 512, 512, 512, 512, 512, 512]
VGG16_WIDTHS = [64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512]
LPIPS_TAPS = [1, 3, 6, 9, 12]  # conv indices: relu1_2/2_2/3_3/4_3/5_3

DTYPE_TAGS = {np.dtype("float32"): "f32", np.dtype("float64"): "f64",
              np.dtype("int64"): "i64", np.dtype("int32"): "i32",
              np.dtype("uint8"): "u8"}


def write_container(path, meta, tensors):
    entries, blobs, offset = [], [], 0
    for name, arr in tensors:
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in DTYPE_TAGS:
            raise ValueError(f"{name}: unsupported dtype {arr.dtype}")
        entries.append({"name": name, "dtype": DTYPE_TAGS[arr.dtype],
                        "shape": list(arr.shape), "offset": offset,
                        "bytes": arr.nbytes})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"meta": meta, "tensors": entries},
                        separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(b"GSRC")
        f.write(struct.pack("<I", 1))
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)


def schema(backend):
    widths = VGG19_WIDTHS if backend == "vgg19" else VGG16_WIDTHS
    out, prev = [], 3
    for i, w in enumerate(widths):
        out.append((f"conv{i}.weight", (w, prev, 3, 3)))
        out.append((f"conv{i}.bias", (w,)))
        prev = w
    if backend == "lpips":
        for k, tap in enumerate(LPIPS_TAPS):
            out.append((f"lin{k}.weight", (1, widths[tap], 1, 1)))
    return out


def pretrained_tensors(backend):
    import torch
    import torchvision

    if backend == "vgg19":
        net = torchvision.models.vgg19(
            weights=torchvision.models.VGG19_Weights.IMAGENET1K_V1)
    else:
        net = torchvision.models.vgg16(
            weights=torchvision.models.VGG16_Weights.IMAGENET1K_V1)
    convs = [m for m in net.features if isinstance(m, torch.nn.Conv2d)]
    tensors = []
    for i, conv in enumerate(convs):
        tensors.append((f"conv{i}.weight",
                        conv.weight.detach().numpy().astype(np.float32)))
        tensors.append((f"conv{i}.bias",
                        conv.bias.detach().numpy().astype(np.float32)))
    if backend == "lpips":
        import lpips  # pip install lpips

        model = lpips.LPIPS(net="vgg", verbose=False)
        for k, lin in enumerate(model.lins):
            w = [m for m in lin.model if isinstance(m, torch.nn.Conv2d)]
            tensors.append((f"lin{k}.weight",
                            w[0].weight.detach().numpy().astype(np.float32)))
    expected = schema(backend)
    got = [(n, t.shape) for n, t in tensors]
    want = [(n, tuple(s)) for n, s in expected]
    if got != want:
        raise RuntimeError(f"extracted weights do not match the schema:\n"
                           f"got  {got}\nwant {want}")
    return tensors


def random_tensors(backend, seed):
    rng = np.random.default_rng(seed)
    tensors = []
    for name, shape in schema(backend):
        arr = rng.normal(0.0, 0.05, size=shape).astype(np.float32)
        if name.startswith("lin"):
            arr = np.abs(arr)  # LPIPS reweighting kernels are non-negative
        tensors.append((name, arr))
    return tensors


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--backend", choices=["vgg19", "lpips"], required=True)
    ap.add_argument("--out", required=True, help="output container path")
    ap.add_argument("--random", action="store_true",
                    help="seeded random weights (offline plumbing tests only)")
    ap.add_argument("--seed", type=int, default=0,
                    help="seed for --random (default 0)")
    args = ap.parse_args()

    if args.random:
        tensors = random_tensors(args.backend, args.seed)
        source = f"random(seed={args.seed})"
    else:
        tensors = pretrained_tensors(args.backend)
        source = "torchvision IMAGENET1K_V1" + (
            " + lpips v0.1 lins" if args.backend == "lpips" else "")

    meta = {"backend": args.backend, "source": source}
    write_container(args.out, meta, tensors)
    total = sum(arr.nbytes for _, arr in tensors)
    print(f"wrote {args.out}: {len(tensors)} tensors, "
          f"{total / 1e6:.1f} MB ({source})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
