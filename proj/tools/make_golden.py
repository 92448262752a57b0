#!/usr/bin/env python3
"""Regenerates the frozen test data under tests/data.

Needs Pillow, numpy, scikit-image and a built `mpijpeg` binary:

    python3 tools/make_golden.py build/tools/mpijpeg

The external reference outputs (Pillow's libjpeg, scikit-image SSIM) are compared with ours
before anything is written, so a regression in either direction stops the script.
"""
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
from PIL import Image
from skimage.metrics import structural_similarity

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"


def save_png(path, arr):
    Image.fromarray(arr.astype(np.uint8)).save(path)


def load_rgb(path):
    return np.asarray(Image.open(path).convert("RGB")).astype(np.int32)


def smooth_image(rng, h, w):
    # Low-frequency content with a little noise, so 4:2:0 differences stay small.
    y, x = np.mgrid[0:h, 0:w] / max(h, w)
    out = np.zeros((h, w, 3))
    for c in range(3):
        a, b, p = rng.uniform(0.3, 1.0, 3)
        out[..., c] = 0.5 + 0.35 * np.sin(a * 2 * np.pi * x + p) * np.cos(b * 2 * np.pi * y)
    out += rng.normal(0, 0.01, out.shape)
    return np.clip(np.round(out * 255), 0, 255)


def to_ycbcr(rgb):
    rgb = rgb.astype(np.float64)
    y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    cb = 128 - 0.168736 * rgb[..., 0] - 0.331264 * rgb[..., 1] + 0.5 * rgb[..., 2]
    cr = 128 + 0.5 * rgb[..., 0] - 0.418688 * rgb[..., 1] - 0.081312 * rgb[..., 2]
    return y, cb, cr


def fancy_upsample(c):
    """libjpeg's h2v2 triangle upsampler (3/4, 1/4 taps, edges replicated)."""
    def axis0(a):
        prev = np.concatenate([a[:1], a[:-1]])
        nxt = np.concatenate([a[1:], a[-1:]])
        out = np.empty((2 * a.shape[0],) + a.shape[1:])
        out[0::2] = 0.75 * a + 0.25 * prev
        out[1::2] = 0.75 * a + 0.25 * nxt
        return out
    return axis0(axis0(c).T).T


def decoder_gap(ext, ours, mode):
    """Largest disagreement between two decodes of one stream.

    Our decoder repeats 4:2:0 chroma samples, so they are recovered by 2x2 pooling and pushed
    through libjpeg's triangle upsampler before comparing chroma.
    """
    if mode == "444":
        return np.abs(ext - ours).max()
    ye, cbe, cre = to_ycbcr(ext)
    yo, cbo, cro = to_ycbcr(ours)
    pool = lambda c: c.reshape(c.shape[0] // 2, 2, c.shape[1] // 2, 2).mean(axis=(1, 3))
    return max(np.abs(ye - yo).max(), np.abs(fancy_upsample(pool(cbo)) - cbe).max(),
               np.abs(fancy_upsample(pool(cro)) - cre).max())


def jpeg_goldens(tool, rng):
    src = smooth_image(rng, 16, 16)
    save_png(DATA / "jpeg_src16.png", src)
    for mode, pil_sub in (("444", 0), ("420", 2)):
        # External encoder -> our decoder.
        ext = DATA / f"pil_q90_{mode}.jpg"
        Image.fromarray(src.astype(np.uint8)).save(ext, quality=90, subsampling=pil_sub)
        ours_png = DATA / f"pil_q90_{mode}.decoded.png"
        subprocess.run([tool, "jpeg-decode", "--in", str(ext), "--png", str(ours_png)], check=True)
        ref = load_rgb(ext)
        ours = load_rgb(ours_png)
        # libjpeg's integer IDCT and colour conversion differ from exact arithmetic by a couple of levels.
        tol = 2 if mode == "444" else 4
        diff = decoder_gap(ref, ours, mode)
        print(f"external stream {mode}: max |ours - libjpeg| = {diff:.3f}")
        assert diff <= tol, diff

        # Our encoder -> external decoder.
        own = DATA / f"own_q90_{mode}.jpg"
        own_png = DATA / f"own_q90_{mode}.decoded.png"
        subprocess.run([tool, "jpeg-roundtrip", "--in", str(DATA / "jpeg_src16.png"), "--jpg", str(own),
                        "--png", str(own_png), "--quality", "90", "--subsampling", mode], check=True)
        ext_dec = load_rgb(own)
        ours = load_rgb(own_png)
        diff = decoder_gap(ext_dec, ours, mode)
        print(f"own stream {mode}: max |ours - libjpeg| = {diff:.3f}")
        assert diff <= tol, diff
        err = np.abs(ours - src).max()
        print(f"own stream {mode}: max |decoded - source| = {err}")


def luma(rgb8):
    rgb = rgb8.astype(np.float64) / 255.0
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def ssim_goldens(rng):
    cases = []
    base = smooth_image(rng, 24, 32)
    variants = {
        "noise": np.clip(base + rng.normal(0, 12, base.shape), 0, 255).round(),
        "shift": np.roll(base, 1, axis=1),
        "dark": (base * 0.7).round(),
    }
    save_png(DATA / "ssim_a.png", base)
    for name, img in variants.items():
        save_png(DATA / f"ssim_{name}.png", img)
        value = structural_similarity(luma(base), luma(img), win_size=11, gaussian_weights=True, sigma=1.5,
                                      use_sample_covariance=False, data_range=1.0, K1=0.01, K2=0.03)
        cases.append({"a": "ssim_a.png", "b": f"ssim_{name}.png", "ssim": float(value)})
        print(f"ssim {name}: {value:.8f}")
    (DATA / "ssim_cases.json").write_text(json.dumps(cases, indent=2) + "\n")


def main():
    if len(sys.argv) != 2:
        sys.exit("usage: make_golden.py <path to mpijpeg>")
    tool = sys.argv[1]
    DATA.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20240611)
    jpeg_goldens(tool, rng)
    ssim_goldens(rng)


if __name__ == "__main__":
    main()
