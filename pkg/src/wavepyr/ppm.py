"""Binary PPM/PGM image I/O with a [0, 1] float interface.

P6 (3-channel) and P5 (1-channel), 8-bit only. Pixel bytes map to floats
by /255 on read; writes clip to [0, 1] and round. PNG support is optional
and only engaged when a caller asks for it (requires Pillow).
"""

import numpy as np


def _read_token(fh):
    # skip whitespace and '#' comments, then read one token
    token = b""
    while True:
        ch = fh.read(1)
        if not ch:
            raise ValueError("unexpected end of file in header")
        if ch == b"#":
            while ch and ch != b"\n":
                ch = fh.read(1)
            continue
        if ch.isspace():
            if token:
                return token
            continue
        token += ch


def read_image(path):
    """Read a P5/P6 file into a float (H, W, C) array with C of 1 or 3."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic == b"P6":
            channels = 3
        elif magic == b"P5":
            channels = 1
        else:
            raise ValueError(f"{path}: not a binary PPM/PGM file (magic {magic!r})")
        width = int(_read_token(fh))
        height = int(_read_token(fh))
        maxval = int(_read_token(fh))
        if maxval != 255:
            raise ValueError(f"{path}: only 8-bit images supported, maxval={maxval}")
        raw = fh.read(width * height * channels)
        if len(raw) != width * height * channels:
            raise ValueError(f"{path}: pixel payload truncated")
    img = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, channels)
    return img.astype(np.float64) / 255.0


def write_image(path, image):
    """Write a float image in [0, 1] as P6 (3 channels) or P5 (1 channel)."""
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[2] not in (1, 3):
        raise ValueError(f"cannot write image of shape {np.shape(image)}")
    data = np.clip(np.rint(x * 255.0), 0, 255).astype(np.uint8)
    h, w, c = data.shape
    magic = b"P6" if c == 3 else b"P5"
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(data.tobytes())


def write_png(path, image):
    """Optional PNG writer; needs the Pillow extra."""
    try:
        from PIL import Image
    except ImportError as exc:
        raise RuntimeError(
            "PNG output requires Pillow; install the 'png' extra or use PPM"
        ) from exc
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    data = np.clip(np.rint(x * 255.0), 0, 255).astype(np.uint8)
    if data.shape[2] == 1:
        Image.fromarray(data[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(data, mode="RGB").save(path)
