"""Procedural desk-scale dataset: one authentic image family and three
forgery families with distinct, frequency-detectable artifacts, plus PPM
file I/O and stratified batching.

Every image is a pure function of (seed, domain, id, size) through the
portable PRNG in :mod:`rcdn.prng`.  The three fake families are:

* FE  - a rectangular patch (10-25% of the area) is replaced by a
        statistics-mismatched, high-frequency texture with a 2-pixel
        blended border;
* I2I - zero-order-hold blocking (4x4 blocks, i.e. two rounds of 2x
        down/upsampling) blended over the base, plus a faint comb on the
        block seams, imprinting checkerboard spectral peaks on the
        quarter-frequency family;
* T2I - the base spectrum is truncated above a strength-dependent radius
        (a high-frequency deficit) and a mild periodic grid plus a very
        small noise floor are added.

FE and I2I additionally carry a shared low-amplitude periodic grid
fingerprint (period 8), a common tell across generators.  Artifact
strength is drawn from a mixture: most fakes are strongly marked, but a
small hard tail sits close to the real family, so the decision boundary
must hug the real cluster rather than the easy midpoint.  The real family
itself is jittered in smoothness and contrast.  The task stays learnable
but not trivially separable.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import PpmParseError, ValidationError
from .prng import Xoshiro256pp, mix_key
from .spectral import dft2d, fft_shift, ComplexGrid

GENERATOR_VERSION = "rcdn-synth-1"

DOMAINS = ("REAL", "FE", "I2I", "T2I")
FAKE_DOMAINS = ("FE", "I2I", "T2I")
_DOMAIN_CODE = {d: i for i, d in enumerate(DOMAINS)}

# base texture; smoothness and contrast jitter keep the real family
# heterogeneous (a spread the detector has to treat as one class)
FIELD_MEAN = 0.5
FIELD_STD_RANGE = (0.10, 0.20)
FIELD_SIGMA_DIV_RANGE = (12.0, 22.0)  # blur sigma = size / draw
TINT_RANGE = 0.04
BLOB_COUNT = (2, 4)
BLOB_AMP = 0.18
FINE_NOISE_RANGE = (0.014, 0.030)
FINE_NOISE_SIGMA = 0.6  # mild low-pass tilt keeps the radial tail decaying

# Per-image artifact strength: most fakes are clearly marked, but a small
# hard tail sits near the real family.  The hard tail keeps the decision
# boundary honest: it cannot drift to the easy midpoint between the classes.
HARD_FRAC = 0.10    # fraction of fakes drawn from the weak tail
HARD_MAX = 0.18     # strength ceiling inside the tail
STRONG_MIN = 0.35   # strength floor outside it

# FE patch artifact
FE_AREA_RANGE = (0.10, 0.25)
FE_NOISE_RANGE = (0.030, 0.130)
FE_PATCH_STD = 0.15
FE_BLUR_SIGMA = 1.5
FE_FEATHER = 2

# I2I blocking artifact
I2I_BLOCK = 4
I2I_BLEND_RANGE = (0.05, 0.90)
I2I_SEAM_RANGE = (0.001, 0.025)

# T2I spectral-truncation artifact; weak samples truncate higher, so the
# high-frequency deficit fades toward the real family (cubic curve: the
# strong bulk truncates hard, only the tail drifts toward real)
T2I_CUTOFF_RANGE = (0.24, 0.46)
T2I_GRID_AMP_RANGE = (0.004, 0.030)
T2I_NOISE_RANGE = (0.0, 0.005)

# shared generator fingerprint: every fake family carries a faint periodic
# grid (as common upsampler stacks do), far weaker than the per-family
# artifact
FP_GRID_PERIOD = 8
FP_GRID_AMP_RANGE = (0.002, 0.020)


@dataclass
class ImageSample:
    pixels: np.ndarray  # (H, W, 3) float64 in [0, 1]
    label: int          # 0 real, 1 fake
    domain: str
    id: int


@dataclass
class DatasetSpec:
    per_domain_train: int = 500
    per_domain_test: int = 200
    image_size: int = 64
    seed: int = 0

    def validate(self):
        if self.per_domain_train <= 0 or self.per_domain_test <= 0:
            raise ValidationError("per-domain counts must be positive")
        if self.image_size < 8:
            raise ValidationError("image_size must be >= 8")
        return self


# ---------------------------------------------------------------------------
# synthesis

def _base_texture(rng, size):
    """Smooth low-pass field + soft elliptical blobs + per-channel tint and
    fine-grain noise.  Draw order is fixed for determinism."""
    noise = rng.normal(size * size).reshape(size, size)
    sigma = size / rng.uniform_range(*FIELD_SIGMA_DIV_RANGE)
    field = gaussian_filter(noise, sigma=sigma, mode="wrap")
    field = (field - field.mean()) / (field.std() + 1e-12)
    field = FIELD_MEAN + rng.uniform_range(*FIELD_STD_RANGE) * field

    n_blobs = BLOB_COUNT[0] + rng.randint(BLOB_COUNT[1] - BLOB_COUNT[0] + 1)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    for _ in range(n_blobs):
        cx = rng.uniform_range(0, size)
        cy = rng.uniform_range(0, size)
        rx = rng.uniform_range(size / 8, size / 4)
        ry = rng.uniform_range(size / 8, size / 4)
        theta = rng.uniform_range(0, 2 * np.pi)
        amp = rng.uniform_range(-BLOB_AMP, BLOB_AMP)
        dx, dy = xx - cx, yy - cy
        u = dx * np.cos(theta) + dy * np.sin(theta)
        v = -dx * np.sin(theta) + dy * np.cos(theta)
        field = field + amp * np.exp(-((u / rx) ** 2 + (v / ry) ** 2))

    tints = rng.uniform_range(-TINT_RANGE, TINT_RANGE, 3)
    fine_amp = rng.uniform_range(*FINE_NOISE_RANGE)
    fine = rng.normal(3 * size * size).reshape(size, size, 3)
    fine = gaussian_filter(fine, sigma=(FINE_NOISE_SIGMA, FINE_NOISE_SIGMA, 0),
                           mode="wrap")
    fine = fine_amp * fine / (fine.std() + 1e-12)
    return field[:, :, None] + tints[None, None, :] + fine


def _strength(rng):
    """Per-image artifact strength in (0, 1]: hard tail or strong bulk."""
    u = rng.uniform()
    if u < HARD_FRAC:
        return (u / HARD_FRAC) * HARD_MAX
    return STRONG_MIN + (1.0 - STRONG_MIN) * (u - HARD_FRAC) / (1.0 - HARD_FRAC)


def _lerp(rng_range, s):
    lo, hi = rng_range
    return lo + (hi - lo) * s


def _patch_artifact(rng, img, size, s):
    """FE: blend a mismatched high-frequency texture over a random rectangle,
    feathered over a 2-pixel border just outside it; the blend weight and the
    grain amplitude both follow the strength draw."""
    frac = rng.uniform_range(*FE_AREA_RANGE)
    aspect = rng.uniform_range(0.6, 1.6)
    pw = int(np.clip(round(size * np.sqrt(frac * aspect)), 4, size - 2))
    ph = int(np.clip(round(size * np.sqrt(frac / aspect)), 4, size - 2))
    x0 = rng.randint(size - pw + 1)
    y0 = rng.randint(size - ph + 1)

    mean = rng.uniform_range(0.3, 0.7)
    noise_amp = _lerp(FE_NOISE_RANGE, s)
    rough = gaussian_filter(rng.normal(size * size).reshape(size, size),
                            sigma=FE_BLUR_SIGMA, mode="wrap")
    rough = (rough - rough.mean()) / (rough.std() + 1e-12)
    grain = noise_amp * rng.normal(3 * size * size).reshape(size, size, 3)
    patch = mean + FE_PATCH_STD * rough[:, :, None] + grain

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dx = np.maximum(np.maximum(x0 - xx, xx - (x0 + pw - 1)), 0.0)
    dy = np.maximum(np.maximum(y0 - yy, yy - (y0 + ph - 1)), 0.0)
    dist = np.maximum(dx, dy)  # chebyshev distance outside the rectangle
    alpha = np.clip(1.0 - dist / (FE_FEATHER + 1), 0.0, 1.0)
    alpha = alpha * (0.6 + 0.4 * s)
    out = img * (1.0 - alpha[:, :, None]) + patch * alpha[:, :, None]
    return out, (x0, y0, pw, ph)


def _blocking_artifact(rng, img, size, s):
    """I2I: 4x4 zero-order-hold blocking blended over the base image, plus
    faint block-boundary seams.

    The seams matter: a pure zero-order hold carries a Dirichlet envelope
    whose nulls sit exactly on the size/4-family bins, so the hold alone
    leaves no energy there.  The period-4 seam comb puts it back, which is
    also how blocky resampling artifacts look in practice.
    """
    if size % I2I_BLOCK:
        raise ValidationError(f"image_size must be divisible by {I2I_BLOCK} for I2I")
    beta = _lerp(I2I_BLEND_RANGE, s)
    down = img[::I2I_BLOCK, ::I2I_BLOCK, :]
    blocked = np.repeat(np.repeat(down, I2I_BLOCK, axis=0), I2I_BLOCK, axis=1)
    out = (1.0 - beta) * img + beta * blocked

    seam_amp = _lerp(I2I_SEAM_RANGE, s)
    idx = np.arange(size)
    on_seam = (idx % I2I_BLOCK == 0)
    seam = (on_seam[:, None] | on_seam[None, :]).astype(np.float64)
    seam -= seam.mean()
    return out + seam_amp * seam[:, :, None]


def _fp_grid(size):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    return (np.sin(2 * np.pi * xx / FP_GRID_PERIOD)
            * np.sin(2 * np.pi * yy / FP_GRID_PERIOD))


def _fingerprint(rng, img, size, s):
    """Add the shared periodic fingerprint.  Its amplitude follows the same
    strength draw as the domain artifact (with a small jitter), so weak-tail
    fakes carry an equally weak fingerprint."""
    amp = _lerp(FP_GRID_AMP_RANGE, s) * rng.uniform_range(0.8, 1.2)
    return img + amp * _fp_grid(size)[:, :, None]


def _truncation_artifact(rng, img, size, s):
    """T2I: remove all spectral content above a strength-dependent radius,
    add a mild periodic grid (its fingerprint, amplitude also tied to
    strength) and a very small fine-noise floor."""
    lo, hi = T2I_CUTOFF_RANGE
    cutoff = lo + (hi - lo) * (1.0 - s) ** 4
    spec = np.fft.fft2(img, axes=(0, 1))
    freqs = np.fft.fftfreq(size) * size
    radius = np.sqrt(freqs[:, None] ** 2 + freqs[None, :] ** 2)
    keep = (radius <= cutoff * size)[:, :, None]
    smooth = np.real(np.fft.ifft2(spec * keep, axes=(0, 1)))

    grid_amp = _lerp(T2I_GRID_AMP_RANGE, s)
    smooth = smooth + grid_amp * _fp_grid(size)[:, :, None]
    noise_amp = rng.uniform_range(*T2I_NOISE_RANGE)
    noise = noise_amp * rng.normal(3 * size * size).reshape(size, size, 3)
    return smooth + noise


def synth_image(domain, seed, idx, size):
    """Pixels of one sample: pure function of (seed, domain, id, size)."""
    if domain not in DOMAINS:
        raise ValidationError(f"unknown domain tag {domain!r}")
    rng = Xoshiro256pp(mix_key(seed, _DOMAIN_CODE[domain], idx, size))
    img = _base_texture(rng, size)
    if domain != "REAL":
        s = _strength(rng)
    if domain == "FE":
        img, _ = _patch_artifact(rng, img, size, s)
        img = _fingerprint(rng, img, size, s)
    elif domain == "I2I":
        img = _blocking_artifact(rng, img, size, s)
        img = _fingerprint(rng, img, size, s)
    elif domain == "T2I":
        img = _truncation_artifact(rng, img, size, s)
    return np.clip(img, 0.0, 1.0)


def gen_real(seed, n, size, id_start=0):
    return [ImageSample(synth_image("REAL", seed, i, size), 0, "REAL", i)
            for i in range(id_start, id_start + n)]


def gen_fake(domain, seed, n, size, id_start=0):
    if domain not in FAKE_DOMAINS:
        raise ValidationError(f"unknown fake domain tag {domain!r}")
    return [ImageSample(synth_image(domain, seed, i, size), 1, domain, i)
            for i in range(id_start, id_start + n)]


# ---------------------------------------------------------------------------
# spectral measurement helpers (shared by the separability gate and tests)

def radial_profile(pixels, n_bins):
    """Mean |F| of the centered luminance spectrum per integer radius bin."""
    lum = np.asarray(pixels, dtype=np.float64).mean(axis=2)
    size = lum.shape[0]
    mag = np.abs(fft_shift(ComplexGrid(dft2d(lum)[None])).data[0])
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy = cx = size // 2
    radius = np.rint(np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)).astype(int)
    profile = np.empty(n_bins)
    for r in range(1, n_bins + 1):
        profile[r - 1] = mag[radius == r].mean()
    return profile


def spectral_features(pixels):
    """(high-band energy, checkerboard-peak energy) of one image.

    High band: mean |F|^2 over shifted radii in (size/4, size/2].
    Checkerboard: mean |F|^2 over the quarter-frequency family, i.e. all
    bins whose unshifted indices are multiples of size/4, excluding DC.
    """
    img = np.asarray(pixels, dtype=np.float64)
    size = img.shape[0]
    lum = img.mean(axis=2)
    spec = dft2d(lum)
    mag2 = np.abs(spec) ** 2 / (size * size)

    freqs = (np.arange(size) + size // 2) % size - size // 2  # signed frequency
    radius = np.sqrt(freqs[:, None] ** 2 + freqs[None, :] ** 2)
    band = (radius > size / 4) & (radius <= size / 2)
    high_band = mag2[band].mean()

    q = size // 4
    marks = np.arange(size) % q == 0
    family = marks[:, None] & marks[None, :]
    family[0, 0] = False
    checker = mag2[family].mean()
    return high_band, checker


def probe_separability(fake_domain, seed=0, size=64, n_train=100, n_heldout=200):
    """Accuracy of a two-feature linear probe (log high-band, log checker
    energy) separating REAL from ``fake_domain`` on held-out samples.

    The dataset difficulty gate asks this to land in [0.90, 0.995]:
    learnable from the spectrum, but not perfectly separable.
    """
    from sklearn.linear_model import LogisticRegression

    def features(domain, label, id_start, n):
        gen = gen_real if domain == "REAL" else lambda s, k, z, id_start: \
            gen_fake(domain, s, k, z, id_start)
        xs = [spectral_features(s.pixels) for s in gen(seed, n, size, id_start)]
        return np.log(np.asarray(xs) + 1e-12), np.full(n, label)

    half = n_train // 2
    x_tr = np.concatenate([features("REAL", 0, 0, half)[0],
                           features(fake_domain, 1, 0, half)[0]])
    y_tr = np.concatenate([np.zeros(half), np.ones(half)])
    hh = n_heldout // 2
    x_te = np.concatenate([features("REAL", 0, 10_000, hh)[0],
                           features(fake_domain, 1, 10_000, hh)[0]])
    y_te = np.concatenate([np.zeros(hh), np.ones(hh)])

    probe = LogisticRegression(max_iter=1000).fit(x_tr, y_tr)
    return float(probe.score(x_te, y_te))


# ---------------------------------------------------------------------------
# PPM (P6, maxval 255) reader/writer

def save_ppm(path, pixels):
    img = np.asarray(pixels, dtype=np.float64)
    h, w, c = img.shape
    if c != 3:
        raise ValidationError(f"PPM writer expects 3 channels, got {c}")
    q = np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(q.tobytes())


def _ppm_token(data, pos):
    """Next whitespace-delimited token after ``pos``, skipping '#' comments."""
    n = len(data)
    while pos < n:
        ch = data[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise PpmParseError("unterminated comment", pos)
            pos = nl + 1
        else:
            break
    if pos >= n:
        raise PpmParseError("unexpected end of header", pos)
    end = pos
    while end < n and not data[end:end + 1].isspace():
        end += 1
    return data[pos:end], end


def load_ppm(path):
    """Read a binary P6 file back into an (H, W, 3) array in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, pos = _ppm_token(data, 0)
    if magic != b"P6":
        raise PpmParseError(f"bad magic {magic!r}, expected b'P6'", 0)
    fields = []
    for name in ("width", "height", "maxval"):
        tok, pos = _ppm_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise PpmParseError(f"non-numeric {name} field {tok!r}", pos - len(tok))
    w, h, maxval = fields
    if w <= 0 or h <= 0:
        raise PpmParseError(f"non-positive image size {w}x{h}", pos)
    if maxval != 255:
        raise PpmParseError(f"unsupported maxval {maxval}", pos)
    pos += 1  # exactly one whitespace byte separates header and raster
    expected = w * h * 3
    raster = data[pos:pos + expected]
    if len(raster) != expected:
        raise PpmParseError(
            f"raster holds {len(raster)} bytes, expected {expected}", pos + len(raster))
    q = np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3)
    return q.astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# dataset build / load

def _sample_path(root, domain, split, idx):
    return os.path.join(root, domain, split, f"{idx}.ppm")


def build_dataset(spec, root, workers=None):
    """Write all four domains under ``root`` as
    <root>/<domain>/<split>/<id>.ppm plus a manifest.json.

    Train ids are 0..n_train-1, test ids continue after them (disjoint).
    """
    spec = spec.validate()
    if workers is None:
        workers = max(1, int(os.environ.get("RCDN_THREADS", "1")))

    jobs = []
    for domain in DOMAINS:
        for split, count, start in (("train", spec.per_domain_train, 0),
                                    ("test", spec.per_domain_test, spec.per_domain_train)):
            os.makedirs(os.path.join(root, domain, split), exist_ok=True)
            jobs.extend((domain, split, start + i) for i in range(count))

    def render(job):
        domain, split, idx = job
        pixels = synth_image(domain, spec.seed, idx, spec.image_size)
        save_ppm(_sample_path(root, domain, split, idx), pixels)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(render, jobs))
    else:
        for job in jobs:
            render(job)

    manifest = {
        "spec": asdict(spec),
        "seed": spec.seed,
        "counts": {d: {"train": spec.per_domain_train, "test": spec.per_domain_test}
                   for d in DOMAINS},
        "generator_version": GENERATOR_VERSION,
    }
    with open(os.path.join(root, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def load_manifest(root):
    path = os.path.join(root, "manifest.json")
    if not os.path.exists(path):
        raise ValidationError(f"no manifest.json under {root}")
    with open(path) as fh:
        return json.load(fh)


def load_split(root, domain, split):
    """Read one <domain>/<split> directory back into ImageSamples, id order."""
    manifest = load_manifest(root)
    counts = manifest["counts"][domain][split]
    start = 0 if split == "train" else manifest["counts"][domain]["train"]
    samples = []
    for i in range(start, start + counts):
        path = _sample_path(root, domain, split, i)
        if not os.path.exists(path):
            raise ValidationError(f"dataset shortfall: missing {path}")
        samples.append(ImageSample(load_ppm(path), 0 if domain == "REAL" else 1,
                                   domain, i))
    return samples


def stratified_batches(samples, batch_size, seed):
    """Seeded batches with at least 2 real and 2 fake samples each.

    The epoch order is a seeded permutation; a final batch that cannot be
    filled under the constraint is dropped.  Every retained sample appears
    exactly once.
    """
    if batch_size < 4 or batch_size % 2:
        raise ValidationError("batch_size must be even and >= 4")
    reals = [s for s in samples if s.label == 0]
    fakes = [s for s in samples if s.label == 1]
    if not reals or not fakes:
        raise ValidationError("both classes must be present for stratified batching")

    rng = np.random.default_rng(seed)
    reals = [reals[i] for i in rng.permutation(len(reals))]
    fakes = [fakes[i] for i in rng.permutation(len(fakes))]

    batches = []
    n_batches = len(samples) // batch_size
    ri = fi = 0
    for b in range(n_batches):
        remaining = n_batches - b
        want_real = int(round((len(reals) - ri) / remaining))
        want_real = max(2, min(batch_size - 2, want_real))
        want_fake = batch_size - want_real
        if len(reals) - ri < want_real or len(fakes) - fi < want_fake:
            break
        batch = reals[ri:ri + want_real] + fakes[fi:fi + want_fake]
        ri += want_real
        fi += want_fake
        order = rng.permutation(batch_size)
        batches.append([batch[i] for i in order])
    return batches
