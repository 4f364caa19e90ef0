"""Portable pseudo-random generator for procedural data synthesis.

Cross-platform reproducibility of the synthetic dataset cannot rely on any
library's RNG internals, so the generator is pinned explicitly:

* splitmix64 for seeding and key mixing, with the usual constants
  gamma = 0x9E3779B97F4A7C15, mix1 = 0xBF58476D1CE4E5B9, mix2 = 0x94D049BB133111EB
  and shift triple (30, 27, 31).
* xoshiro256++ for the output stream: rotl(s0 + s3, 23) + s0, state update with
  t = s1 << 17, the xor cascade, and rotl(s3, 45).

All arithmetic is modulo 2**64.  For throughput the implementation advances
``lanes`` independent xoshiro streams in lockstep with numpy uint64 vectors;
stream l is seeded from splitmix64(seed_key + l).  Outputs are emitted
round-major (all lanes of round 0, then round 1, ...), which makes the output
sequence a pure function of (seed_key, lanes).
"""

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# 2**-53, for converting the top 53 bits of a uint64 to a double in [0, 1)
_U53 = 1.0 / float(1 << 53)


def _splitmix64_mix(z):
    """The splitmix64 output mix; z is uint64 scalar or ndarray."""
    z = np.uint64(z) if not isinstance(z, np.ndarray) else z
    with np.errstate(over="ignore"):  # modulo-2**64 wrap is the point
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def splitmix64_stream(seed, n):
    """First n outputs of the splitmix64 sequence started at ``seed``."""
    with np.errstate(over="ignore"):
        base = (seed + _GAMMA * np.arange(1, n + 1, dtype=np.uint64)).astype(np.uint64)
    return _splitmix64_mix(base)


def mix_key(*parts):
    """Fold integer key parts into a single 64-bit seed key.

    Each part is absorbed with one splitmix64 step, so (seed, domain, id)
    triples map to well-separated stream keys.
    """
    key = np.uint64(0x5851F42D4C957F2D)
    with np.errstate(over="ignore"):
        for p in parts:
            key = _splitmix64_mix((key + np.uint64(int(p) & 0xFFFFFFFFFFFFFFFF)) & _MASK)
    return int(key)


def _rotl(x, k):
    k = np.uint64(k)
    return (x << k) | (x >> (np.uint64(64) - k))


class Xoshiro256pp:
    """Lane-parallel xoshiro256++ stream with splitmix64 seeding."""

    def __init__(self, seed_key, lanes=16):
        if lanes < 1:
            raise ValueError("lanes must be >= 1")
        self.lanes = lanes
        lane_keys = (np.uint64(seed_key) + np.arange(lanes, dtype=np.uint64)).astype(np.uint64)
        # 4 state words per lane, each drawn from that lane's splitmix64 stream
        state = np.empty((4, lanes), dtype=np.uint64)
        with np.errstate(over="ignore"):
            for w in range(4):
                base = (lane_keys + _GAMMA * np.uint64(w + 1)).astype(np.uint64)
                state[w] = _splitmix64_mix(base)
        self._s = state
        self._spare_normals = None

    def _next_block(self):
        """One output per lane; advances all lanes."""
        s0, s1, s2, s3 = self._s
        out = (_rotl((s0 + s3) & _MASK, 23) + s0) & _MASK
        t = (s1 << np.uint64(17)) & _MASK
        s2 = s2 ^ s0
        s3 = s3 ^ s1
        s1 = s1 ^ s2
        s0 = s0 ^ s3
        s2 = s2 ^ t
        s3 = _rotl(s3, 45)
        self._s = np.stack([s0, s1, s2, s3])
        return out

    def next_u64(self, n):
        """n raw 64-bit outputs, round-major across lanes."""
        rounds = -(-n // self.lanes)
        blocks = np.empty((rounds, self.lanes), dtype=np.uint64)
        for r in range(rounds):
            blocks[r] = self._next_block()
        return blocks.reshape(-1)[:n]

    def uniform(self, n=None):
        """Doubles in [0, 1) from the top 53 bits."""
        scalar = n is None
        m = 1 if scalar else n
        u = (self.next_u64(m) >> np.uint64(11)).astype(np.float64) * _U53
        return float(u[0]) if scalar else u

    def uniform_range(self, lo, hi, n=None):
        u = self.uniform(n)
        return lo + (hi - lo) * u

    def normal(self, n=None):
        """Standard normals via Box-Muller on uniform pairs."""
        scalar = n is None
        m = 1 if scalar else n
        pairs = -(-m // 2)
        u1 = self.uniform(pairs)
        u2 = self.uniform(pairs)
        r = np.sqrt(-2.0 * np.log(1.0 - u1))  # 1-u1 in (0,1], avoids log(0)
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:m]
        return float(z[0]) if scalar else z

    def randint(self, n_exclusive):
        """One integer in [0, n_exclusive) via the multiply-shift reduction."""
        x = int(self.next_u64(1)[0])
        return (x * int(n_exclusive)) >> 64
