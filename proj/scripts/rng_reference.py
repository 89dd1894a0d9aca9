"""Independent xoshiro256** / SplitMix64 reference used to freeze the RNG fingerprints in the unit tests."""

M = (1 << 64) - 1


def splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & M
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M
    return state, z ^ (z >> 31)


def rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & M


class Xoshiro:
    def __init__(self, seed):
        self.seed = seed
        self.s = []
        st = seed
        for _ in range(4):
            st, v = splitmix64(st)
            self.s.append(v)

    def next(self):
        s = self.s
        result = (rotl((s[1] * 5) & M, 7) * 9) & M
        t = (s[1] << 17) & M
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
        return result

    def uniform(self):
        return (self.next() >> 11) * 2.0**-53

    def fork(self, stream):
        st = self.seed ^ ((0xD1B54A32D192ED03 * (stream + 1)) & M)
        _, v = splitmix64(st)
        return Xoshiro(v)


if __name__ == "__main__":
    r = Xoshiro(42)
    print("seed 42 u64:", ", ".join("0x%016XULL" % r.next() for _ in range(4)))
    r = Xoshiro(0)
    print("seed 0 u64:", ", ".join("0x%016XULL" % r.next() for _ in range(2)))
    r = Xoshiro(42)
    print("seed 42 uniform:", repr(r.uniform()), repr(r.uniform()))
    f = Xoshiro(42).fork(2)
    print("seed 42 fork(2) u64:", "0x%016XULL" % f.next())
