"""Sentence-length histogram of a synthetic corpus, computed independently.

Reimplements mt19937_64, the splitmix64 finalizer and the per-sentence seed
derivation, then draws each sentence length as the first value of its stream.

usage: length_histogram.py SEED CORPUS_SIZE MIN_LEN MAX_LEN
"""

import sys

MASK = (1 << 64) - 1


class MT19937_64:
    n, m = 312, 156

    def __init__(self, seed):
        self.mt = [0] * self.n
        self.mt[0] = seed & MASK
        for i in range(1, self.n):
            prev = self.mt[i - 1]
            self.mt[i] = (6364136223846793005 * (prev ^ (prev >> 62)) + i) & MASK
        self.index = self.n

    def _twist(self):
        upper, lower = 0xFFFFFFFF80000000, 0x7FFFFFFF
        for i in range(self.n):
            x = (self.mt[i] & upper) | (self.mt[(i + 1) % self.n] & lower)
            xa = x >> 1
            if x & 1:
                xa ^= 0xB5026F5AA96619E9
            self.mt[i] = self.mt[(i + self.m) % self.n] ^ xa
        self.index = 0

    def next(self):
        if self.index >= self.n:
            self._twist()
        x = self.mt[self.index]
        self.index += 1
        x ^= (x >> 29) & 0x5555555555555555
        x ^= (x << 17) & 0x71D67FFFEDA60000
        x ^= (x << 37) & 0xFFF7EEE000000000
        x ^= x >> 43
        return x & MASK


def mix64(x):
    x = (x + 0x9E3779B97F4A7C15) & MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK
    return x ^ (x >> 31)


def sentence_seed(seed, index):
    return mix64(seed ^ mix64(index))


def below(rng, n):
    u = (rng.next() >> 11) * 2.0 ** -53
    return min(int(u * n), n - 1)


def self_check():
    rng = MT19937_64(5489)
    for _ in range(9999):
        rng.next()
    assert rng.next() == 9981545732273789042


def main():
    self_check()
    seed, size, lo, hi = (int(a) for a in sys.argv[1:5])
    counts = {length: 0 for length in range(lo, hi + 1)}
    for index in range(size):
        counts[lo + below(MT19937_64(sentence_seed(seed, index)), hi - lo + 1)] += 1
    print(" ".join(f"{k}:{v}" for k, v in counts.items()))


if __name__ == "__main__":
    main()
