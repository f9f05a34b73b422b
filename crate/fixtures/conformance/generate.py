"""Reference vectors for the token-stream transforms (SplitMix64 contract).

Run: python3 generate.py > transforms_seed42.json
"""
import json

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next_u64(self):
        self.state = (self.state + GOLDEN) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def below(self, n):
        threshold = ((1 << 64) - n) % n
        while True:
            m = self.next_u64() * n
            if (m & MASK) >= threshold:
                return m >> 64

    def shuffle(self, items):
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]


def shuffle_stream(ids, seed):
    out = list(ids)
    SplitMix64(seed).shuffle(out)
    return out


def vocab_permutation(vocab, seed):
    sigma = list(range(vocab))
    SplitMix64(seed).shuffle(sigma)
    return sigma


def mock_stream(length, vocab, seed):
    rng = SplitMix64(seed)
    return [rng.below(vocab) for _ in range(length)]


def main():
    seed, vocab, length = 42, 50, 1000
    # Structured input: repeating phrases so bigrams are far from uniform.
    tokens = [(i % 10) * 5 + (i // 100) % 5 for i in range(length)]
    sigma = vocab_permutation(vocab, seed)
    rng = SplitMix64(seed)
    doc = {
        "seed": seed,
        "vocab_size": vocab,
        "splitmix_first4": [rng.next_u64() for _ in range(4)],
        "tokens": tokens,
        "shuffled": shuffle_stream(tokens, seed),
        "permutation": sigma,
        "remapped": [sigma[t] for t in tokens],
        "mock": mock_stream(length, vocab, seed),
    }
    print(json.dumps(doc))


if __name__ == "__main__":
    main()
