"""Random (E, T, k) instances with Recall@K computed by brute-force set
intersection, written as fixture rows for the Rust metric test."""
import json
import random
from fractions import Fraction
from pathlib import Path

POOL = [f"C{n}-{p}" for n in range(1, 9) for p in ("POCLOUD", "GES_DISC")]


def main():
    rng = random.Random(7)
    out = Path(__file__).resolve().parent.parent / "fixtures" / "recall_cases.jsonl"
    with out.open("w") as f:
        for i in range(1000):
            expected = rng.sample(POOL, rng.randint(1, 6))
            ranked = [rng.choice(POOL) for _ in range(rng.randint(0, 10))]
            k = rng.randint(1, 12)
            top = set(ranked[:k])
            hits = sum(1 for e in expected if e in top)
            r = Fraction(hits, len(expected))
            f.write(json.dumps({"expected": expected, "ranked": ranked, "k": k, "recall": f"{r.numerator}/{r.denominator}"}) + "\n")


if __name__ == "__main__":
    main()
