"""Synthetic corpora for smoke training and the acceptance experiments.

The NLI generator builds a separable-but-not-trivial world over exactly 40
tokens: 10 "filler" tokens plus 10 topics of 3 content tokens. Each record
picks a topic, an unrelated negative topic, and two extra distractor
topics d1/d2:

- anchor    = 4 fillers + the topic's 3 tokens + one d1 token
- positive  = the other 4 fillers + 2-3 of the topic's tokens + one d2 token
- negative  = the anchor's 4 fillers + the negative topic's 3 tokens
              + a *different* d1 token

Anchor and positive share at least 2 content tokens but no fillers; the
negative shares the anchor's fillers and a d1-topic affinity but no content
token. At random initialization raw token overlap therefore favors the
negative, so a fresh mean-pooling encoder scores below chance; after
training, ranking the positive first requires real topic geometry (fillers
suppressed, the d1 bridge out-margined), which keeps the task sensitive to
how much structure survives dimension truncation.

The STS generator scores sentence pairs by exact token overlap, scaled to
the 0-5 range, over the same 40-token world. Its sentences are half filler
tokens, so the gold ordering leans on exactly the tokens the NLI stage
learns to suppress: a model fresh out of stage 1 underrates filler overlap
and pair-wise fine-tuning has real headroom to recover it.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import (
    NLI_TRIPLETS,
    STS_PAIRS,
    DatasetSplit,
    ScoredPair,
    Triplet,
    write_split,
)

N_FILLERS = 10
N_TOPICS = 10
TOPIC_SIZE = 3

FILLERS = tuple(f"f{i}" for i in range(N_FILLERS))
TOPICS = tuple(
    tuple(f"t{k:02d}{chr(97 + j)}" for j in range(TOPIC_SIZE)) for k in range(N_TOPICS)
)
ALL_TOKENS = FILLERS + tuple(tok for topic in TOPICS for tok in topic)


def _sentence(rng: np.random.Generator, tokens) -> str:
    order = rng.permutation(len(tokens))
    return " ".join(tokens[i] for i in order)


def make_nli_split(n: int, seed: int, name: str = "train") -> DatasetSplit:
    """n anchor/positive/negative triplets over the 40-token world."""
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(n):
        topic, other, d1, d2 = (int(x) for x in rng.choice(N_TOPICS, 4, replace=False))
        filler_ids = rng.permutation(N_FILLERS)
        anchor_fillers = [FILLERS[i] for i in filler_ids[:4]]
        positive_fillers = [FILLERS[i] for i in filler_ids[4:8]]
        shared = int(rng.integers(2, TOPIC_SIZE + 1))  # >= 2 shared content tokens
        positive_content = [
            TOPICS[topic][i] for i in rng.permutation(TOPIC_SIZE)[:shared]
        ]
        d1_tokens = [TOPICS[d1][i] for i in rng.permutation(TOPIC_SIZE)]
        d2_token = TOPICS[d2][int(rng.integers(TOPIC_SIZE))]
        records.append(
            Triplet(
                anchor=_sentence(rng, anchor_fillers + list(TOPICS[topic]) + [d1_tokens[0]]),
                positive=_sentence(rng, positive_fillers + positive_content + [d2_token]),
                negative=_sentence(rng, anchor_fillers + list(TOPICS[other]) + [d1_tokens[1]]),
            )
        )
    return DatasetSplit(NLI_TRIPLETS, tuple(records), name)


def make_sts_split(
    n: int, seed: int, name: str = "train", length: int = 6, n_fillers: int = 3
) -> DatasetSplit:
    """n scored pairs whose gold score is proportional to token overlap."""
    rng = np.random.default_rng(seed)
    content = [tok for topic in TOPICS for tok in topic]
    records = []
    for k in range(n):
        overlap = k % (length + 1)
        s1 = [FILLERS[i] for i in rng.permutation(N_FILLERS)[:n_fillers]] + [
            content[i] for i in rng.permutation(len(content))[: length - n_fillers]
        ]
        shared = [s1[i] for i in rng.permutation(length)[:overlap]]
        rest = [t for t in ALL_TOKENS if t not in set(s1)]
        fresh = [rest[i] for i in rng.permutation(len(rest))[: length - overlap]]
        records.append(
            ScoredPair(
                sentence1=_sentence(rng, s1),
                sentence2=_sentence(rng, shared + fresh),
                raw_score=5.0 * overlap / length,
            )
        )
    return DatasetSplit(STS_PAIRS, tuple(records), name)


def write_demo_corpora(directory: str | Path, seed: int = 7) -> dict:
    """Write the four dataset files a demo training run needs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "nli_train": directory / "nli_train.jsonl",
        "nli_dev": directory / "nli_dev.jsonl",
        "sts_train": directory / "sts_train.jsonl",
        "sts_dev": directory / "sts_dev.jsonl",
    }
    write_split(make_nli_split(200, seed, "train"), paths["nli_train"])
    write_split(make_nli_split(100, seed + 1, "dev"), paths["nli_dev"])
    write_split(make_sts_split(100, seed + 2, "train"), paths["sts_train"])
    write_split(make_sts_split(60, seed + 3, "dev"), paths["sts_dev"])
    return {k: str(v) for k, v in paths.items()}


if __name__ == "__main__":
    import sys

    target = sys.argv[1] if len(sys.argv) > 1 else "demo_data"
    for label, path in write_demo_corpora(target).items():
        print(f"{label}: {path}")
