#!/usr/bin/env python3
"""Generates the bundled sample corpus (data/sample_corpus.jsonl).

Deterministic: re-running always produces the same file.
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data" / "sample_corpus.jsonl"

TOPICS = [
    ("pizza dough", "cooking"), ("solar panels", "energy"),
    ("basic income", "economics"), ("jazz history", "music"),
    ("marathon training", "sports"), ("quantum computing", "technology"),
    ("coral reefs", "ecology"), ("tax filing", "finance"),
    ("ancient rome", "history"), ("sleep hygiene", "health"),
]

QUERY_FORMS = [
    "what is the best way to learn about {t}",
    "how does {t} work",
    "should beginners invest time in {t}",
    "why is {t} important today",
    "compare common approaches to {t}",
]

TAGS = {
    "difficulty-level": ["simple", "moderate", "complex"],
    "nature-of-query": ["factual", "opinion", "comparison"],
    "genre": ["science", "finance", "arts", "health", "history"],
    "specific-topics": ["physics", "economics", "nutrition", "culture"],
    "sensitivity": ["non-sensitive", "sensitive"],
    "user-intent": ["research", "purchase", "entertainment"],
    "answer-type": ["fact", "opinion", "list"],
}

FILLER = (
    "practice consistency matters and steady routines reward patience over "
    "time while many experts agree that good fundamentals and important "
    "details often decide outcomes because people utilize simple habits to "
    "demonstrate progress and most guides significantly emphasize gradual "
    "improvement with new techniques that keep learners engaged"
).split()

SPLITS = ["train"] * 8 + ["validation"] + ["test"]


def sentence(rng, topic):
    n = rng.randint(6, 14)
    words = [rng.choice(FILLER) for _ in range(n - 2)]
    words.insert(rng.randrange(len(words) + 1), topic.split()[0])
    text = " ".join(words)
    return text[0].upper() + text[1:] + "."


def source(rng, qid, rank, topic):
    n_sentences = rng.randint(3, 8)
    body = " ".join(sentence(rng, topic) for _ in range(n_sentences))
    return {
        "id": f"{qid}-s{rank}",
        "url": f"https://example.org/{topic.replace(' ', '-')}/{rank}",
        "title": f"{topic.title()} guide, part {rank}",
        "content": body,
        "serp_rank": rank,
    }


def main():
    rng = random.Random(20240817)
    lines = [json.dumps({"schema_version": 1})]
    for i in range(200):
        topic, domain = TOPICS[i % len(TOPICS)]
        form = QUERY_FORMS[i % len(QUERY_FORMS)]
        qid = f"q{i:04d}"
        tags = {
            cat: rng.choice(labels)
            for cat, labels in TAGS.items()
            if rng.random() < 0.9  # missing keys are permitted
        }
        n_sources = rng.choice([3, 4, 5, 5, 5])
        entry = {
            "query": {
                "id": qid,
                "text": form.format(t=topic),
                "tags": tags,
                "split": SPLITS[i % len(SPLITS)],
            },
            "sources": [
                source(rng, qid, rank, topic)
                for rank in range(1, n_sources + 1)
            ],
        }
        lines.append(json.dumps(entry, sort_keys=True))
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text("\n".join(lines) + "\n")
    print(f"wrote {OUT} ({len(lines) - 1} entries)")


if __name__ == "__main__":
    main()
