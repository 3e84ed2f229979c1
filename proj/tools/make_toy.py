#!/usr/bin/env python3
"""Regenerates the bundled toy collection under data/toy/.

The collection is synthetic. Each topic's relevant documents mostly use
inflected variants of the query words, so exact-match retrieval misses them
while a stemmer recovers them. Output is fully determined by SEED.
"""

import json
import random
import sys
from pathlib import Path

SEED = 20231014

# qid, query text, variant forms per query word, dictionary root per variant
TOPICS = [
    ("1", "connecting networks",
     [["connected", "connection", "connects", "connect"], ["network", "networked"]]),
    ("2", "hunting foxes", [["hunted", "hunts", "hunt"], ["fox"]]),
    ("3", "voting elections", [["voted", "votes", "vote"], ["election", "elect", "elected"]]),
    ("4", "painted walls", [["painting", "paints", "paint"], ["wall"]]),
    ("5", "growing plants", [["grows", "grow"], ["plant", "planted", "planting"]]),
    ("6", "cooking recipes", [["cooked", "cooks", "cook"], ["recipe"]]),
    ("7", "swimming lessons", [["swim", "swims"], ["lesson"]]),
    ("8", "teaching students", [["teaches", "teach"], ["student"]]),
    ("9", "building bridges", [["builds", "build"], ["bridge"]]),
    ("10", "jumping horses", [["jumped", "jumps", "jump"], ["horse"]]),
]

ROOTS = {
    "connecting": "connect", "connected": "connect", "connects": "connect", "connection": "connection",
    "networks": "network", "networked": "network",
    "hunting": "hunt", "hunted": "hunt", "hunts": "hunt", "foxes": "fox",
    "voting": "vote", "voted": "vote", "votes": "vote", "elections": "election", "elected": "elect",
    "painted": "paint", "painting": "paint", "paints": "paint", "walls": "wall",
    "growing": "grow", "grows": "grow", "plants": "plant", "planted": "plant", "planting": "plant",
    "cooking": "cook", "cooked": "cook", "cooks": "cook", "recipes": "recipe",
    "swimming": "swim", "swims": "swim", "lessons": "lesson",
    "teaching": "teach", "teaches": "teach", "students": "student",
    "building": "build", "builds": "build", "bridges": "bridge",
    "jumping": "jump", "jumped": "jump", "jumps": "jump", "horses": "horse",
}

ENTITIES = [
    "Paris", "Marie Curie", "Acme Corp.", "the United Nations", "Lake Geneva", "Oxford",
    "Nelson Mandela", "NASA", "the Amazon River", "Tokyo", "Ada Lovelace", "BBC",
]

FILLER = (
    "the a of in on with for near after before during about local small large old new "
    "people town river city morning evening season report history group market weather "
    "garden kitchen school field road museum library friends family visitors week year"
).split()


def sentence(rng, words):
    body = words[:]
    body += rng.sample(FILLER, rng.randint(4, 8))
    rng.shuffle(body)
    if rng.random() < 0.5:
        body.insert(rng.randint(0, len(body)), rng.choice(ENTITIES))
    text = " ".join(body)
    return text[0].upper() + text[1:] + "."


def document(rng, content_words, n_sentences):
    out = []
    for _ in range(n_sentences):
        k = rng.randint(1, min(3, len(content_words)))
        out.append(sentence(rng, rng.sample(content_words, k)))
    return " ".join(out)


def build():
    rng = random.Random(SEED)
    docs, qrels = [], []
    n = 0

    def add(text):
        nonlocal n
        n += 1
        doc_id = f"toy{n:03d}"
        docs.append({"id": doc_id, "contents": text})
        return doc_id

    for qid, query, variants in TOPICS:
        exact = query.split()
        for i in range(6):
            both = i < 4
            words = [w for group in (variants if both else variants[:1]) for w in group]
            if i == 0:
                words += exact
            text = document(rng, words, rng.randint(3, 5))
            qrels.append((qid, add(text), 2 if both else 1))
        for _ in range(2):
            other = rng.choice([t for t in TOPICS if t[0] != qid])
            words = [w for group in other[2] for w in group]
            text = document(rng, words, 3) + " " + sentence(rng, [rng.choice(exact)])
            qrels.append((qid, add(text), 0))
    while n < 100:
        add(document(rng, rng.sample(FILLER, 6), rng.randint(2, 4)))

    order = list(range(len(docs)))
    rng.shuffle(order)
    return [docs[i] for i in order], qrels


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    docs, qrels = build()
    with open(out / "corpus.jsonl", "w", encoding="utf-8") as f:
        for d in docs:
            f.write(json.dumps(d, ensure_ascii=False) + "\n")
    with open(out / "topics.tsv", "w", encoding="utf-8") as f:
        for qid, query, _ in TOPICS:
            f.write(f"{qid}\t{query}\n")
    with open(out / "qrels.txt", "w", encoding="utf-8") as f:
        for qid, doc_id, grade in sorted(qrels, key=lambda r: (int(r[0]), r[1])):
            f.write(f"{qid} 0 {doc_id} {grade}\n")
    with open(out / "dictionary.tsv", "w", encoding="utf-8") as f:
        f.write("# word<TAB>root\n")
        for word in sorted(ROOTS):
            f.write(f"{word}\t{ROOTS[word]}\n")
    (out / "mock_identity.tsv").write_text("@mode\tidentity\n", encoding="utf-8")
    (out / "mock_porter.tsv").write_text("@mode\tporter\n", encoding="utf-8")
    (out / "entities_empty.tsv").write_text("", encoding="utf-8")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else str(Path(__file__).resolve().parent.parent / "data" / "toy"))
