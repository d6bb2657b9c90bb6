"""Builds the bundled mini-corpus.

Writes graphs.jsonl (100 graphs), seed_kb.tsv (30 tuples over CapableOf,
UsedFor and AtLocation), annotations.tsv (labeled tuples for the ranker)
and mini.conf. Output is fully determined by SEED.
"""

import json
import random
from pathlib import Path

SEED = 20
HERE = Path(__file__).resolve().parent

CAPABLE_SEED = [
    ("human", "eat"), ("dog", "bark"), ("cat", "sleep"), ("bird", "fly"), ("fish", "swim"),
    ("baby", "cry"), ("horse", "run"), ("student", "study"), ("teacher", "teach"), ("child", "play"),
]
CAPABLE_NOVEL = [
    ("human", "talk"), ("dog", "run"), ("bird", "sing"), ("cow", "eat"), ("man", "drive"),
    ("woman", "cook"), ("chef", "cook"), ("farmer", "grow"), ("cat", "climb"), ("frog", "jump"),
    ("baby", "laugh"), ("child", "draw"), ("student", "read"), ("pilot", "fly"), ("singer", "sing"),
    ("rabbit", "hop"), ("duck", "swim"), ("lion", "roar"), ("monkey", "climb"), ("worker", "build"),
]
CAPABLE_NOISE = [("rock", "sing"), ("table", "eat"), ("chair", "run"), ("stone", "fly")]
OBJECTS = {"eat": "food", "drive": "car", "cook": "dinner", "grow": "corn", "read": "book", "build": "house", "draw": "picture"}

USED_SEED = [
    ("knife", "cut"), ("pen", "write"), ("bed", "sleep"), ("car", "drive"), ("cup", "drink"),
    ("phone", "call"), ("key", "open"), ("brush", "paint"), ("oven", "bake"), ("broom", "sweep"),
]
USED_NOVEL = [
    ("spoon", "eat"), ("ball", "play"), ("pencil", "draw"), ("soap", "wash"), ("ladder", "climb"),
    ("towel", "dry"), ("map", "navigate"), ("needle", "sew"), ("hammer", "build"), ("net", "fish"),
    ("saw", "cut"),
]
USED_NOISE = [("rock", "drink"), ("hat", "cook"), ("leaf", "drive"), ("stone", "write")]

AT_SEED = [
    ("fish", "water"), ("book", "library"), ("car", "garage"), ("bed", "bedroom"), ("cow", "farm"),
    ("student", "school"), ("money", "bank"), ("plate", "kitchen"), ("tree", "forest"), ("shark", "ocean"),
]
AT_NOVEL = [
    ("duck", "pond"), ("sofa", "livingroom"), ("pillow", "bed"), ("fork", "kitchen"), ("doctor", "hospital"),
    ("painting", "museum"), ("horse", "stable"), ("milk", "fridge"), ("bird", "nest"), ("lion", "zoo"),
    ("toy", "box"),
]
AT_NOISE = [("ocean", "car"), ("library", "cup"), ("forest", "pen"), ("kitchen", "bird")]
ANIMALS = {"fish", "cow", "shark", "duck", "horse", "bird", "lion", "student", "doctor"}


def capable(rng, head, tail):
    words, edges = [head, tail], [(1, 0, "nsubj")]
    if tail in OBJECTS and rng.random() < 0.6:
        words.append(OBJECTS[tail])
        edges.append((1, 2, "dobj"))
    return words, edges


def used_for(rng, head, tail):
    words = [head, "be", "use", "to", tail]
    edges = [(2, 0, "nsubjpass"), (2, 1, "auxpass"), (2, 4, "xcomp"), (4, 3, "mark")]
    return words, edges


def at_location(rng, head, tail):
    verb = "live" if head in ANIMALS else "be"
    words = [head, verb, "in", tail]
    edges = [(1, 0, "nsubj"), (1, 3, "nmod"), (3, 2, "case")]
    return words, edges


def discourse(rng, first, second, label):
    (h1, t1), (h2, t2) = first, second
    words = [h1, t1, "because" if label == "Reason" else "and", h2, t2]
    edges = [(1, 0, "nsubj"), (4, 3, "nsubj"), (1, 4, label), (4, 2, "cc")]
    return words, edges


def record(gid, gtype, freq, words, edges):
    return {
        "id": gid,
        "type": gtype,
        "freq": freq,
        "nodes": [{"i": i, "w": w} for i, w in enumerate(words)],
        "edges": [{"src": s, "dst": d, "label": l} for s, d, l in edges],
    }


def main():
    rng = random.Random(SEED)
    specs = []  # (gtype, words, edges, [(relation, head, tail)])

    for h, t in CAPABLE_SEED + CAPABLE_NOVEL + CAPABLE_NOISE:
        specs.append(("eventuality", *capable(rng, h, t), [("CapableOf", h, t)]))
    for h, t in USED_SEED + USED_NOVEL + USED_NOISE:
        specs.append(("eventuality", *used_for(rng, h, t), [("UsedFor", h, t)]))
    for h, t in AT_SEED + AT_NOVEL + AT_NOISE:
        words, edges = at_location(rng, h, t)
        specs.append(("eventuality", words, edges, [("AtLocation", h, t), ("CapableOf", h, words[1])]))

    pool = [p for p in CAPABLE_SEED + CAPABLE_NOVEL if p[0] != p[1]]
    while len(specs) < 98:
        a, b = rng.sample(pool, 2)
        if len({a[0], a[1], b[0], b[1]}) < 4:
            continue
        label = rng.choice(["Reason", "Conjunction"])
        specs.append(("discourse", *discourse(rng, a, b, label), [("CapableOf", *a), ("CapableOf", *b)]))
    # repeated words: seed tuples over these graphs are ambiguous
    specs.append(("eventuality", ["dog", "chase", "dog"], [(1, 0, "nsubj"), (1, 2, "dobj")], []))
    specs.append(("eventuality", ["cat", "see", "cat"], [(1, 0, "nsubj"), (1, 2, "dobj")], []))
    assert len(specs) == 100

    rng.shuffle(specs)
    support = {}
    with open(HERE / "graphs.jsonl", "w") as out:
        for n, (gtype, words, edges, tuples) in enumerate(specs):
            gid = f"g{n:03d}"
            out.write(json.dumps(record(gid, gtype, rng.randint(1, 20), words, edges), separators=(",", ":")) + "\n")
            for t in tuples:
                support.setdefault(t, []).append(gid)

    with open(HERE / "seed_kb.tsv", "w") as out:
        for rel, pairs in [("CapableOf", CAPABLE_SEED), ("UsedFor", USED_SEED), ("AtLocation", AT_SEED)]:
            for h, t in pairs:
                out.write(f"{h}\t{rel}\t{t}\n")

    labeled = []
    for rel, good, bad in [
        ("CapableOf", CAPABLE_SEED + CAPABLE_NOVEL[:6], CAPABLE_NOISE + [(h, "be") for h, _ in AT_SEED[1:4]]),
        ("UsedFor", USED_SEED + USED_NOVEL[:4], USED_NOISE),
        ("AtLocation", AT_SEED + AT_NOVEL[:4], AT_NOISE),
    ]:
        labeled += [(rel, h, t, 1) for h, t in good] + [(rel, h, t, 0) for h, t in bad]
    with open(HERE / "annotations.tsv", "w") as out:
        for rel, h, t, y in labeled:
            ids = support[(rel, h, t)]
            out.write(f"{h}\t{rel}\t{t}\t{y}\t{','.join(ids)}\n")

    (HERE / "mini.conf").write_text(
        "# bundled mini-corpus; paths are relative to this file\n"
        "corpus=graphs.jsonl\n"
        "seed-kb=seed_kb.tsv\n"
        "annotations=annotations.tsv\n"
        "out=run\n"
        "threshold=0.05\n"
        "top-percent=10\n"
        "dim=16\n"
        "layers=1\n"
        "lr=0.1\n"
        "epochs=40\n"
        "seed=7\n"
    )


if __name__ == "__main__":
    main()
