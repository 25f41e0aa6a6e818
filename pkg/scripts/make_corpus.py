"""Generate the bundled character-modeling corpus (deterministic).

Produces roughly 1 MB of synthetic prose from a small template grammar.
Most paragraphs introduce named entities (a person, a named vessel, a year)
and re-mention them within a few dozen characters.  Person names are drawn
from a combinatorial syllable space, so re-mentions cannot be predicted from
global statistics; the model has to carry the spelling in its state.
Regenerating with the same seed reproduces the file byte for byte:

    python3 scripts/make_corpus.py src/hmf/data/tinytext.txt
"""

from __future__ import annotations

import sys

import numpy as np

TARGET_BYTES = 1_000_000
SEED = 20260814

DETS = ["the", "a", "this", "that", "every", "each", "one", "another", "its", "their"]

ADJS = [
    "old", "new", "small", "large", "quiet", "bright", "dark", "heavy", "light", "narrow",
    "wide", "early", "late", "cold", "warm", "dry", "wet", "steep", "flat", "rough",
    "smooth", "distant", "nearby", "hollow", "solid", "pale", "deep", "shallow", "sharp",
    "blunt", "clear", "cloudy", "steady", "sudden", "gentle", "fierce", "plain", "ornate",
    "broken", "mended", "silent", "loud", "crooked", "straight", "ancient", "modern",
    "rusty", "polished", "faded", "vivid", "slender", "stout", "weary", "eager",
]

ADVS = [
    "slowly", "quickly", "quietly", "loudly", "carefully", "suddenly", "gently",
    "firmly", "barely", "nearly", "often", "rarely", "always", "never", "again",
    "already", "eventually", "gradually", "briefly", "steadily", "somewhere", "together",
]

PREPS = ["over", "under", "beside", "behind", "beyond", "near", "through", "across",
         "along", "within", "without", "against", "toward", "around", "between"]

CONJS = ["and", "but", "so", "yet", "while", "because", "although", "until", "before", "after"]

TOPICS = {
    "harbor": {
        "nouns": [
            "harbor", "boat", "sail", "tide", "rope", "anchor", "gull", "pier", "wave",
            "net", "lantern", "mast", "deck", "channel", "buoy", "fog", "cargo", "dock",
            "hull", "captain", "sailor", "chart", "compass", "storm", "breeze", "shore",
        ],
        "verbs": [
            "drifted", "moored", "sailed", "rocked", "creaked", "signaled", "anchored",
            "turned", "crossed", "followed", "carried", "hauled", "lowered", "raised",
            "watched", "waited", "returned", "departed", "circled", "steadied",
        ],
    },
    "orchard": {
        "nouns": [
            "orchard", "apple", "branch", "ladder", "basket", "blossom", "root", "hedge",
            "meadow", "fence", "barn", "well", "furrow", "harvest", "seed", "soil",
            "sparrow", "beehive", "cider", "grove", "path", "gate", "scarecrow", "plow",
            "wagon", "cellar",
        ],
        "verbs": [
            "ripened", "swayed", "blossomed", "gathered", "planted", "pruned", "climbed",
            "rested", "grew", "fell", "sorted", "stored", "mended", "watered", "shaded",
            "wandered", "settled", "opened", "closed", "leaned",
        ],
    },
    "workshop": {
        "nouns": [
            "workshop", "bench", "hammer", "chisel", "plank", "hinge", "drawer", "lathe",
            "gear", "spring", "clock", "dial", "wire", "brass", "filing", "blueprint",
            "vise", "socket", "bolt", "panel", "lamp", "stool", "cabinet", "tool",
            "pattern", "frame",
        ],
        "verbs": [
            "measured", "carved", "fitted", "tightened", "balanced", "sketched", "filed",
            "polished", "assembled", "adjusted", "tested", "repaired", "traced", "marked",
            "clamped", "sanded", "oiled", "wound", "aligned", "finished",
        ],
    },
}

ONSETS = [
    "Bar", "Cor", "Dal", "Fen", "Gar", "Hol", "Jar", "Kel", "Lor", "Mar",
    "Nor", "Pel", "Rav", "Sel", "Tor", "Var", "Wen", "Yor", "Zan", "Bren",
    "Cal", "Dorn", "Gil", "Hern",
]

MIDS = ["a", "e", "i", "o", "u", "ar", "en", "il", "on", "ur",
        "al", "em", "is", "ot", "ad", "el", "im", "os", "an", "et"]

CODAS = ["d", "k", "l", "m", "n", "r", "s", "t", "th", "v", "x", "z", "rd", "sk"]

SUR_ENDS = ["berg", "dale", "ford", "holm", "mark", "stad", "wick", "thorn",
            "field", "gate", "more", "ness", "port", "vale", "shaw", "crest"]


def person_name(rng: np.random.Generator) -> tuple[str, str]:
    first = str(rng.choice(ONSETS)) + str(rng.choice(MIDS)) + str(rng.choice(CODAS))
    surname = str(rng.choice(ONSETS)) + str(rng.choice(SUR_ENDS))
    return first, f"{first} {surname}"


def sentence(rng: np.random.Generator, topic: dict) -> str:
    words: list[str] = []

    def noun_phrase() -> None:
        if rng.random() < 0.08:
            words.append(person_name(rng)[0])
            return
        words.append(str(rng.choice(DETS)))
        if rng.random() < 0.55:
            words.append(str(rng.choice(ADJS)))
        words.append(str(rng.choice(topic["nouns"])))

    noun_phrase()
    words.append(str(rng.choice(topic["verbs"])))
    if rng.random() < 0.6:
        noun_phrase()
    if rng.random() < 0.45:
        words.append(str(rng.choice(PREPS)))
        noun_phrase()
    if rng.random() < 0.3:
        words.append(str(rng.choice(ADVS)))
    if rng.random() < 0.18:
        words.append(str(rng.choice(CONJS)))
        noun_phrase()
        words.append(str(rng.choice(topic["verbs"])))
        if rng.random() < 0.4:
            words.append(str(rng.choice(ADVS)))
    if rng.random() < 0.08:
        words.append("in")
        words.append(str(rng.integers(1800, 2100)))
    text = " ".join(words)
    text = text[0].upper() + text[1:]
    mark = rng.choice([".", ".", ".", ".", ".", "?", "!", ";"])
    if rng.random() < 0.12:
        cut = rng.integers(2, max(3, len(words) - 1))
        head = " ".join(words[:cut])
        tail = " ".join(words[cut:])
        text = head[0].upper() + head[1:] + ", " + tail
    return text + str(mark)


def noun_phrase_text(rng: np.random.Generator, topic: dict) -> str:
    words = [str(rng.choice(DETS))]
    if rng.random() < 0.5:
        words.append(str(rng.choice(ADJS)))
    words.append(str(rng.choice(topic["nouns"])))
    return " ".join(words)


def entity_paragraph(rng: np.random.Generator, topic: dict) -> str:
    first_a, name_a = person_name(rng)
    first_b, name_b = person_name(rng)
    vessel = f"{str(rng.choice(ADJS)).capitalize()} {str(rng.choice(topic['nouns'])).capitalize()}"
    year = str(rng.integers(1800, 2000))

    def verb() -> str:
        return str(rng.choice(topic["verbs"]))

    def np_() -> str:
        return noun_phrase_text(rng, topic)

    intro = f"In {year} {name_a} and {name_b} {verb()} {np_()}."
    naming = f"{first_a} called {np_()} the {vessel}."
    middle = [
        f"{name_b} {verb()} the {vessel}, and {first_a} {verb()} {np_()}.",
        f"{first_b} {verb()} {np_()}, {str(rng.choice(CONJS))} {first_a} {verb()} the {vessel}.",
        f"{name_a} {verb()} {str(rng.choice(PREPS))} {np_()} in {year}, while {first_b} {verb()} {np_()}.",
        f"The {vessel} {verb()} {str(rng.choice(PREPS))} {np_()} until {first_a} {verb()}.",
    ]
    rng.shuffle(middle)
    keep = 2 + int(rng.integers(0, len(middle) - 1))
    body = middle[:keep]
    if rng.random() < 0.25:
        body.insert(int(rng.integers(0, len(body) + 1)), sentence(rng, topic))
    closing = f"By {year} {first_a} and {first_b} had {verb()} {np_()}."
    return " ".join([intro, naming] + body + [closing])


def filler_paragraph(rng: np.random.Generator, topic: dict) -> str:
    return " ".join(sentence(rng, topic) for _ in range(int(rng.integers(3, 7))))


def main(out_path: str) -> None:
    rng = np.random.default_rng(SEED)
    topic_names = list(TOPICS)
    chunks: list[str] = []
    size = 0
    while size < TARGET_BYTES:
        topic = TOPICS[str(rng.choice(topic_names))]
        if rng.random() < 0.12:
            block = filler_paragraph(rng, topic) + "\n"
        else:
            block = entity_paragraph(rng, topic) + "\n"
        chunks.append(block)
        size += len(block)
    text = "".join(chunks)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(text)
    charset = sorted(set(text))
    print(f"wrote {len(text)} chars, {len(charset)} distinct, to {out_path}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/hmf/data/tinytext.txt")
