#!/usr/bin/env python3
"""Regenerate the bundled language-identification resources.

Reads the curated files in crates/core/data (noun dictionary, phrase table,
closed-class list, adjective list, ambiguity list) and the `wordfreq`
frequency lists, and writes:

  words_en.txt / words_es.txt      exact-match wordlists
  trigrams_en.tsv / trigrams_es.tsv  character trigram counts
  heldout_en.txt / heldout_es.txt  words excluded from everything above,
                                   used to calibrate the trigram threshold

Requires `pip install wordfreq`. Output is deterministic.
"""

import random
import re
from collections import Counter
from pathlib import Path

import wordfreq

DATA = Path(__file__).resolve().parent.parent / "crates" / "core" / "data"

TOP_N = 30000
WORDLIST_RANK = 6000
TRAIN_RANK = 20000
HELDOUT_SIZE = 1500
ZIPF_MARGIN = 1.0

EN_RE = re.compile(r"^[a-z]+('[a-z]+)?$")
ES_RE = re.compile(r"^[a-záéíóúüñ]+$")


def read_list(name):
    out = []
    for line in (DATA / name).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(line)
    return out


def read_rows(name):
    return [row.split("\t") for row in read_list(name)]


def words_of(phrase):
    return re.findall(r"[^\W\d_]+(?:'[^\W\d_]+)?", phrase.lower())


def main():
    en_top = [w for w in wordfreq.top_n_list("en", TOP_N) if EN_RE.match(w)]
    es_top = [w for w in wordfreq.top_n_list("es", TOP_N) if ES_RE.match(w)]
    en_rank = {w: i for i, w in enumerate(en_top)}
    es_rank = {w: i for i, w in enumerate(es_top)}

    ambiguous = set(read_list("ambiguous.txt"))

    forced_es = set(read_list("closed_es.txt")) | set(read_list("adjectives_es.txt"))
    forced_en = set()
    for row in read_rows("nouns_es_en.tsv"):
        forced_es.add(row[0])
        forced_en.add(row[1])
    for en, es in read_rows("translations.tsv"):
        forced_en.update(words_of(en))
        forced_es.update(words_of(es))

    en_words = {w for w in en_top[:WORDLIST_RANK]}
    es_words = {w for w in es_top[:WORDLIST_RANK]}
    for w in en_words & es_words:
        ze = wordfreq.zipf_frequency(w, "en")
        zs = wordfreq.zipf_frequency(w, "es")
        if ze - zs >= ZIPF_MARGIN:
            es_words.discard(w)
        elif zs - ze >= ZIPF_MARGIN:
            en_words.discard(w)

    # curated vocabulary overrides frequency data
    en_words -= forced_es - forced_en
    es_words -= forced_en - forced_es
    en_words |= forced_en
    es_words |= forced_es
    en_words -= ambiguous
    es_words -= ambiguous

    rng = random.Random(7)
    en_pool = [w for w in en_top[TRAIN_RANK:] if w not in es_rank and w not in en_words
               and w not in es_words and "'" not in w and len(w) > 2]
    es_pool = [w for w in es_top[TRAIN_RANK:] if w not in en_rank and w not in en_words
               and w not in es_words and len(w) > 2]
    heldout_en = sorted(rng.sample(en_pool, HELDOUT_SIZE))
    heldout_es = sorted(rng.sample(es_pool, HELDOUT_SIZE))

    def trigrams(words):
        counts = Counter()
        for w in words:
            padded = "^" + w + "$"
            chars = list(padded)
            for i in range(len(chars) - 2):
                counts["".join(chars[i:i + 3])] += 1
        return counts

    tri_en = trigrams(en_top[:TRAIN_RANK])
    tri_es = trigrams(es_top[:TRAIN_RANK])

    def write_words(name, header, words):
        with open(DATA / name, "w", encoding="utf-8") as f:
            f.write(header)
            for w in sorted(words):
                f.write(w + "\n")

    write_words("words_en.txt", "# English exact-match wordlist (generated by scripts/build_lid_data.py)\n", en_words)
    write_words("words_es.txt", "# Spanish exact-match wordlist (generated by scripts/build_lid_data.py)\n", es_words)
    write_words("heldout_en.txt", "# English held-out words for threshold calibration (generated)\n", heldout_en)
    write_words("heldout_es.txt", "# Spanish held-out words for threshold calibration (generated)\n", heldout_es)

    for name, counts in (("trigrams_en.tsv", tri_en), ("trigrams_es.tsv", tri_es)):
        with open(DATA / name, "w", encoding="utf-8") as f:
            f.write("# character trigram counts; ^ and $ mark word boundaries (generated)\n")
            for tri, c in sorted(counts.items()):
                f.write(f"{tri}\t{c}\n")

    print(f"en words {len(en_words)}, es words {len(es_words)}, "
          f"en trigrams {len(tri_en)}, es trigrams {len(tri_es)}")


if __name__ == "__main__":
    main()
