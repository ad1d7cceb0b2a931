"""Seeded synthetic patent corpora with a clustered citation graph.

Documents belong to a topic and a finer subtopic. Their text mixes a shared
boilerplate vocabulary (dominant, Zipf-weighted) with topic and subtopic
terms, plus a drafting-style vocabulary shared by documents of one style
regardless of topic, which carries no citation signal. XY citations stay
within a subtopic, A citations cross subtopics of the same topic. IPC codes
follow the same hierarchy, so InScope and the citation metrics both have
signal to find.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .corpus import CitationEdge, PatentDocument, SectionName, save_citations, save_corpus
from .corpus import dump_jsonl_line
from .ipc import IpcCode

BOILERPLATE = (
    "the a of and to in said wherein comprising is for with an by at least one first second which "
    "on configured that from be or as means unit portion each further provided having member "
    "arranged plurality between base end side surface body element part signal control data"
).split()

JURISDICTIONS = (("CHI", 30), ("ENG", 22), ("JPN", 16), ("KOR", 10), ("GER", 8), ("FRA", 4),
                 ("ITA", 2), ("ESP", 2), ("NLD", 2), ("PRT", 1), ("NOR", 1), ("CZE", 2))

_SYLLABLES = "ka lo mi ter vex dra qu ul zen por fi ab ny sto gre ph ix mel tor an".split()


@dataclass
class SyntheticConfig:
    n_docs: int = 200
    n_topics: int = 6
    subtopics: int = 3
    topic_vocab: int = 30
    subtopic_vocab: int = 12
    years: tuple[int, int] = (2012, 2025)
    boilerplate_share: float = 0.55
    topic_share: float = 0.25
    n_styles: int = 4
    style_vocab: int = 20
    style_share: float = 0.3
    xy_per_doc: tuple[int, int] = (1, 3)
    a_per_doc: tuple[int, int] = (0, 2)
    seed: int = 7


def _word(rng: random.Random, used: set) -> str:
    while True:
        w = "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 4)))
        if w not in used:
            used.add(w)
            return w


class _Vocab:
    def __init__(self, cfg: SyntheticConfig, rng: random.Random):
        used = set(BOILERPLATE)
        self.topic = [[_word(rng, used) for _ in range(cfg.topic_vocab)] for _ in range(cfg.n_topics)]
        self.sub = [[[_word(rng, used) for _ in range(cfg.subtopic_vocab)] for _ in range(cfg.subtopics)]
                    for _ in range(cfg.n_topics)]
        self.style = [[_word(rng, used) for _ in range(cfg.style_vocab)] for _ in range(cfg.n_styles)]
        self.boiler_weights = [1.0 / (i + 1) for i in range(len(BOILERPLATE))]


class SyntheticCorpus:
    def __init__(self, docs, edges, ai_views):
        self.docs: list[PatentDocument] = docs
        self.edges: list[CitationEdge] = edges
        self.ai_views: dict[str, dict[str, str]] = ai_views

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"corpus": out / "corpus.jsonl", "citations": out / "citations.jsonl",
                 "ai_views": out / "ai_views.jsonl"}
        save_corpus(self.docs, paths["corpus"])
        save_citations(self.edges, paths["citations"])
        with open(paths["ai_views"], "w", encoding="utf-8", newline="\n") as fh:
            for doc_id in sorted(self.ai_views):
                fh.write(dump_jsonl_line({"doc_id": doc_id, **self.ai_views[doc_id]}))
        return paths


def make_corpus(cfg: SyntheticConfig = SyntheticConfig()) -> SyntheticCorpus:
    rng = random.Random(cfg.seed)
    vocab = _Vocab(cfg, rng)
    sections = "ABCDEFGH"
    topic_ipc = []
    for t in range(cfg.n_topics):
        topic_ipc.append((sections[t % 8], f"{rng.randint(1, 99):02d}", chr(ord("A") + rng.randint(0, 25))))
    juris, jw = zip(*JURISDICTIONS)

    style = 0

    def words(t: int, s: int, n: int) -> list[str]:
        out = []
        for _ in range(n):
            r = rng.random()
            if r < cfg.style_share:
                out.append(rng.choice(vocab.style[style]))
                continue
            r = rng.random()
            if r < cfg.boilerplate_share:
                out.append(rng.choices(BOILERPLATE, vocab.boiler_weights)[0])
            elif r < cfg.boilerplate_share + cfg.topic_share:
                out.append(rng.choice(vocab.topic[t]))
            else:
                out.append(rng.choice(vocab.sub[t][s]))
        return out

    def sentence(t, s, n) -> str:
        w = words(t, s, n)
        return " ".join(w).capitalize() + "."

    docs, meta, styles = [], [], []
    for i in range(cfg.n_docs):
        t = rng.randrange(cfg.n_topics)
        s = rng.randrange(cfg.subtopics)
        style = rng.randrange(cfg.n_styles)
        styles.append(style)
        year = rng.randint(*cfg.years)
        sec, cls, sub = topic_ipc[t]
        codes = [IpcCode(sec, cls, sub, f"{10 * (s + 1):03d}", f"{rng.randint(0, 3):02d}")]
        if rng.random() < 0.4:
            t2 = rng.randrange(cfg.n_topics)
            sec2, cls2, sub2 = topic_ipc[t2]
            codes.append(IpcCode(sec2, cls2, sub2, f"{10 * (rng.randrange(cfg.subtopics) + 1):03d}", "00"))
        noun = rng.choice(vocab.sub[t][s])
        title = " ".join(words(t, s, 6)).capitalize()
        abstract = " ".join(sentence(t, s, rng.randint(10, 16)) for _ in range(3))
        n_claims = rng.randint(3, 6)
        claims = [f"1. A {noun} {' '.join(words(t, s, 14))}."]
        for c in range(2, n_claims + 1):
            if rng.random() < 0.2:
                claims.append(f"{c}. A method for operating a {noun}, comprising {' '.join(words(t, s, 12))}.")
            else:
                ref = rng.randint(1, c - 1)
                claims.append(f"{c}. The {noun} according to claim {ref}, wherein {' '.join(words(t, s, 10))}.")
        paras = [
            " ".join(sentence(t, s, rng.randint(10, 18)) for _ in range(3)),
            f"It is an object of the invention to provide an improved {noun}. " + sentence(t, s, 12),
            " ".join(sentence(t, s, 14) for _ in range(2)),
            f"An advantage of the {noun} is that {' '.join(words(t, s, 10))}. "
            f"A drawback of known systems is {' '.join(words(t, s, 8))}. " + sentence(t, s, 12),
            " ".join(sentence(t, s, rng.randint(10, 18)) for _ in range(4)),
        ]
        doc_id = f"SYN{i:05d}"
        docs.append(PatentDocument(
            doc_id=doc_id,
            family_id=f"FAM{i:05d}",
            pub_year=year,
            jurisdiction=rng.choices(juris, jw)[0],
            ipc_codes=tuple(codes),
            sections={SectionName.TITLE: title, SectionName.ABSTRACT: abstract,
                      SectionName.CLAIMS: " ".join(claims), SectionName.DESCRIPTION: "\n".join(paras)},
        ))
        meta.append((t, s))

    edges = []
    order = sorted(range(cfg.n_docs), key=lambda i: (docs[i].pub_year, i))
    seen_pairs = set()
    for pos, i in enumerate(order):
        earlier = order[:pos]
        t, s = meta[i]
        same_sub = [j for j in earlier if meta[j] == (t, s)]
        same_topic = [j for j in earlier if meta[j][0] == t and meta[j][1] != s]
        for j in rng.sample(same_sub, min(rng.randint(*cfg.xy_per_doc), len(same_sub))):
            seen_pairs.add((i, j))
            edges.append(CitationEdge(docs[i].doc_id, docs[j].doc_id, rng.choice("XY")))
        for j in rng.sample(same_topic, min(rng.randint(*cfg.a_per_doc), len(same_topic))):
            if (i, j) not in seen_pairs:
                seen_pairs.add((i, j))
                edges.append(CitationEdge(docs[i].doc_id, docs[j].doc_id, "A"))

    ai_views = {}
    for d, (t, s), style in zip(docs, meta, styles):
        noun = d.text(SectionName.CLAIMS).split()[2]
        ai_views[d.doc_id] = {
            "ai_clm_sum": f"The claims cover a {noun} with " + " ".join(words(t, s, 20)) + ".",
            "ai_obj": f"The invention aims to improve the {noun} " + " ".join(words(t, s, 15)) + ".",
            "ai_adv": f"Advantages of the {noun} include " + " ".join(words(t, s, 15)) + ".",
            "ai_ab": f"A {noun} is disclosed. " + " ".join(words(t, s, 30)) + ".",
            "ai_feat": f"Technical features: {noun} " + " ".join(words(t, s, 25)) + ".",
        }
    return SyntheticCorpus(docs, edges, ai_views)


FIXTURE_CONFIG = SyntheticConfig()


def bundled_fixture_dir() -> Path:
    """Directory holding the shipped 200-document fixture files."""
    return Path(str(resources.files("sophia_bench") / "data" / "fixture"))
