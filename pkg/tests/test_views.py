import pytest

from conftest import make_doc
from sophia_bench.corpus import PatentDocument, load_corpus, save_corpus
from sophia_bench.errors import DataFormatError, MissingSectionError
from sophia_bench.views import (ViewName, advantages, extract_all_views, extract_view, independent_claims,
                                is_dependent_claim, object_of_invention, split_claims, tacd)

FULL = dict(title="Widget", abstract="A widget is shown.", claims="1. A widget. 2. The widget of claim 1, red.",
            description="Background.\nIt is an object of the invention to cut cost.\nDetails follow.")


def test_iclm_drops_dependent_claims():
    assert independent_claims("1. A widget. 2. The widget of claim 1, wherein it is blue.") == "1. A widget."


def test_split_claims_ignores_claim_references():
    claims = "1. A lamp. 2. The lamp of claim 1. 3. A method of using the lamp according to claim 2. 4. A kit."
    parts = split_claims(claims)
    assert len(parts) == 4
    assert parts[1] == "2. The lamp of claim 1."
    assert independent_claims(claims) == "1. A lamp. 4. A kit."


@pytest.mark.parametrize("text", [
    "2. The device according to claim 1, wherein x.",
    "3. Method as claimed in any preceding claim.",
    "4. Apparatus according to any one of claims 1 to 3.",
    "5. A product obtained by the process in claim 4.",
])
def test_dependency_phrases(text):
    assert is_dependent_claim(text)


def test_independent_claim_mentioning_claims_word():
    assert not is_dependent_claim("6. A system for processing insurance claims comprising a server.")


def test_tacd_order_and_length():
    doc = make_doc("D1", **FULL)
    t = tacd(doc)
    parts = [FULL["title"], FULL["abstract"], FULL["claims"], FULL["description"]]
    assert t == "\n".join(parts)
    assert len(t) == sum(map(len, parts)) + 3


def test_tacd_requires_all_sections():
    doc = make_doc("D2", title="T", abstract="A")
    with pytest.raises(MissingSectionError):
        tacd(doc)
    assert extract_view(doc, ViewName.CLMS) is None


# ten hand-built descriptions; index -> sentence that must appear in obj (None = no anchor)
OBJ_CASES = [
    ("Intro.\nThe object of the invention is to reduce latency.\nMore text.", "The object of the invention is to reduce latency."),
    ("It is an object of the present invention to save power.", "It is an object of the present invention to save power."),
    ("Prior art.\nAn aim of the invention is a lighter frame.\nNext para.", "An aim of the invention is a lighter frame."),
    ("The objectives of the invention are speed and cost.", "The objectives of the invention are speed and cost."),
    ("No anchor here.\nJust text about gears.", None),
    ("Summary.\nOBJECT OF THE INVENTION\nTo provide a pump.", "To provide a pump."),
    ("The object is unclear.\nObjects of the invention include safety.", "Objects of the invention include safety."),
    ("It is one aim of the present invention to improve grip. It also helps.", "It also helps."),
    ("The invention relates to valves.", None),
    ("Field.\nAccordingly, the objective of the invention is to filter noise.\nEmbodiments.", "Embodiments."),
]


@pytest.mark.parametrize("desc,expected", OBJ_CASES)
def test_object_of_invention_fixture(desc, expected):
    got = object_of_invention(desc)
    if expected is None:
        assert got is None
    else:
        assert expected in got


def test_obj_takes_following_paragraph():
    assert object_of_invention("A.\nIt is an object of the invention to X.\nB follows.\nC.") == \
        "It is an object of the invention to X.\nB follows."


def test_advantages_sentences():
    desc = "The device is new. An advantage is lower cost. It is green.\nA drawback of old designs is weight."
    assert advantages(desc) == "An advantage is lower cost. A drawback of old designs is weight."
    assert advantages("Nothing relevant.") is None


def test_ai_views_come_from_table():
    doc = make_doc("D3", **FULL)
    table = {"D3": {"ai_ab": "summary text"}}
    views = extract_all_views(doc, table)
    assert views[ViewName.AI_AB] == "summary text"
    assert views[ViewName.AI_OBJ] is None
    assert extract_view(doc, "ai_ab") is None


def test_corpus_round_trip(tmp_path):
    docs = [make_doc("D1", ipc=["G06Q-010/026", "H04L"], **FULL), make_doc("D2", year=2017, abstract="Only abstract")]
    save_corpus(docs, tmp_path / "c.jsonl")
    back = load_corpus(tmp_path / "c.jsonl")
    assert [d.to_record() for d in back] == [d.to_record() for d in docs]


def test_corpus_rejects_bad_records(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text('{"doc_id": "X", "family_id": "F", "pub_year": "2020", "jurisdiction": "EP", "ipc": [],'
                 ' "title": "t", "abstract": null, "claims": null, "description": null}\n')
    with pytest.raises(DataFormatError):
        load_corpus(p)
    with pytest.raises(DataFormatError):
        PatentDocument("Y", "F", 2020, "EP", (), {})
