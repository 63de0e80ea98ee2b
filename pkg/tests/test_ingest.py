import json

import pytest

from horizonscan.ingest import (
    RawDocument,
    TokenizedCorpus,
    VocabPrepConfig,
    load_corpus,
    normalize_corpus,
    normalize_text,
    prune_vocabulary,
    read_pairmap,
    read_phraselist,
    read_tokenized,
    read_wordlist,
    replacement_map,
    write_corpus_jsonl,
    write_tokenized,
)


def _doc(text, doc_id="d1", year=2015):
    return RawDocument(doc_id=doc_id, title="", abstract=text, year=year,
                       source="publication")


def test_replacement_joins_phrase():
    cfg = VocabPrepConfig(
        replacements={"global positioning system": "global_positioning_system"})
    out = normalize_text(_doc("Global Positioning System accuracy"), cfg)
    assert out == ["global_positioning_system", "accuracy"]


def test_multiword_stop_removed_before_tokenizing():
    cfg = VocabPrepConfig(multiword_stops=["copyright John Wiley and Sons"])
    out = normalize_text(_doc("copyright John Wiley and Sons remainder"), cfg)
    assert out == ["remainder"]


def test_lemma_map_only_applies_listed_tokens():
    cfg = VocabPrepConfig(lemma_map={"truths": "truth"})
    assert normalize_text(_doc("ground truth"), cfg) == ["ground", "truth"]
    assert normalize_text(_doc("ground truths"), cfg) == ["ground", "truth"]


def test_replacement_survives_stopword_removal():
    # the joined token is no longer the stopword, so it must survive even
    # though its first constituent alone would be dropped
    cfg = VocabPrepConfig(
        replacements={"ground truth": "ground_truth"},
        stopwords={"ground"},
    )
    out = normalize_text(_doc("ground truth ground control"), cfg)
    assert out == ["ground_truth", "control"]


def test_longest_replacement_wins():
    cfg = VocabPrepConfig(replacements={
        "neural network": "neural_network",
        "deep neural network": "deep_neural_network",
    })
    out = normalize_text(_doc("deep neural network training"), cfg)
    assert out == ["deep_neural_network", "training"]


def test_tokenizer_drops_numbers_and_singletons():
    cfg = VocabPrepConfig()
    out = normalize_text(_doc("AB 12 x yz_w 3d model-based"), cfg)
    assert out == ["ab", "yz_w", "3d", "model", "based"]


def test_load_corpus_happy_path(tmp_path):
    path = tmp_path / "corpus.jsonl"
    rows = [
        {"doc_id": "a", "title": "t1", "abstract": "x", "year": 2014, "source": "publication"},
        {"doc_id": "b", "title": "t2", "abstract": "y", "year": 2016, "source": "patent",
         "countries": ["US", "CN"]},
        {"doc_id": "c", "title": "t3", "abstract": "z", "year": 2018, "source": "grant"},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    docs, rejects = load_corpus(path)
    assert [d.doc_id for d in docs] == ["a", "b", "c"]
    assert rejects == []
    assert docs[1].countries == ["US", "CN"]
    assert docs[0].text == "t1 x"


def test_load_corpus_rejects(tmp_path):
    path = tmp_path / "corpus.jsonl"
    lines = [
        json.dumps({"doc_id": "a", "title": "t", "abstract": "x", "year": 2015, "source": "publication"}),
        json.dumps({"doc_id": "b", "title": "t", "abstract": "x", "source": "publication"}),
        "{not json",
        json.dumps({"doc_id": "d", "title": "t", "abstract": "x", "year": 2015, "source": "webpage"}),
        json.dumps({"doc_id": "e", "title": "t", "abstract": "x", "year": 1999, "source": "grant"}),
    ]
    path.write_text("\n".join(lines) + "\n")
    docs, rejects = load_corpus(path)
    assert [d.doc_id for d in docs] == ["a"]
    reasons = dict(rejects)
    assert 2 in reasons and "year" in reasons[2]
    assert 3 in reasons and "JSON" in reasons[3]
    assert 4 in reasons and "source" in reasons[4]
    assert 5 in reasons


def test_load_corpus_duplicate_id(tmp_path):
    path = tmp_path / "corpus.jsonl"
    row = {"doc_id": "dup", "title": "t", "abstract": "x", "year": 2015, "source": "grant"}
    path.write_text(json.dumps(row) + "\n" + json.dumps(row) + "\n")
    with pytest.raises(ValueError, match="dup"):
        load_corpus(path)


def test_load_corpus_schema_mapping(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text(json.dumps({"id": "a", "title": "t", "abstract": "x",
                                "yr": 2015, "source": "patent"}) + "\n")
    docs, rejects = load_corpus(path, schema={"doc_id": "id", "year": "yr"})
    assert docs[0].doc_id == "a" and docs[0].year == 2015
    assert rejects == []


def _tokenize_corpus(texts, cfg):
    docs = [_doc(t, doc_id=f"d{i}") for i, t in enumerate(texts)]
    token_docs = normalize_corpus(docs, cfg)
    return prune_vocabulary([d.doc_id for d in docs], token_docs, cfg)


def test_prune_doc_fraction_cutoff():
    # "common" sits in 6 of 100 docs; 6% exceeds the 5% ceiling
    texts = [f"unique{i:03d} filler{i:03d}" for i in range(100)]
    for i in range(6):
        texts[i] += " common"
    corpus = _tokenize_corpus(texts, VocabPrepConfig(max_doc_fraction=0.05))
    assert "common" not in corpus.vocabulary
    assert "unique000" in corpus.vocabulary


def test_prune_vocab_size_rank():
    # token i appears in i+1 docs; brute-force sort picks the oracle top-5
    texts = [[] for _ in range(10)]
    for rank in range(10):
        for d in range(rank + 1):
            texts[d].append(f"tok{rank}")
    cfg = VocabPrepConfig(vocab_size=5, max_doc_fraction=1.0)
    corpus = _tokenize_corpus([" ".join(t) for t in texts], cfg)
    df = {f"tok{r}": r + 1 for r in range(10)}
    oracle = sorted(df, key=lambda t: (-df[t], t))[:5]
    assert sorted(corpus.vocabulary) == sorted(oracle)
    assert corpus.lower_cutoff == min(df[t] for t in oracle)


def test_prune_no_op_when_vocab_large():
    texts = [" ".join(f"word{i:02d}x{j}" for j in range(5)) for i in range(10)]
    cfg = VocabPrepConfig(vocab_size=200_000, max_doc_fraction=1.0)
    corpus = _tokenize_corpus(texts, cfg)
    assert corpus.n_types == 50
    assert corpus.lower_cutoff == 1


def test_prune_invariant_fraction_bound():
    import random
    rnd = random.Random(5)
    # sparse pool plus one token in every doc: the bound must cut the
    # ubiquitous token and keep at least part of the pool
    texts = ["always " + " ".join(rnd.sample([f"wd{i:03d}" for i in range(100)], 8))
             for _ in range(60)]
    cfg = VocabPrepConfig(max_doc_fraction=0.25, vocab_size=1000)
    corpus = _tokenize_corpus(texts, cfg)
    assert corpus.n_types > 0
    assert "always" not in corpus.vocabulary
    for df in corpus.doc_freq:
        assert df / corpus.n_docs <= 0.25
    for _, toks in corpus.docs:
        assert all(0 <= t < corpus.n_types for t in toks)


def test_normalize_corpus_parallel_matches_serial():
    cfg = VocabPrepConfig(stopwords={"the"})
    docs = [_doc(f"the quick brown fox{i} jumps over dog{i % 7}", doc_id=f"d{i}")
            for i in range(300)]
    assert normalize_corpus(docs, cfg, workers=1) == normalize_corpus(docs, cfg, workers=3)


def test_tokenized_round_trip_and_determinism(tmp_path):
    cfg = VocabPrepConfig(max_doc_fraction=1.0)
    texts = ["alpha beta gamma", "beta gamma delta", "gamma delta epsilon"]
    corpus = _tokenize_corpus(texts, cfg)
    a_docs, a_vocab = tmp_path / "a.txt", tmp_path / "a.tsv"
    b_docs, b_vocab = tmp_path / "b.txt", tmp_path / "b.tsv"
    write_tokenized(corpus, a_docs, a_vocab)
    write_tokenized(_tokenize_corpus(texts, cfg), b_docs, b_vocab)
    assert a_docs.read_bytes() == b_docs.read_bytes()
    assert a_vocab.read_bytes() == b_vocab.read_bytes()
    back = read_tokenized(a_docs, a_vocab)
    assert back.vocabulary == corpus.vocabulary
    assert back.docs == corpus.docs
    assert back.doc_freq == corpus.doc_freq


def test_corpus_jsonl_round_trip(tmp_path):
    docs = [RawDocument("a", "t", "x", 2015, "grant", countries=["US"]),
            RawDocument("b", "u", "y", 2016, "patent", orgs=["acme"])]
    path = tmp_path / "c.jsonl"
    write_corpus_jsonl(docs, path)
    back, rejects = load_corpus(path)
    assert rejects == []
    assert back == docs


def test_config_map_readers(tmp_path):
    stop = tmp_path / "stop.txt"
    stop.write_text("the\nand\n\n# comment style line kept? no, plain list\n")
    phrases = tmp_path / "phrases.txt"
    phrases.write_text("all rights reserved\ncopyright john wiley and sons\n")
    lemma = tmp_path / "lemma.tsv"
    lemma.write_text("networks\tnetwork\nmodels\tmodel\n")
    repl = tmp_path / "repl.txt"
    repl.write_text("machine learning\tmachine_learning\nneural network\n")
    assert "the" in read_wordlist(stop)
    assert read_phraselist(phrases)[0] == "all rights reserved"
    assert read_pairmap(lemma)["networks"] == "network"
    m = replacement_map(repl)
    assert m["machine learning"] == "machine_learning"
    assert m["neural network"] == "neural_network"


def test_vocab_config_validation():
    with pytest.raises(ValueError):
        VocabPrepConfig(max_doc_fraction=0.0)
    with pytest.raises(ValueError):
        VocabPrepConfig(vocab_size=0)
    with pytest.raises(ValueError):
        VocabPrepConfig(replacements={"single": "single_x"})
