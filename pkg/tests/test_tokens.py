import pytest

from ctqa.tokens import BpeCounter, ByteFallbackCounter, find_bpe_dir, get_counter

needs_bpe = pytest.mark.skipif(find_bpe_dir() is None, reason="no BPE vocabulary available")


def test_fallback_counter():
    c = ByteFallbackCounter()
    assert c.count("") == 0
    assert c.count("abc") == 1 and c.count("abcd") == 2
    assert c.count("é") == 1  # two bytes
    assert c.truncate("abcdefghij", 2) == "abcdef"
    assert c.truncate("short", 10) == "short"


def test_get_counter_kinds(monkeypatch):
    assert get_counter("bytes").name == "bytes/3"
    with pytest.raises(ValueError):
        get_counter("nope")
    monkeypatch.setenv("CTQA_BPE_DIR", "")
    monkeypatch.setattr("ctqa.tokens.find_bpe_dir", lambda: None)
    assert get_counter("auto").name == "bytes/3"
    with pytest.raises(FileNotFoundError):
        get_counter("bpe")


@needs_bpe
def test_bpe_known_ids():
    c = get_counter("bpe")
    assert c.exact
    assert c.encode("hello world") == [31373, 995]
    assert c.count("") == 0
    assert c.count("<|endoftext|>") > 1  # treated as text


@needs_bpe
def test_bpe_truncate():
    c = get_counter("bpe")
    text = "(C, 7, 0, 416), " * 50
    cut = c.truncate(text, 20)
    assert text.startswith(cut) and c.count(cut) <= 20


@needs_bpe
def test_bpe_dir_override(monkeypatch, tmp_path):
    src = find_bpe_dir()
    for name in ("encoder.json", "vocab.bpe"):
        (tmp_path / name).write_bytes((src / name).read_bytes())
    monkeypatch.setenv("CTQA_BPE_DIR", str(tmp_path))
    assert find_bpe_dir() == tmp_path
    assert BpeCounter(tmp_path).count("hello world") == 2
