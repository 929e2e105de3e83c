"""Token counters used for prompt budgeting.

Two counters are provided:

``BpeCounter``
    Exact byte-pair encoding over the GPT-2 vocabulary files (``encoder.json``
    + ``vocab.bpe``), run through tiktoken. The vocabulary directory is taken
    from ``CTQA_BPE_DIR`` or, failing that, the copy bundled with the
    ``gpt3_tokenizer`` distribution.

``ByteFallbackCounter``
    ``ceil(utf8_bytes / 3)``. Works anywhere; reports are flagged when it is
    in use.
"""

from __future__ import annotations

import functools
import logging
import math
import os
from pathlib import Path
from typing import Protocol

log = logging.getLogger(__name__)

BPE_DIR_ENV = "CTQA_BPE_DIR"
# Same pre-tokenisation pattern as the GPT-2 / p50k encodings.
_GPT2_PATTERN = r"""'(?:[sdmt]|ll|ve|re)| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+"""


class TokenCounter(Protocol):
    name: str
    exact: bool

    def count(self, text: str) -> int: ...

    def truncate(self, text: str, max_tokens: int) -> str: ...


class ByteFallbackCounter:
    name = "bytes/3"
    exact = False

    def count(self, text: str) -> int:
        return math.ceil(len(text.encode("utf-8")) / 3)

    def truncate(self, text: str, max_tokens: int) -> str:
        if self.count(text) <= max_tokens:
            return text
        budget = max(max_tokens, 0) * 3
        return text.encode("utf-8")[:budget].decode("utf-8", errors="ignore")


class BpeCounter:
    exact = True

    def __init__(self, vocab_dir: str | os.PathLike, name: str = "gpt2-bpe"):
        import tiktoken
        from tiktoken.load import data_gym_to_mergeable_bpe_ranks

        vocab_dir = Path(vocab_dir)
        ranks = data_gym_to_mergeable_bpe_ranks(
            str(vocab_dir / "vocab.bpe"), str(vocab_dir / "encoder.json"))
        self.name = name
        self._enc = tiktoken.Encoding(
            name=f"ctqa-{name}",
            pat_str=_GPT2_PATTERN,
            mergeable_ranks=ranks,
            special_tokens={"<|endoftext|>": len(ranks)},
        )

    def encode(self, text: str) -> list[int]:
        # special-token text in table cells is counted as ordinary text
        return self._enc.encode(text, disallowed_special=())

    def count(self, text: str) -> int:
        return len(self.encode(text))

    def truncate(self, text: str, max_tokens: int) -> str:
        ids = self.encode(text)
        if len(ids) <= max_tokens:
            return text
        return self._enc.decode(ids[:max(max_tokens, 0)])


def find_bpe_dir() -> Path | None:
    env = os.environ.get(BPE_DIR_ENV)
    if env:
        return Path(env)
    try:
        import gpt3_tokenizer
    except ImportError:
        return None
    candidate = Path(gpt3_tokenizer.__file__).parent / "data"
    if (candidate / "vocab.bpe").exists() and (candidate / "encoder.json").exists():
        return candidate
    return None


@functools.lru_cache(maxsize=None)
def _cached_bpe(path: str) -> BpeCounter:
    return BpeCounter(path)


def get_counter(kind: str = "auto") -> TokenCounter:
    """``kind`` is ``"auto"``, ``"bpe"`` or ``"bytes"``.

    ``auto`` uses the exact counter when a vocabulary is available and falls
    back (with a warning) otherwise; ``bpe`` fails if no vocabulary exists.
    """
    if kind == "bytes":
        return ByteFallbackCounter()
    if kind not in ("auto", "bpe"):
        raise ValueError(f"unknown token counter {kind!r}")
    path = find_bpe_dir()
    if path is None:
        if kind == "bpe":
            raise FileNotFoundError(
                f"no BPE vocabulary found; set {BPE_DIR_ENV} to a directory with encoder.json and vocab.bpe")
        log.warning("BPE vocabulary not found, using approximate bytes/3 token counter")
        return ByteFallbackCounter()
    return _cached_bpe(str(path))
