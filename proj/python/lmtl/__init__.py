"""Desk-scale multilingual denoising pretraining and translation."""

from ._lmtl import (
    DataError,
    NumericError,
    Tokenizer,
    Utf8Error,
    corpus_bleu,
    corpus_chrf,
    count_params,
    finetune,
    normalize_line,
    prepare,
    pretrain,
    report,
    score,
    train_tokenizer,
    translate,
)

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "NumericError",
    "Tokenizer",
    "Utf8Error",
    "corpus_bleu",
    "corpus_chrf",
    "count_params",
    "finetune",
    "normalize_line",
    "prepare",
    "pretrain",
    "report",
    "score",
    "train_tokenizer",
    "translate",
]
