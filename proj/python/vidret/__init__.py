"""Two-branch video representation for text-to-video retrieval."""

import json as _json

from . import _vidret
from ._vidret import (
    ConfigError,
    LoadError,
    VidretError,
    cosine_sim,
    jaccard_sim,
    read_captions,
    read_features,
    tokenize,
    triplet_loss,
    write_features,
)

__all__ = [
    "ConfigError",
    "LoadError",
    "VidretError",
    "Session",
    "config_hash",
    "cosine_sim",
    "desk_config",
    "jaccard_sim",
    "paper_config",
    "rank_metrics",
    "read_captions",
    "read_features",
    "tokenize",
    "triplet_loss",
    "write_features",
]


def _dump(config):
    if config is None:
        return ""
    return config if isinstance(config, str) else _json.dumps(config)


def desk_config():
    return _json.loads(_vidret.desk_config())


def paper_config():
    return _json.loads(_vidret.paper_config())


def config_hash(config):
    return _vidret.config_hash(_dump(config))


def rank_metrics(scores, relevant):
    """scores: queries x candidates; relevant: candidate indices per query."""
    return _json.loads(_vidret.rank_metrics(scores, [list(r) for r in relevant]))


class Session:
    """A model plus the corpus named by its config."""

    def __init__(self, config=None, seed=None, _native=None):
        self._s = _native if _native is not None else _vidret.Session(_dump(config), seed)

    @classmethod
    def from_checkpoint(cls, path, data_dir=""):
        return cls(_native=_vidret.Session.from_checkpoint(str(path), str(data_dir)))

    @property
    def config(self):
        return _json.loads(self._s.config_json())

    @property
    def config_hash(self):
        return self._s.config_hash()

    @property
    def parameter_count(self):
        return self._s.parameter_count

    def train(self, out_dir="", restore_best=True):
        return _json.loads(self._s.train(str(out_dir), restore_best))

    def evaluate(self, split="test"):
        return _json.loads(self._s.evaluate(split))

    def evaluate_v2v(self, split="test", branch="both", space="raw", threshold=0.2):
        return _json.loads(self._s.evaluate_v2v(split, branch, space, threshold))

    def similarity(self, split="test", direction="t2v", branch="both", space="raw"):
        return self._s.similarity(split, direction, branch, space)

    def encode_video(self, frames):
        return self._s.encode_video(frames)

    def encode_text(self, text):
        return self._s.encode_text(text)

    def gradient_check(self, pairs=3, eps=1e-5):
        return self._s.gradient_check(pairs, eps)

    def stats(self, frames=20, words=10):
        return self._s.stats(frames, words)

    def save(self, path, f32=False):
        self._s.save(str(path), f32)
