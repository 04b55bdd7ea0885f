import numpy as np
import pytest

from rdcnn import encoder, nn
from rdcnn.config import TrainConfig
from rdcnn.trainer import Batch


def tiny_config(**kw):
    base = dict(d_x=4, d_d=4, n_r=2, f_d=8, f_s=8, w_d=2, d_b=3, w_s=3, char_dropout=0.0)
    base.update(kw)
    return TrainConfig(**base)


def randomize(params, rng):
    """Move every parameter, running statistics included, away from its init."""
    for name, value in params.items():
        if name.endswith("running_var"):
            value[:] = rng.uniform(0.5, 2.0, value.shape)
        elif name.endswith(("gamma",)):
            value[:] = rng.uniform(0.5, 1.5, value.shape)
        elif name != "embed.chars" and name != "embed.features":
            value[:] = rng.normal(size=value.shape) * 0.5
    return params


def random_batch(rng, lengths, n_chars, n_tags):
    lengths = np.asarray(lengths)
    b, n_max = len(lengths), int(lengths.max())
    mask = (np.arange(n_max)[None, :] < lengths[:, None]).astype(np.int8)
    chars = np.where(mask, rng.integers(2, n_chars, size=(b, n_max)), encoder.PAD)
    feats = np.where(mask, rng.integers(1, len(encoder.FEATURE_VOCAB), size=(b, n_max)), encoder.PAD)
    tags = np.where(mask, rng.integers(0, n_tags, size=(b, n_max)), 0)
    return Batch(chars, feats, tags, mask, lengths)


# One "ACCEPTANCE <n> PASS|FAIL: ..." line per criterion, echoed after the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def tiny():
    return tiny_config()


__all__ = ["tiny_config", "randomize", "random_batch", "nn", "ACCEPTANCE_LINES"]
