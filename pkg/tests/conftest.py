import numpy as np
import pytest
from hypothesis import settings

from sarcnet.synthetic import generate_corpus, write_corpus

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_corpus(tmp_path):
    path = tmp_path / "toy.jsonl"
    write_corpus(generate_corpus(120, seed=5), path)
    return path


@pytest.fixture
def toy_config_file(tmp_path):
    path = tmp_path / "toy.cfg"
    path.write_text(
        "# tiny settings for fast CLI runs\n"
        "embedding_dim = 8\nfilter_width = 2\nout_channels = 4\nhidden_units = 4\n"
        "attention_size = 4\nmlp_hidden = 6\ndropout = 0.2\nepochs = 3\nbatch_size = 16\n",
        encoding="utf-8")
    return path
