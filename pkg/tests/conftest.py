import numpy as np
import pytest
import torch

from amcvad.model import DiscriminatorConfig, GeneratorConfig
from amcvad.synthetic import SynthSpec, generate_synthetic
from amcvad.training import seed_everything


@pytest.fixture(autouse=True)
def _single_thread():
    seed_everything(0, threads=1)
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_gen_config():
    return GeneratorConfig(32, 48, (4, 4, 4, 4), (8, 16, 32))


@pytest.fixture
def tiny_disc_config():
    return DiscriminatorConfig(widths=(8, 16, 32), out_channels=16)


def tiny_spec(**kw):
    base = dict(
        n_train_videos=2, n_test_videos=3, frames_per_video=40, height=32, width=48,
        sprite_size=6, n_sprites=1, speed=2, seed=3,
    )
    base.update(kw)
    return SynthSpec(**base)


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory):
    """(root, train, test) for a small synthetic set, shared across tests."""
    root = tmp_path_factory.mktemp("synth")
    train, test = generate_synthetic(tiny_spec(), root)
    return root, train, test


def random_frames(n, h, w, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(n, 3, h, w, generator=g)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
