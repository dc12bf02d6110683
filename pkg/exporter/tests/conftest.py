"""Shared helpers: deterministic checkpoints with nontrivial batchnorm stats."""

import pathlib

import pytest
import torch

from rdexport import build_arch

REPO_ROOT = pathlib.Path(__file__).resolve().parents[2]

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def randomize_batchnorm(model, seed):
    """Give every bn layer random affine params and running stats.

    Fresh modules have mean 0 / var 1 / gamma 1 / beta 0, which folding maps
    to a near-identity; tests need folds that actually change the weights.
    """
    g = torch.Generator().manual_seed(seed)
    for mod in model.modules():
        if isinstance(mod, (torch.nn.BatchNorm1d, torch.nn.BatchNorm2d)):
            mod.running_mean.uniform_(-1.0, 1.0, generator=g)
            mod.running_var.uniform_(0.5, 2.0, generator=g)
            mod.weight.data.uniform_(0.5, 1.5, generator=g)
            mod.bias.data.uniform_(-0.5, 0.5, generator=g)
    return model


def make_checkpoint(arch, out_dir, seed=7):
    torch.manual_seed(seed)
    model = randomize_batchnorm(build_arch(arch), seed + 1)
    path = pathlib.Path(out_dir) / f"{arch}.pt"
    torch.save(model.state_dict(), path)
    return path, model


@pytest.fixture
def ckpt_factory(tmp_path):
    return lambda arch, seed=7: make_checkpoint(arch, tmp_path, seed)
