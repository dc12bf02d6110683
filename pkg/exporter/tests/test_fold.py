import numpy as np
import pytest
import torch

from rdexport.fold import fold_batchnorm

from conftest import randomize_batchnorm


def test_fold_conv_matches_torch():
    torch.manual_seed(11)
    conv = torch.nn.Conv2d(3, 6, 3, padding=1)
    bn = torch.nn.BatchNorm2d(6)
    randomize_batchnorm(torch.nn.Sequential(bn), 12)
    ref = torch.nn.Sequential(conv, bn).eval()

    w, b = fold_batchnorm(conv.weight, conv.bias, bn)
    x = torch.randn(5, 3, 8, 8)
    with torch.no_grad():
        want = ref(x)
        got = torch.nn.functional.conv2d(
            x, torch.from_numpy(w), torch.from_numpy(b), padding=1
        )
    assert torch.max(torch.abs(got - want)).item() < 1e-5


def test_fold_linear_matches_torch():
    torch.manual_seed(13)
    fc = torch.nn.Linear(10, 4)
    bn = torch.nn.BatchNorm1d(4)
    randomize_batchnorm(torch.nn.Sequential(bn), 14)
    ref = torch.nn.Sequential(fc, bn).eval()

    w, b = fold_batchnorm(fc.weight, fc.bias, bn)
    x = torch.randn(7, 10)
    with torch.no_grad():
        want = ref(x)
        got = torch.nn.functional.linear(x, torch.from_numpy(w), torch.from_numpy(b))
    assert torch.max(torch.abs(got - want)).item() < 1e-5


def test_fold_handles_missing_bias():
    torch.manual_seed(15)
    conv = torch.nn.Conv2d(2, 4, 3, bias=False)
    bn = torch.nn.BatchNorm2d(4)
    randomize_batchnorm(torch.nn.Sequential(bn), 16)
    ref = torch.nn.Sequential(conv, bn).eval()

    w, b = fold_batchnorm(conv.weight, None, bn)
    x = torch.randn(3, 2, 6, 6)
    with torch.no_grad():
        want = ref(x)
        got = torch.nn.functional.conv2d(x, torch.from_numpy(w), torch.from_numpy(b))
    assert torch.max(torch.abs(got - want)).item() < 1e-5
    assert w.dtype == np.float32 and b.dtype == np.float32


def test_fold_channel_mismatch_rejected():
    fc = torch.nn.Linear(6, 3)
    bn = torch.nn.BatchNorm1d(5)
    with pytest.raises(ValueError):
        fold_batchnorm(fc.weight, fc.bias, bn)
