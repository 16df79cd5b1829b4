"""Tests for the worker pool."""
from __future__ import annotations

import pytest

from pmm_lab.batch import run_batch, run_batch_async


def _square(value: int) -> int:
    return value * value


async def test_run_batch_async_inline() -> None:
    """Test the single-worker path."""
    assert await run_batch_async(1, _square, range(4)) == [0, 1, 4, 9]


async def test_run_batch_async_pool_keeps_order() -> None:
    """Test that pooled results come back in input order."""
    assert await run_batch_async(3, _square, range(10)) == [v * v for v in range(10)]


async def test_run_batch_async_rejects_zero_jobs() -> None:
    """Test the job count check."""
    with pytest.raises(ValueError):
        await run_batch_async(0, _square, [1])


def test_run_batch_blocking() -> None:
    """Test the synchronous wrapper."""
    assert run_batch(2, _square, [3, 4]) == [9, 16]
    assert run_batch(4, _square, []) == []
