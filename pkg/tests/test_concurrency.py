import contextvars
import threading

import pytest

from nectfuse.concurrency import run_parallel


def test_run_parallel_keeps_order():
    calls = [lambda value=value: value * value for value in range(6)]
    assert run_parallel(calls) == [0, 1, 4, 9, 16, 25]
    assert run_parallel(calls, max_workers=3) == [0, 1, 4, 9, 16, 25]


@pytest.mark.timeout(10)
def test_run_parallel_uses_threads():
    names = run_parallel(
        [lambda: threading.current_thread().name for _ in range(4)], max_workers=4
    )
    assert threading.main_thread().name not in names

    names = run_parallel([lambda: threading.current_thread().name for _ in range(4)])
    assert set(names) == {threading.current_thread().name}


def test_run_parallel_raises():
    def broken():
        raise RuntimeError("chain failed")

    with pytest.raises(RuntimeError, match="chain failed"):
        run_parallel([lambda: 1, broken], max_workers=2)


@pytest.mark.timeout(10)
def test_calls_see_caller_context():
    chain = contextvars.ContextVar("chain", default=0)
    chain.set(3)
    seen = run_parallel([chain.get, chain.get], max_workers=2)
    assert seen == [3, 3]

    names = run_parallel(
        [lambda: threading.current_thread().name for _ in range(2)], max_workers=2
    )
    assert all(name.startswith("nectfuse-chain") for name in names)
