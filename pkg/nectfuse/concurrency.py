import asyncio
import contextvars
import functools
import typing
from concurrent.futures import Executor, ThreadPoolExecutor

T = typing.TypeVar("T")


async def run_in_executor(executor: Executor, call: typing.Callable[[], T]) -> T:
    """Await ``call`` on ``executor`` inside a copy of the caller's context."""
    loop = asyncio.get_running_loop()
    context = contextvars.copy_context()
    return await loop.run_in_executor(executor, functools.partial(context.run, call))


async def gather_in_executor(
    executor: Executor, calls: typing.Sequence[typing.Callable[[], T]]
) -> typing.List[T]:
    return list(
        await asyncio.gather(*(run_in_executor(executor, call) for call in calls))
    )


def run_parallel(
    calls: typing.Sequence[typing.Callable[[], T]], max_workers: int = 1
) -> typing.List[T]:
    """Run blocking calls, results in submission order.

    ``max_workers <= 1`` runs them one after another on the calling thread.
    """
    calls = list(calls)
    if max_workers <= 1 or len(calls) <= 1:
        return [call() for call in calls]

    with ThreadPoolExecutor(
        max_workers=max_workers, thread_name_prefix="nectfuse-chain"
    ) as executor:
        return asyncio.run(gather_in_executor(executor, calls))
