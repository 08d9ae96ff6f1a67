"""
Parallel execution of independent scenario runs.

Each run owns its model, random stream and recorder, so runs can execute on
any thread in any order; results always come back in submission order.
"""

from __future__ import annotations

import asyncio
import concurrent.futures
from collections.abc import Callable, Sequence
from typing import TYPE_CHECKING, TypeVar

if TYPE_CHECKING:
    from cohort_avn.sim.runner import ScenarioTrace
    from cohort_avn.sim.scenario import Scenario

T = TypeVar("T")

PARALLEL_MODES = ("asyncio", "threading", "serial")


async def run_jobs_async(jobs: Sequence[Callable[[], T]]) -> list[T]:
    """Run every job in the default executor and gather the results."""
    loop = asyncio.get_running_loop()
    return list(await asyncio.gather(*(loop.run_in_executor(None, job) for job in jobs)))


def run_jobs_multithreaded(
    jobs: Sequence[Callable[[], T]], max_workers: int | None = None
) -> list[T]:
    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = [executor.submit(job) for job in jobs]
        return [future.result() for future in futures]


def run_jobs(jobs: Sequence[Callable[[], T]], mode: str = "asyncio") -> list[T]:
    """Run independent jobs with the selected mode ('asyncio', 'threading' or 'serial')."""
    if mode not in PARALLEL_MODES:
        raise ValueError(f"Unknown parallel mode: {mode}")
    jobs = list(jobs)
    if mode == "serial" or len(jobs) < 2:
        return [job() for job in jobs]
    if mode == "threading":
        return run_jobs_multithreaded(jobs)
    try:
        asyncio.get_running_loop()
    except RuntimeError:
        return asyncio.run(run_jobs_async(jobs))
    # already inside an event loop: drive a fresh one from a worker thread
    with concurrent.futures.ThreadPoolExecutor(max_workers=1) as executor:
        return executor.submit(lambda: asyncio.run(run_jobs_async(jobs))).result()


def run_scenarios_parallel(
    scenarios: Sequence[Scenario | dict | str],
    seed: int | None = None,
    checked: bool | None = None,
    mode: str = "asyncio",
) -> list[ScenarioTrace]:
    """Run several scenarios side by side; traces match those of serial runs."""
    from cohort_avn.sim.runner import run_scenario

    return run_jobs(
        [
            lambda scenario=scenario: run_scenario(scenario, seed=seed, checked=checked)
            for scenario in scenarios
        ],
        mode=mode,
    )
