from typing import Callable, Optional


def run_loop(
    task: Callable[[int], None],
    *,
    cycles: int,
    every: int = 1,
    on_cycle: Optional[Callable[[int], None]] = None,
) -> int:
    """
    Run task(count) `cycles` times; on_cycle(count) fires every `every` cycles
    and after the last one. Returns the number of completed cycles.
    """
    count = 0
    while count < cycles:
        count += 1
        task(count)
        if on_cycle and (count % max(every, 1) == 0 or count == cycles):
            on_cycle(count)
    return count
