"""
Order-preserving parallel execution of independent training cells.
"""

from typing import Any, Callable, Iterable, List, Sequence

from joblib import Parallel, delayed


def run_cells(fn: Callable[..., Any], cells: Iterable[Sequence[Any]], n_jobs: int = 1) -> List[Any]:
    """
    Evaluate fn(*cell) for every cell, in submission order.

    All randomness is key-derived, so results do not depend on n_jobs.

    Args:
        fn: Picklable callable
        cells: Argument tuples
        n_jobs: Worker count; 1 runs serially in-process

    Returns:
        Results in the order of `cells`
    """
    cells = list(cells)
    if n_jobs == 1 or len(cells) <= 1:
        return [fn(*cell) for cell in cells]
    return Parallel(n_jobs=n_jobs)(delayed(fn)(*cell) for cell in cells)
