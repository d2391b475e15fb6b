"""
This script defines the function run_python_function_in_parallel()
"""

import concurrent.futures
import functools
import logging
import os
import threading
from typing import Any, Callable, Tuple

logger = logging.getLogger(__name__)


def run_python_function_in_parallel(
    func: Callable,
    input_tuple: Tuple[Any],
    parallel_method: str = "multi_thread",
    n_workers: int = 1,
    verbose: bool = False,
) -> list:
    """Runs [func] on every item of [input_tuple] using threads or processes, keeping input order\n
    Notes
    -----
    If your function has multiple input parameters, wrap them in the single argument [x] and
    unpack them inside the function (e.g. a dict or a tuple).
    With n_workers=1 the items are processed sequentially in the calling thread, which is the
    mode used for bit-reproducible runs.\n
    Parameters
    ----------
    func: Callable
        A function taking a single argument (x)
    input_tuple: tuple
        The inputs (x) to process
    parallel_method: str
        One of ['multi_core', 'multi_thread']
    n_workers: int
        Number of worker threads/processes
    verbose: bool
        Whether to log worker start/finish information\n
    Returns
    -------
    list
        The function outputs, in the order of [input_tuple]\n
    Example Usage
    -------------
    >>> def sum_squares(x): return sum([num**2 for num in x])
    >>> run_python_function_in_parallel(
    ...     func = sum_squares,
    ...     input_tuple = ( [1,2], [3,4], [5,6,7] ),
    ...     parallel_method = "multi_thread",
    ...     n_workers = 2,
    ... )
    [5, 25, 110]
    """
    if parallel_method not in ["multi_core", "multi_thread"]:
        raise ValueError(
            "parallel_method must be one of ['multi_core', 'multi_thread']"
        )
    if n_workers < 1:
        raise ValueError("n_workers must be >= 1")

    def make_verbose(func):
        """A decorator that logs process and thread information before and after running"""

        @functools.wraps(func)
        def verbose_func(*args, **kwargs):
            logger.info(
                f"STARTED: process_ID={os.getpid()} thread_ID={threading.get_native_id()}"
            )
            result: Any = func(*args, **kwargs)
            logger.info(
                f"COMPLETED: process_ID={os.getpid()} thread_ID={threading.get_native_id()}"
            )
            return result

        return verbose_func

    wrapped_func = make_verbose(func) if verbose else func

    if n_workers == 1:
        return [wrapped_func(x) for x in input_tuple]

    if parallel_method == "multi_core":
        with concurrent.futures.ProcessPoolExecutor(max_workers=n_workers) as executor:
            return list(executor.map(func, input_tuple))

    with concurrent.futures.ThreadPoolExecutor(max_workers=n_workers) as executor:
        return list(executor.map(wrapped_func, input_tuple))
