from typing import List, Tuple, Callable, Any
import concurrent.futures

from tqdm import tqdm


def _sequential_execution(func: Callable, data: List[Any]) -> List[Any]:
    return [func(*d) for d in data]


def _chunk_list(l: List[Any], chunk_size: int) -> List[List[Any]]:
    return [l[i : i + chunk_size] for i in range(0, len(l), chunk_size)]


def chunk_sizes(n_items: int, chunk_size: int) -> List[int]:
    """Splits ``n_items`` into consecutive chunks of ``chunk_size`` (the last one may be smaller)."""
    return [min(chunk_size, n_items - start) for start in range(0, n_items, chunk_size)]


def run_executor_with_progress(
    func: Callable,
    data: List[Tuple[Any]],
    n_threads: int,
    datapoints_per_future: int = 1,
    progress: bool = True,
    description: str = None,
) -> List[Any]:
    """Executes a function in parallel on all data and shows a progress bar which is
    updated for each finished task.

    The results are returned in the order of ``data`` regardless of the order in which
    the threads finish, so reductions over them do not depend on the thread count.

    Args:
        func (Callable): The function to execute
        data (List[Tuple[Any]]): The arguments to pass to the function, one tuple per call
        n_threads (int): The number of threads to use
        datapoints_per_future (int, optional): The number of datapoints which are processed in one future/single thread.
        progress (bool, optional): Whether to show a progress bar. Defaults to True.
        description (str, optional): Label of the progress bar.

    Returns:
        List[Any]: One result per entry of ``data``.
    """
    if not data:
        return []

    argument_chunks = _chunk_list(list(data), datapoints_per_future)

    with tqdm(total=len(data), disable=not progress, desc=description) as pbar:
        with concurrent.futures.ThreadPoolExecutor(max_workers=n_threads) as executer:
            chunk_futures = [
                executer.submit(_sequential_execution, func, arg_chunk)
                for arg_chunk in argument_chunks
            ]

            for fut in concurrent.futures.as_completed(chunk_futures):
                pbar.update(len(fut.result()))

    return [r for fut in chunk_futures for r in fut.result()]
