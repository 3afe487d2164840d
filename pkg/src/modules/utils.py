from typing import List, Sequence, Union
import logging
import os

from rich.logging import RichHandler


__all__ = ["workers_handler", "list_handler", "setup_logging"]


def workers_handler(value: Union[int, float]) -> int:
    """
    Calculate the number of workers based on an input value.

    Args:
        value (int | float): The input value to determine the number of workers. \
            Int for a specific numbers. \
            Float for a specific portion. \
            Set to 0 to run sequentially.

    Returns:
        int: The computed number of workers for parallel runs.
    """
    max_workers = os.cpu_count() or 1
    match value:
        case bool():
            workers = 0
        case int():
            workers = value
        case float():
            workers = int(max_workers * value)
        case _:
            workers = 0
    if not (-1 < workers <= max_workers):
        raise ValueError(
            f"Number of workers is out of bounds. Min: 0 | Max: {max_workers}. Got {workers} instead."
        )
    return workers


def list_handler(value: Union[str, int, Sequence], cast: type = str) -> List:
    """
    Turn a command line value into a list.

    Args:
        value (str | int | Sequence): A single value, a comma separated string or a sequence.
        cast (type, optional): Type of every item. Defaults to str.

    Returns:
        List: The items, in order. Empty for None or an empty string.
    """
    if value is None:
        return []
    if isinstance(value, str):
        items = [item.strip() for item in value.strip("[]").split(",")]
        return [cast(item) for item in items if item]
    if isinstance(value, (int, float)):
        return [cast(value)]
    try:
        return [cast(item) for item in value]
    except TypeError:
        raise TypeError(
            f"The 'value' parameter must be a string or a sequence. Got {type(value)} instead."
        ) from None


def setup_logging(level: Union[str, int] = "INFO") -> None:
    """
    Route every logger through rich, with markup enabled.

    Args:
        level (str | int, optional): Root log level. Defaults to "INFO".
    """
    logging.basicConfig(
        level=level.upper() if isinstance(level, str) else level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(markup=True, rich_tracebacks=True, show_path=False)],
        force=True,
    )
