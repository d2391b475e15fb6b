import sys
import math


class print_progress_bar:
    """Prints a progress bar (to standard out) while scenes are synthesised or a model trains

    Notes
    -----
    Other printing to the standard out will interfere with the progress bar printing

    Attributes
    ----------
    base_message: str
        This text is printed to the left of the progress bar
    total: int
        Number of work items that make up 100%
    bar_length: int, optional (default: 40)
        The total length (number of characters) of the completed progress bar
    progress_char: str, optional (default: "#")
        The character to print within the progress bar
    stream: file-like, optional (default: sys.stdout)

    Example Usage
    -------------
    >>> progress_printer = print_progress_bar(base_message="simulating scenes", total=28)
    >>> for done in range(1, 29):
    ...     progress_printer.update(done, suffix=f"scene {done}/28")
    simulating scenes |########################################| 100.00% scene 28/28
    """

    def __init__(
        self,
        base_message: str,
        total: int,
        bar_length: int = 40,
        progress_char: str = "#",
        stream=None,
    ):
        assert len(progress_char) == 1, "len(progress_char) must equal 1"
        assert total >= 1, "total must be at least 1"
        self.base_message = base_message
        self.total = total
        self.bar_length = bar_length
        self.progress_char = progress_char
        self.stream = stream or sys.stdout

    def update(self, n_done: int, suffix: str = "") -> None:
        percent_complete = min(n_done / self.total, 1.0)
        n_completed_symbols = math.floor(self.bar_length * percent_complete)
        n_incomplete_symbols = self.bar_length - n_completed_symbols
        line = (
            f"{self.base_message} |{self.progress_char*n_completed_symbols}"
            f"{' '*n_incomplete_symbols}| {100*percent_complete:.2f}% {suffix}"
        )
        if percent_complete >= 1.0:
            print(line.rstrip(), file=self.stream, flush=True)
        else:
            print(line, file=self.stream, flush=True, end="\r")
