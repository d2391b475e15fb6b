import io

import echo_beam_toolbox.convenience


def square_plus_offset(job: dict) -> float:
    return job["x"] ** 2 + job["offset"]


def test_scene_batcher_covers_every_item_once_per_epoch():
    """Each epoch serves every item exactly once, in batches of the requested size"""
    batcher = echo_beam_toolbox.convenience.SceneBatcher(list(range(10)), batch_size=4, seed=3)
    assert len(batcher) == 3, f"{len(batcher)} batches per epoch"
    for epoch in range(3):
        batches = batcher.epoch(epoch)
        assert [len(batch) for batch in batches] == [4, 4, 2], f"batch sizes in epoch {epoch}"
        assert sorted(item for batch in batches for item in batch) == list(range(10)), "items lost"


def test_scene_batcher_order_depends_on_seed_and_epoch_only():
    """The same (seed, epoch) gives the same order; different epochs reshuffle"""
    first = echo_beam_toolbox.convenience.SceneBatcher(list(range(20)), batch_size=5, seed=1)
    second = echo_beam_toolbox.convenience.SceneBatcher(list(range(20)), batch_size=5, seed=1)
    assert first.epoch(4) == second.epoch(4), "same seed and epoch gave different batches"
    assert first.epoch(0) != first.epoch(1), "epochs were not reshuffled"


def test_scene_batcher_options():
    """drop_last discards the short batch and shuffle=False keeps the input order"""
    batcher = echo_beam_toolbox.convenience.SceneBatcher("abcdefg", batch_size=3, shuffle=False, drop_last=True)
    assert batcher.epoch(0) == [("a", "b", "c"), ("d", "e", "f")], f"batches {batcher.epoch(0)}"
    assert len(batcher) == 2, f"{len(batcher)} batches"


def test_run_python_function_in_parallel_keeps_input_order():
    """Threads return results in the order of their inputs, as the sequential path does"""
    jobs = tuple({"x": x, "offset": 0.5} for x in range(12))
    expected = [x**2 + 0.5 for x in range(12)]
    for n_workers in (1, 4):
        result = echo_beam_toolbox.convenience.run_python_function_in_parallel(
            func=square_plus_offset, input_tuple=jobs, parallel_method="multi_thread", n_workers=n_workers
        )
        assert result == expected, f"n_workers={n_workers} gave {result}"


def test_print_progress_bar():
    """The bar fills up and ends with a newline at 100%"""
    stream = io.StringIO()
    progress = echo_beam_toolbox.convenience.print_progress_bar("training", total=4, bar_length=8, stream=stream)
    for done in range(1, 5):
        progress.update(done, suffix=f"step {done}")
    assert stream.getvalue().endswith("training |########| 100.00% step 4\n"), repr(stream.getvalue())
