"""Defines class SceneBatcher"""

import numpy as np


class SceneBatcher:
    """Breaks a collection of training items up into batches, in an order shuffled
    deterministically by (seed, epoch)

    Example:
    >>> batcher = SceneBatcher(list(range(10)), batch_size=4, seed=0)
    >>> [len(batch) for batch in batcher.epoch(0)]
    [4, 4, 2]
    >>> sorted(item for batch in batcher.epoch(3) for item in batch) == list(range(10))
    True
    >>> batcher.epoch(1) == batcher.epoch(1)
    True
    """

    def __init__(
        self,
        items,
        batch_size: int,
        seed: int = 0,
        shuffle: bool = True,
        drop_last: bool = False,
    ) -> None:
        """Initial setup of SceneBatcher class

        Args:
            items (Sequence): Anything indexable (e.g. a list of SceneAudio chunks)
            batch_size (int): Number of items per batch (the final batch may be shorter)
            seed (int): Shuffling seed
            shuffle (bool): If False, every epoch uses the input order
            drop_last (bool): Discard a final batch shorter than `batch_size`
        """
        if batch_size < 1:
            raise ValueError("`batch_size` must be at least 1")
        self._items = list(items)
        self.batch_size = batch_size
        self.seed = seed
        self.shuffle = shuffle
        self.drop_last = drop_last

    def __len__(self) -> int:
        """Number of batches per epoch"""
        full, remainder = divmod(len(self._items), self.batch_size)
        return full if (self.drop_last or remainder == 0) else full + 1

    def order(self, epoch: int) -> np.ndarray:
        """Item indices in the order they are served during [epoch]"""
        if not self.shuffle:
            return np.arange(len(self._items))
        return np.random.default_rng([self.seed, epoch]).permutation(len(self._items))

    def epoch(self, epoch: int) -> list:
        """All batches (tuples of items) of [epoch]"""
        order = self.order(epoch)
        batches = []
        for start in range(0, len(order), self.batch_size):
            indices = order[start : start + self.batch_size]
            if self.drop_last and len(indices) < self.batch_size:
                break
            batches.append(tuple(self._items[i] for i in indices))
        return batches
