import numpy as np
from qaconv.utils.exceptions import PreconditionError, ProfileMismatchError

UPDATE_DIRECT = 'direct'
UPDATE_EMA = 'ema'


class ClassMemory:
    """[c, d, h, w] buffer caching the latest feature map of every class"""

    def __init__(self, num_classes, profile, buffer=None):
        if num_classes < 1:
            raise PreconditionError(f"Class memory needs at least one class, got {num_classes}")
        self.profile = tuple(profile)
        if buffer is None:
            buffer = np.zeros((num_classes,) + self.profile, dtype=np.float32)
        buffer = np.array(buffer, dtype=np.float32, copy=True)
        if buffer.shape != (num_classes,) + self.profile:
            raise ProfileMismatchError(f"Memory buffer shape {buffer.shape} does not match "
                                       f"{num_classes} classes of profile {self.profile}")
        self.buffer = buffer

    @property
    def c(self):
        return self.buffer.shape[0]

    def check_labels(self, labels):
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= self.c):
            raise PreconditionError(f"Labels must lie in [0, {self.c}), got range "
                                    f"[{labels.min()}, {labels.max()}]")
        return labels

    def update(self, batch, labels, mode=UPDATE_DIRECT, ema_decay=0.5):
        """
        Write a mini batch into memory, in batch order

        Direct mode assigns each sample to its class slot, so the last
        occurrence of a class wins; ema mode blends each sample in with
        mem <- ema_decay*mem + (1-ema_decay)*sample. Classes absent from
        the batch are left untouched.
        """
        batch = np.asarray(batch, dtype=np.float32)
        labels = self.check_labels(labels)
        if batch.shape[1:] != self.profile:
            raise ProfileMismatchError(f"Batch profile {batch.shape[1:]} does not match memory {self.profile}")
        if batch.shape[0] != labels.size:
            raise PreconditionError(f"{batch.shape[0]} samples but {labels.size} labels")
        if mode == UPDATE_DIRECT:
            for sample, label in zip(batch, labels):
                self.buffer[label] = sample
        elif mode == UPDATE_EMA:
            if not 0 < ema_decay < 1:
                raise PreconditionError(f"EMA decay must lie in (0, 1), got {ema_decay}")
            for sample, label in zip(batch, labels):
                blended = ema_decay * self.buffer[label].astype(np.float64) + (1 - ema_decay) * sample
                self.buffer[label] = blended.astype(np.float32)
        else:
            raise PreconditionError(f"Unknown memory update mode '{mode}'")
        return self
