import numpy as np
from qaconv.utils.exceptions import FormatError, PreconditionError

# Images are resized to 384×128 before feature extraction
DEFAULT_HEIGHT = 384
DEFAULT_WIDTH = 128


class ImageTensor:
    """C×H×W image with values in [0, 1]"""

    def __init__(self, data):
        data = np.array(data, dtype=np.float32, copy=True)
        if data.ndim != 3:
            raise FormatError(f"Image must be C×H×W, got shape {data.shape}")
        if data.size and (data.min() < 0 or data.max() > 1):
            raise PreconditionError("Image values must lie in [0, 1]")
        data.flags.writeable = False
        self.data = data

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    def __eq__(self, other):
        return isinstance(other, ImageTensor) and np.array_equal(self.data, other.data)
