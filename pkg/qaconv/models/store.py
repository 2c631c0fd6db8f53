import numpy as np
from qaconv.models.feature_map import FeatureMap
from qaconv.utils.exceptions import FormatError, PreconditionError, ProfileMismatchError
from qaconv.utils.helpers import frames_to_seconds
from qaconv.utils.tensor_ops import normalize_array


class MetaRecord:
    """Identity, camera and capture time of one sample"""

    def __init__(self, identity, camera, frame=None, fps=None, time=None):
        if (frame is None) != (fps is None):
            raise FormatError("frame and fps must be both present or both absent")
        self.identity = int(identity)
        self.camera = int(camera)
        self.frame = None if frame is None else int(frame)
        self.fps = None if fps is None else float(fps)
        if time is None and self.frame is not None:
            time = frames_to_seconds(self.frame, self.fps)
        self.time = None if time is None else float(time)

    @property
    def has_time(self):
        return self.time is not None and np.isfinite(self.time)

    def to_dict(self):
        """Convert record to dictionary"""
        return {
            "id": self.identity,
            "camera": self.camera,
            "frame": self.frame,
            "fps": self.fps,
            "time": self.time
        }

    @classmethod
    def from_dict(cls, data):
        """Create record from dictionary"""
        return cls(
            identity=data.get('id'),
            camera=data.get('camera'),
            frame=data.get('frame'),
            fps=data.get('fps'),
            time=data.get('time')
        )

    def __eq__(self, other):
        return isinstance(other, MetaRecord) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"MetaRecord(id={self.identity}, camera={self.camera}, time={self.time})"


class GalleryStore:
    """Ordered feature maps of one profile plus their metadata records"""

    def __init__(self, features, records=None):
        features = np.array(features, dtype=np.float32, copy=True)
        if features.ndim != 4:
            raise FormatError(f"Store features must be [n, d, h, w], got shape {features.shape}")
        features.flags.writeable = False
        if records is None:
            records = [MetaRecord(identity=-1, camera=0) for _ in range(features.shape[0])]
        if len(records) != features.shape[0]:
            raise FormatError(f"Store has {features.shape[0]} feature maps but {len(records)} records")
        self.features = features
        self.records = list(records)

    def __len__(self):
        return self.features.shape[0]

    def __getitem__(self, index):
        return FeatureMap(self.features[index])

    @property
    def profile(self):
        return tuple(self.features.shape[1:])

    def normalized(self):
        """Copy of the store with every map channel-normalized"""
        return GalleryStore(normalize_array(self.features), self.records)

    def identities(self):
        return np.array([r.identity for r in self.records], dtype=np.int64)

    def has_times(self):
        return all(r.has_time for r in self.records)

    def require_nonempty(self, name="store"):
        if len(self) == 0:
            raise PreconditionError(f"The {name} is empty")


def check_same_profile(first, second):
    """Raise ProfileMismatchError unless both stores or maps share (d, h, w)"""
    if tuple(first.profile) != tuple(second.profile):
        raise ProfileMismatchError(f"Profile mismatch: {tuple(first.profile)} vs {tuple(second.profile)}")
