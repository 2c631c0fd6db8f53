import numpy as np
from qaconv.utils.exceptions import PreconditionError, ProfileMismatchError
from qaconv.utils.helpers import make_rng

MODE_TRAIN = 'train'
MODE_EVAL = 'eval'

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class HeadParams:
    """
    Parameters of the BN-FC-BN similarity head

    BN1 normalizes each of the 2hw pooled features over a batch of pairs,
    the FC layer maps them to one logit, BN2 normalizes that scalar logit.
    Scalars are stored as length-1 arrays so every field is handled alike.
    """

    TRAINABLE = ('bn1_weight', 'bn1_bias', 'fc_weight', 'fc_bias', 'bn2_weight', 'bn2_bias')
    RUNNING = ('bn1_running_mean', 'bn1_running_var', 'bn2_running_mean', 'bn2_running_var')
    FIELDS = TRAINABLE + RUNNING

    def __init__(self, bn1_weight, bn1_bias, bn1_running_mean, bn1_running_var, fc_weight, fc_bias,
                 bn2_weight=1.0, bn2_bias=0.0, bn2_running_mean=0.0, bn2_running_var=1.0,
                 momentum=BN_MOMENTUM, eps=BN_EPS, mode=MODE_EVAL):
        self.bn1_weight = np.array(bn1_weight, dtype=np.float64).ravel()
        self.bn1_bias = np.array(bn1_bias, dtype=np.float64).ravel()
        self.bn1_running_mean = np.array(bn1_running_mean, dtype=np.float64).ravel()
        self.bn1_running_var = np.array(bn1_running_var, dtype=np.float64).ravel()
        self.fc_weight = np.array(fc_weight, dtype=np.float64).ravel()
        self.fc_bias = np.array(fc_bias, dtype=np.float64).reshape(1)
        self.bn2_weight = np.array(bn2_weight, dtype=np.float64).reshape(1)
        self.bn2_bias = np.array(bn2_bias, dtype=np.float64).reshape(1)
        self.bn2_running_mean = np.array(bn2_running_mean, dtype=np.float64).reshape(1)
        self.bn2_running_var = np.array(bn2_running_var, dtype=np.float64).reshape(1)
        self.momentum = float(momentum)
        self.eps = float(eps)
        self.mode = mode
        self.validate()

    def validate(self):
        """Check lengths, variance signs, momentum and mode"""
        n = self.n_features
        for name in ('bn1_weight', 'bn1_bias', 'bn1_running_mean', 'bn1_running_var'):
            if getattr(self, name).size != n:
                raise ProfileMismatchError(f"{name} has {getattr(self, name).size} entries, expected {n}")
        if n == 0 or n % 2:
            raise ProfileMismatchError(f"Head must have an even, nonzero feature count, got {n}")
        if np.any(self.bn1_running_var < 0) or np.any(self.bn2_running_var < 0):
            raise PreconditionError("Running variances must be nonnegative")
        if not 0 < self.momentum < 1:
            raise PreconditionError(f"Momentum must lie in (0, 1), got {self.momentum}")
        if self.mode not in (MODE_TRAIN, MODE_EVAL):
            raise PreconditionError(f"Head mode must be '{MODE_TRAIN}' or '{MODE_EVAL}', got '{self.mode}'")

    @property
    def n_features(self):
        """2hw, the length of the pooled similarity vector"""
        return self.fc_weight.size

    @property
    def hw(self):
        return self.n_features // 2

    @classmethod
    def initialize(cls, n_features, seed=0, momentum=BN_MOMENTUM, eps=BN_EPS):
        """Identity BNs and a uniform fan-in initialized FC layer"""
        rng = make_rng(seed)
        bound = 1.0 / np.sqrt(n_features)
        return cls(
            bn1_weight=np.ones(n_features),
            bn1_bias=np.zeros(n_features),
            bn1_running_mean=np.zeros(n_features),
            bn1_running_var=np.ones(n_features),
            fc_weight=rng.uniform(-bound, bound, n_features),
            fc_bias=rng.uniform(-bound, bound),
            momentum=momentum,
            eps=eps,
            mode=MODE_TRAIN
        )

    def copy(self, mode=None):
        """Deep copy, optionally switching mode"""
        data = self.to_dict()
        if mode is not None:
            data['mode'] = mode
        return HeadParams.from_dict(data)

    def eval(self):
        self.mode = MODE_EVAL
        return self

    def to_dict(self):
        """Convert head to dictionary"""
        data = {name: getattr(self, name).tolist() for name in self.FIELDS}
        data.update(momentum=self.momentum, eps=self.eps, mode=self.mode)
        return data

    @classmethod
    def from_dict(cls, data):
        """Create head from dictionary"""
        return cls(
            bn1_weight=data.get('bn1_weight'),
            bn1_bias=data.get('bn1_bias'),
            bn1_running_mean=data.get('bn1_running_mean'),
            bn1_running_var=data.get('bn1_running_var'),
            fc_weight=data.get('fc_weight'),
            fc_bias=data.get('fc_bias'),
            bn2_weight=data.get('bn2_weight', 1.0),
            bn2_bias=data.get('bn2_bias', 0.0),
            bn2_running_mean=data.get('bn2_running_mean', 0.0),
            bn2_running_var=data.get('bn2_running_var', 1.0),
            momentum=data.get('momentum', BN_MOMENTUM),
            eps=data.get('eps', BN_EPS),
            mode=data.get('mode', MODE_EVAL)
        )

    def __eq__(self, other):
        return isinstance(other, HeadParams) and all(
            np.array_equal(getattr(self, name), getattr(other, name)) for name in self.FIELDS
        ) and (self.momentum, self.eps, self.mode) == (other.momentum, other.eps, other.mode)
