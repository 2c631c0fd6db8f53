from qaconv.models.memory import UPDATE_DIRECT, UPDATE_EMA
from qaconv.utils.exceptions import PreconditionError


class TLiftParams:
    """Temporal lifting parameters; times are in seconds"""

    def __init__(self, tau=100.0, sigma=200.0, k=10, alpha=0.2, exclude_same_camera=False):
        self.tau = float(tau)
        self.sigma = float(sigma)
        self.k = int(k)
        self.alpha = float(alpha)
        self.exclude_same_camera = bool(exclude_same_camera)
        if not self.tau > 0:
            raise PreconditionError(f"tau must be positive, got {self.tau}")
        if not self.sigma > 0:
            raise PreconditionError(f"sigma must be positive, got {self.sigma}")
        if self.k < 1:
            raise PreconditionError(f"K must be at least 1, got {self.k}")
        if self.alpha < 0:
            raise PreconditionError(f"alpha must be nonnegative, got {self.alpha}")

    def replace(self, **changes):
        data = self.to_dict()
        data.update(changes)
        return TLiftParams.from_dict(data)

    def to_dict(self):
        return {
            "tau": self.tau,
            "sigma": self.sigma,
            "k": self.k,
            "alpha": self.alpha,
            "exclude_same_camera": self.exclude_same_camera
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            tau=data.get('tau', 100.0),
            sigma=data.get('sigma', 200.0),
            k=data.get('k', 10),
            alpha=data.get('alpha', 0.2),
            exclude_same_camera=data.get('exclude_same_camera', False)
        )


class RerankParams:
    """k-reciprocal re-ranking parameters"""

    def __init__(self, k1=20, k2=6, lambda_value=0.3):
        self.k1 = int(k1)
        self.k2 = int(k2)
        self.lambda_value = float(lambda_value)
        if self.k1 < 1 or self.k2 < 1:
            raise PreconditionError(f"k1 and k2 must be positive, got k1={self.k1}, k2={self.k2}")
        if self.k2 > self.k1:
            raise PreconditionError(f"k2 ({self.k2}) must not exceed k1 ({self.k1})")
        if not 0 <= self.lambda_value <= 1:
            raise PreconditionError(f"lambda must lie in [0, 1], got {self.lambda_value}")

    def to_dict(self):
        return {"k1": self.k1, "k2": self.k2, "lambda": self.lambda_value}

    @classmethod
    def from_dict(cls, data):
        return cls(k1=data.get('k1', 20), k2=data.get('k2', 6), lambda_value=data.get('lambda', 0.3))


class TrainConfig:
    """Head training schedule: SGD with one step decay"""

    def __init__(self, batch_size=32, gamma=2.0, lr=0.01, lr_decay=0.1, decay_epoch=40, epochs=60,
                 update_mode=UPDATE_DIRECT, ema_decay=0.5, kernel_size=1, augment=False,
                 momentum=0.1):
        self.batch_size = int(batch_size)
        self.gamma = float(gamma)
        self.lr = float(lr)
        self.lr_decay = float(lr_decay)
        self.decay_epoch = int(decay_epoch)
        self.epochs = int(epochs)
        self.update_mode = update_mode
        self.ema_decay = float(ema_decay)
        self.kernel_size = int(kernel_size)
        self.augment = bool(augment)
        self.momentum = float(momentum)
        if self.batch_size < 2:
            raise PreconditionError(f"Batch size must be at least 2, got {self.batch_size}")
        if self.gamma < 0:
            raise PreconditionError(f"gamma must be nonnegative, got {self.gamma}")
        if not self.lr > 0:
            raise PreconditionError(f"Learning rate must be positive, got {self.lr}")
        if self.epochs < 1:
            raise PreconditionError(f"Epoch count must be positive, got {self.epochs}")
        if self.update_mode not in (UPDATE_DIRECT, UPDATE_EMA):
            raise PreconditionError(f"Unknown memory update mode '{self.update_mode}'")
        if not 0 < self.ema_decay < 1:
            raise PreconditionError(f"EMA decay must lie in (0, 1), got {self.ema_decay}")

    def learning_rate(self, epoch):
        """Rate for a zero-based epoch index"""
        return self.lr * (self.lr_decay if epoch >= self.decay_epoch else 1.0)

    def to_dict(self):
        return {
            "batch_size": self.batch_size,
            "gamma": self.gamma,
            "lr": self.lr,
            "lr_decay": self.lr_decay,
            "decay_epoch": self.decay_epoch,
            "epochs": self.epochs,
            "update_mode": self.update_mode,
            "ema_decay": self.ema_decay,
            "kernel_size": self.kernel_size,
            "augment": self.augment,
            "momentum": self.momentum
        }

    @classmethod
    def from_dict(cls, data):
        defaults = cls().to_dict()
        defaults.update({key: value for key, value in data.items() if key in defaults})
        return cls(**defaults)
