import os
from dotenv import load_dotenv

load_dotenv()


def _optional_int(name):
    value = os.getenv(name)
    return int(value) if value not in (None, '') else None


class Config:
    """Base configuration"""
    # Logging
    LOG_LEVEL = os.getenv('QACONV_LOG_LEVEL', 'INFO')

    # Execution
    WORKERS = 1
    WORKERS_OVERRIDE = _optional_int('QACONV_WORKERS')
    GALLERY_BLOCK = int(os.getenv('QACONV_GALLERY_BLOCK', 64))

    # HTTP server
    PORT = int(os.getenv('QACONV_PORT', 5000))

    # Matching
    KERNEL_SIZE = 1
    INTERPRET_THRESHOLD = 0.5
    BN_MOMENTUM = 0.1
    BN_EPS = 1e-5

    # Head training
    FOCAL_GAMMA = 2.0
    BATCH_SIZE = 32
    LEARNING_RATE = 0.01
    LR_DECAY = 0.1
    DECAY_EPOCH = 40
    EPOCHS = 60
    MEMORY_UPDATE = 'direct'
    EMA_DECAY = 0.5
    AUGMENT = False
    SEED = 0

    # Temporal lifting
    TLIFT_TAU = 100.0
    TLIFT_SIGMA = 200.0
    TLIFT_K = 10
    TLIFT_ALPHA = 0.2
    TLIFT_EXCLUDE_SAME_CAMERA = False

    # Re-ranking
    RERANK_K1 = 20
    RERANK_K2 = 6
    RERANK_LAMBDA = 0.3

    # Evaluation
    RANK_MAX = 20


class DevelopmentConfig(Config):
    """Development configuration"""
    DEBUG = True
    LOG_LEVEL = os.getenv('QACONV_LOG_LEVEL', 'DEBUG')


class ProductionConfig(Config):
    """Production configuration"""
    DEBUG = False


class TestingConfig(Config):
    """Testing configuration"""
    TESTING = True
    LOG_LEVEL = 'WARNING'
    WORKERS_OVERRIDE = None


# Configuration mapping
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}
