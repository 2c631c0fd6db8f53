import logging
from pathlib import Path

from marshmallow import ValidationError

from qaconv.models.params import RerankParams, TLiftParams, TrainConfig
from qaconv.utils.exceptions import ConfigError
from qaconv.utils.validators import PipelineConfigSchema

logger = logging.getLogger(__name__)

# Configuration-file key -> Config class attribute holding its default
SETTING_KEYS = {
    'kernel_size': 'KERNEL_SIZE',
    'threshold': 'INTERPRET_THRESHOLD',
    'momentum': 'BN_MOMENTUM',
    'gamma': 'FOCAL_GAMMA',
    'batch_size': 'BATCH_SIZE',
    'lr': 'LEARNING_RATE',
    'lr_decay': 'LR_DECAY',
    'decay_epoch': 'DECAY_EPOCH',
    'epochs': 'EPOCHS',
    'update_mode': 'MEMORY_UPDATE',
    'ema_decay': 'EMA_DECAY',
    'augment': 'AUGMENT',
    'seed': 'SEED',
    'tau': 'TLIFT_TAU',
    'sigma': 'TLIFT_SIGMA',
    'k': 'TLIFT_K',
    'alpha': 'TLIFT_ALPHA',
    'exclude_same_camera': 'TLIFT_EXCLUDE_SAME_CAMERA',
    'k1': 'RERANK_K1',
    'k2': 'RERANK_K2',
    'rerank_lambda': 'RERANK_LAMBDA',
    'r_max': 'RANK_MAX',
    'workers': 'WORKERS',
    'gallery_block': 'GALLERY_BLOCK',
}


def parse_config_text(text, source='<config>'):
    """
    Parse key=value lines into a validated settings dict

    Blank lines and lines starting with # are skipped. Keys are the
    PipelineConfigSchema field names ('lambda' for the re-ranking weight).
    """
    raw = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ConfigError(f"{source}:{number}: expected key=value, got '{line}'")
        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ConfigError(f"{source}:{number}: missing key")
        raw[key] = value
    try:
        return PipelineConfigSchema().load(raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration in {source}", details=e.messages)


def load_config_file(path):
    """Read and validate a key=value configuration file"""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"Cannot read configuration file {path}: {e.strerror}")
    settings = parse_config_text(text, source=str(path))
    logger.info(f"Loaded {len(settings)} settings from {path}")
    return settings


def resolve_settings(app_config, file_values=None, overrides=None):
    """
    Merge settings by precedence

    command-line flag > QACONV_WORKERS (workers only) > config file > Config default

    Args:
        app_config: mapping with the Config attributes (e.g. Flask app.config)
        file_values: validated dict from load_config_file
        overrides: dict of command-line values, None entries ignored

    Returns:
        dict: every SETTING_KEYS key resolved to a value
    """
    settings = {key: app_config.get(attr) for key, attr in SETTING_KEYS.items()}
    settings.update(file_values or {})
    if app_config.get('WORKERS_OVERRIDE') is not None:
        settings['workers'] = app_config['WORKERS_OVERRIDE']
    settings.update({key: value for key, value in (overrides or {}).items() if value is not None})
    if settings['k2'] > settings['k1']:
        raise ConfigError(f"k2 ({settings['k2']}) must not exceed k1 ({settings['k1']})")
    return settings


def tlift_params(settings):
    return TLiftParams(
        tau=settings['tau'],
        sigma=settings['sigma'],
        k=settings['k'],
        alpha=settings['alpha'],
        exclude_same_camera=settings['exclude_same_camera']
    )


def rerank_params(settings):
    return RerankParams(k1=settings['k1'], k2=settings['k2'], lambda_value=settings['rerank_lambda'])


def train_config(settings):
    return TrainConfig(
        batch_size=settings['batch_size'],
        gamma=settings['gamma'],
        lr=settings['lr'],
        lr_decay=settings['lr_decay'],
        decay_epoch=settings['decay_epoch'],
        epochs=settings['epochs'],
        update_mode=settings['update_mode'],
        ema_decay=settings['ema_decay'],
        kernel_size=settings['kernel_size'],
        augment=settings['augment'],
        momentum=settings['momentum']
    )
