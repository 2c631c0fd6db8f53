import numpy as np
import pytest

from qaconv import create_app
from qaconv.utils import formats
from tests.factories import identity_head, random_maps


@pytest.fixture
def app():
    """Testing application; pytest-flask builds the client fixture from it"""
    return create_app('testing')


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_head():
    return identity_head(8)


@pytest.fixture
def store_files(tmp_path, rng):
    """10 query and 20 gallery maps of profile (4, 2, 2) plus a head, written to tmp_path"""
    paths = {
        'query': tmp_path / 'query.qfmp',
        'gallery': tmp_path / 'gallery.qfmp',
        'head': tmp_path / 'head.qhed'
    }
    formats.write_features(paths['query'], random_maps(rng, 10, 4, 2, 2))
    formats.write_features(paths['gallery'], random_maps(rng, 20, 4, 2, 2))
    formats.write_head(paths['head'], identity_head(8))
    return paths


def pytest_addoption(parser):
    parser.addoption('--run-slow', action='store_true', default=False, help='run full-scale timing tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: full-scale timing test, run with --run-slow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--run-slow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --run-slow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)
