"""
Command-line entry point for the QAConv pipeline

    python manage.py match --query q.qfmp --gallery g.qfmp --head head.qhed --out qg.qsim
    python manage.py pipeline --help
"""
import os

from dotenv import load_dotenv
from flask.cli import FlaskGroup

from qaconv import create_app

load_dotenv()


def _create_app():
    return create_app(os.getenv('QACONV_ENV', 'development'))


cli = FlaskGroup(create_app=_create_app, help="QAConv matching, re-ranking, temporal lifting and evaluation")

if __name__ == '__main__':
    cli()
