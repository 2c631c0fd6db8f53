import logging

from flask import Flask

from qaconv.config.settings import config

__version__ = '1.0.0'


def create_app(config_name='development'):
    """Flask application factory"""
    app = Flask(__name__)

    # Load configuration
    config_class = config.get(config_name, config['default'])
    app.config.from_object(config_class)

    # Logging
    logging.basicConfig(
        level=app.config['LOG_LEVEL'],
        format='%(asctime)s %(levelname)s %(name)s: %(message)s'
    )
    app.logger.setLevel(app.config['LOG_LEVEL'])

    # Register blueprints
    from qaconv.api.health import health_bp
    from qaconv.api.scoring import scoring_bp

    app.register_blueprint(health_bp, url_prefix='/api')
    app.register_blueprint(scoring_bp, url_prefix='/api')

    # Error handlers
    from qaconv.api.errors import register_error_handlers
    register_error_handlers(app)

    # Pipeline commands
    from qaconv.cli.commands import register_commands
    register_commands(app)

    return app
