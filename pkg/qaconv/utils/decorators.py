import sys
from functools import wraps

import click
from flask import current_app, request
from marshmallow import ValidationError

from qaconv.utils.exceptions import ConfigError, QAConvError
from qaconv.utils.helpers import error_response, validate_request_json

# Exit code for failures outside the QAConvError hierarchy
EXIT_UNEXPECTED = 1


def handle_cli_errors(f):
    """
    Decorator mapping library errors to CLI exit codes

    QAConvError subclasses exit with their own code, marshmallow
    ValidationError exits like a ConfigError; anything else exits with 1.
    """
    @wraps(f)
    def decorated_function(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except QAConvError as e:
            current_app.logger.error(f"{e.code}: {e.message}")
            click.echo(f"Error [{e.code}]: {e.message}", err=True)
            if e.details:
                click.echo(f"Details: {e.details}", err=True)
            sys.exit(e.exit_code)
        except ValidationError as e:
            current_app.logger.error(f"{ConfigError.code}: {e.messages}")
            click.echo(f"Error [{ConfigError.code}]: {e.messages}", err=True)
            sys.exit(ConfigError.exit_code)
        except (click.ClickException, click.exceptions.Exit):
            raise
        except Exception as e:
            current_app.logger.exception(f"Unhandled exception in {f.__name__}: {str(e)}")
            click.echo(f"Error [INTERNAL_ERROR]: {str(e)}", err=True)
            sys.exit(EXIT_UNEXPECTED)

    return decorated_function


def validate_json_schema(schema_class):
    """
    Decorator to validate request JSON against a marshmallow schema

    Args:
        schema_class: Marshmallow schema class to validate against
    """
    def decorator(f):
        @wraps(f)
        def decorated_function(*args, **kwargs):
            if not request.is_json:
                return error_response("INVALID_REQUEST", "Request must be JSON", status_code=400)

            json_data = request.get_json(silent=True)
            if not json_data:
                return error_response("INVALID_REQUEST", "Request body is required", status_code=400)

            validated_data, errors = validate_request_json(schema_class(), json_data)
            if errors:
                return error_response(
                    "VALIDATION_ERROR",
                    "Request validation failed",
                    details=errors,
                    status_code=400
                )

            request.validated_data = validated_data
            return f(*args, **kwargs)

        return decorated_function
    return decorator


def handle_exceptions(f):
    """
    Decorator to handle exceptions and return standardized error responses
    """
    @wraps(f)
    def decorated_function(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except QAConvError as e:
            current_app.logger.warning(f"{e.code} in {f.__name__}: {e.message}")
            return error_response(e.code, e.message, details=e.details, status_code=400)
        except ValueError as e:
            return error_response("VALIDATION_ERROR", str(e), status_code=400)
        except Exception as e:
            current_app.logger.error(f"Unhandled exception in {f.__name__}: {str(e)}")
            return error_response("INTERNAL_ERROR", "An internal error occurred", status_code=500)

    return decorated_function
