"""
Helpers for interacting with python fire.
Subcommands take flags only, and every flag must name a RunConfig field,
so a mistyped flag fails before any work is done.
"""
import functools
import logging
import sys

import attr

from .errors import ConfigError, MMFSError


def only_allow_config_args(config_cls):
    """ Decorator for ``fn(**flags)`` subcommands: rejects positional
    arguments and flags which are not fields of ``config_cls``.
    """
    valid_names = get_config_fields(config_cls)

    def deco(function_to_decorate):
        @functools.wraps(function_to_decorate)
        def _return_wrapped(*args, **kwargs):
            if args:
                raise ConfigError(
                    f'positional arguments are not accepted: {list(args)}, '
                    f'use --flag value')
            for arg_name in kwargs:
                if arg_name not in valid_names:
                    raise ConfigError(
                        "Unknown argument seen '%s', expected: [%s]" %
                        (arg_name, ", ".join(sorted(valid_names))))
            return function_to_decorate(**kwargs)
        return _return_wrapped

    return deco


def get_config_fields(config_cls):
    valid_names = {a.name for a in attr.fields(config_cls)}
    valid_names.discard('subcommand')
    return valid_names


def exit_on_error(main_fn):
    """ Map package errors to process exit codes.
    """
    @functools.wraps(main_fn)
    def _return_wrapped(*args, **kwargs):
        try:
            return main_fn(*args, **kwargs)
        except MMFSError as e:
            logging.getLogger('mmfs').debug('failed', exc_info=True)
            print(f'error: {e}', file=sys.stderr)
            sys.exit(e.exit_code)
        except OSError as e:
            print(f'error: {e}', file=sys.stderr)
            sys.exit(1)
    return _return_wrapped
