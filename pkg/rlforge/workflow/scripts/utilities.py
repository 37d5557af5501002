#!/usr/bin/env python
# -*- coding: utf-8 -*-

__license__ = "MIT"

import argparse
import copy
import json
import os
import sys

import numpy as np
import yaml

WARNING = "\x1b[33m"
FAIL = "\x1b[31m"
END = "\033[0m"

is_tty = sys.stderr.isatty()

# exit codes of the command line interface
EXIT_SUCCESS = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_EARLY_STOP = 3

# the splitmix64 constants
MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

# mappings that accept arbitrary keys when merging a user config over the defaults
FREE_FORM_KEYS = {"env.overrides"}


class RLForgeError(Exception):
    pass


class ValidationError(RLForgeError):
    pass


class StructureMismatch(RLForgeError):
    pass


class IndexOutOfRange(RLForgeError, IndexError):
    pass


class MissingField(RLForgeError, KeyError):
    pass


class StepAfterDone(RLForgeError):
    pass


class EnvInFlight(RLForgeError):
    pass


class UnknownEnvId(RLForgeError):
    pass


class EmptyBuffer(RLForgeError):
    pass


class InvalidIndex(RLForgeError, IndexError):
    pass


class LengthMismatch(RLForgeError):
    pass


class DiscreteSpaceError(RLForgeError):
    pass


class TargetUnreachable(RLForgeError):
    pass


class ConfigMismatch(RLForgeError):
    pass


class FormatError(RLForgeError):
    pass


class FormatVersionMismatch(FormatError):
    pass


class ChecksumMismatch(FormatError):
    pass


class StorageError(RLForgeError):
    pass


class ArgumentCustomFormatter(argparse.HelpFormatter):
    """
    Custom formatter for argparse
    """

    def _get_help_string(self, action):
        message = action.help
        if "%(default)" not in action.help:
            if action.default is not argparse.SUPPRESS and action.default is not None:
                defaulting_nargs = [argparse.OPTIONAL, argparse.ZERO_OR_MORE]
                if action.option_strings or action.nargs in defaulting_nargs:
                    message += " (default: %(default)s)"
        return message


class WritablePathType(object):
    """
    Is this a writable path.
    """

    def __call__(self, value):
        from pathlib import Path

        try:
            path = Path(value).expanduser()
            path.mkdir(parents=True, exist_ok=True)
            return value
        except Exception:
            raise argparse.ArgumentTypeError(f"'{value}' is not a valid writable path")


class ReadableFileType(object):
    """
    Is this an existing, non-empty file
    """

    def __call__(self, value):
        if not os.path.isfile(value):
            raise argparse.ArgumentTypeError(f"'{value}' does not exist")

        if os.stat(value).st_size == 0:
            raise argparse.ArgumentTypeError(f"'{value}' is empty")

        return value


class PositiveIntType(object):
    """
    Is this a positive integer
    """

    def __call__(self, value):
        try:
            if not int(value) > 0:
                raise ValueError()
        except ValueError:
            raise argparse.ArgumentTypeError(f"'{value}' is not a valid positive integer")

        return int(value)


class RangeType(object):
    """
    Is this a valid instance of `_type` and within the range [lower, upper]
    """

    def __init__(self, _type, lower, upper):
        self.type = _type
        self.lower = lower
        self.upper = upper

    def __call__(self, value):
        try:
            if not (self.lower <= self.type(value) <= self.upper):
                raise ValueError()
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"'{value}' is not a valid {self.type.__name__} in the range ({self.lower}, {self.upper})"
            )

        return self.type(value)


class FloatRangeType(RangeType):
    """
    Is this a float() within the given range
    """

    def __init__(self, lower, upper):
        super().__init__(float, lower, upper)


class IntRangeType(RangeType):
    """
    Is this an int() within the given range
    """

    def __init__(self, lower, upper):
        super().__init__(int, lower, upper)


class EnvIdType(object):
    """
    Is this a valid environment id (e.g. `chain:6+timelimit:20`)
    """

    def __call__(self, value):
        # import locally to avoid cyclic import issues
        from rlforge.workflow.scripts.envs import parse_env_id

        try:
            parse_env_id(value)
        except ValidationError as error:
            raise argparse.ArgumentTypeError(f"'{value}' is not a valid environment id\n {error}")

        return value


class SeedStream(object):
    """
    Counter-based splitmix64 stream. The n-th output only depends on (seed, n), so the stream can be
    checkpointed by its counter alone.
    """

    def __init__(self, seed, counter=0):
        self.seed = int(seed) & MASK64
        self.counter = int(counter)

    def next(self):
        self.counter += 1
        return mix64((self.seed + self.counter * GOLDEN_GAMMA) & MASK64)

    def uniform(self):
        """A float in [0, 1) with 53 random bits."""
        return (self.next() >> 11) * (1.0 / (1 << 53))

    def generator(self):
        """A numpy generator seeded from the next value of the stream."""
        return np.random.default_rng(self.next())

    def spawn(self, key):
        """An independent stream derived from this stream's seed and `key`."""
        return SeedStream(splitmix64(self.seed ^ mix64(int(key) & MASK64)))

    def state_dict(self):
        return {"seed": self.seed, "counter": self.counter}

    @classmethod
    def from_state_dict(cls, state):
        return cls(state["seed"], state["counter"])


def mix64(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def splitmix64(state):
    """One splitmix64 step: advance `state` by the golden gamma and mix."""
    return mix64((int(state) + GOLDEN_GAMMA) & MASK64)


def load_yaml(filename):
    try:
        with open(filename) as fin:
            return yaml.safe_load(fin) or {}
    except FileNotFoundError:
        raise ValidationError(f"Config file '{filename}' does not exist")
    except yaml.YAMLError as error:
        raise ValidationError(f"Config file '{filename}' is not valid YAML\n {error}")


def merge_config(base, update, prefix=""):
    """
    Recursively merge `update` over `base`, rejecting keys that the defaults do not define.
    """
    merged = copy.deepcopy(base)

    for key, value in (update or {}).items():
        path = f"{prefix}{key}"

        if prefix.rstrip(".") in FREE_FORM_KEYS:
            merged[key] = value
            continue

        if key not in merged:
            raise ValidationError(f"Unknown config key '{path}'")

        if isinstance(merged[key], dict):
            if not isinstance(value, dict):
                raise ValidationError(f"Config key '{path}' must be a mapping")
            merged[key] = merge_config(merged[key], value, prefix=f"{path}.")
        else:
            merged[key] = value

    return merged


def parse_override(text):
    """
    Turn `section.key=value` into a nested dict, parsing the value as a YAML scalar.
    """
    if "=" not in text:
        raise ValidationError(f"'{text}' is not a valid override, expected --section.key=value")

    path, raw = text.lstrip("-").split("=", 1)
    keys = [key.replace("-", "_") for key in path.split(".")]

    if not all(keys):
        raise ValidationError(f"'{text}' is not a valid override path")

    try:
        value = yaml.safe_load(raw) if raw != "" else None
    except yaml.YAMLError:
        value = raw

    # YAML 1.1 reads exponents without a dot (1e-3) as strings
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            pass

    override = value
    for key in reversed(keys):
        override = {key: override}

    return override


def canonical_json(config):
    return json.dumps(config, sort_keys=True, indent=2)


def print_error(message, code=EXIT_CONFIG):
    """Function to print errors and exit"""
    message = f"rlforge: error: {message}"
    print(f"{FAIL}{message}{END}" if is_tty else message, file=sys.stderr)
    exit(code)


def print_warning(message):
    """Function to print warnings"""
    message = f"WARNING: {message}"
    print(f"{WARNING}{message}{END}" if is_tty else message, file=sys.stderr)


def print_info(message, verbose=True):
    """Function to print progress messages"""
    if verbose:
        print(message, file=sys.stderr)
