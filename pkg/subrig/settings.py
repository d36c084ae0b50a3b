"""
Django settings for the subrig project.

The project has no web surface and no database: Django provides the
configuration layer, the app registry and the management command runner.
Numerical defaults live in the ``SUBRIG`` dict below and can be overridden
with ``SUBRIG_<NAME>`` environment variables.
"""

import os
from pathlib import Path

import sentry_sdk
from ddtrace import tracer
from dotenv import load_dotenv

load_dotenv()

ENV = os.getenv("ENV")
VERSION = os.getenv("VERSION", "0.1.0")

sentry_sdk.init(
    dsn=os.getenv("SENTRY_DSN"),
    environment=ENV,
    release=VERSION,
)

tracer.configure(
    enabled=os.getenv("DD_TRACE_ENABLED", "false").lower() in ("1", "true", "yes")
)

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv("DJANGO_SECRET_KEY", "subrig-has-no-sessions")

DEBUG = ENV == "dev"

# Application definition

INSTALLED_APPS = [
    "geometry",
    "extremals",
    "mechanics",
    "scenarios",
]

DATABASES = {}

# Logging

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "{asctime} {levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "root": {
        "handlers": ["console"],
        "level": os.getenv("SUBRIG_LOG_LEVEL", "WARNING"),
    },
}

# Numerics


def _float_env(name: str, default: float) -> float:
    raw = os.getenv(f"SUBRIG_{name}")
    return float(raw) if raw else default


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(f"SUBRIG_{name}")
    return int(raw) if raw else default


SUBRIG = {
    # Certificate-grade integration.
    "RTOL": _float_env("RTOL", 1e-10),
    "ATOL": _float_env("ATOL", 1e-12),
    # Exploratory integration.
    "EXPLORATORY_RTOL": _float_env("EXPLORATORY_RTOL", 1e-6),
    "EXPLORATORY_ATOL": _float_env("EXPLORATORY_ATOL", 1e-9),
    # sigma / sigma_max at or below this counts as zero.
    "RANK_TOL": _float_env("RANK_TOL", 1e-8),
    # Transport residual an abnormal certificate must meet.
    "CERTIFICATE_TOL": _float_env("CERTIFICATE_TOL", 1e-7),
    "RESTRICTION_TOL": _float_env("RESTRICTION_TOL", 1e-10),
    "MEMBERSHIP_TOL": _float_env("MEMBERSHIP_TOL", 1e-10),
    "PROBE_COUNT": _int_env("PROBE_COUNT", 64),
    "CHEBYSHEV_SAMPLES": _int_env("CHEBYSHEV_SAMPLES", 32),
    "MAX_STEPS": _int_env("MAX_STEPS", 200000),
    "DET_FLOOR": _float_env("DET_FLOOR", 1e-12),
}
