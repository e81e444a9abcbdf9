#!/usr/bin/env python
"""Entry point for the corner SGD commands: theory, train, phase, contour, fit and test."""
import os
import sys


def main():
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "cornersgd.settings")
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError("Django is not installed; run pip install -r requirements.txt first.") from exc
    execute_from_command_line(sys.argv)


if __name__ == "__main__":
    main()
