#!/usr/bin/env python
"""Command-line utility for the DVBE experiments."""
import os
import sys


def main():
    """Run a dvbe command."""
    os.environ.setdefault('DVBE_SETTINGS_MODULE', 'dvbe_lab.settings.local')
    try:
        from cli.commands import main as run
    except ImportError as exc:
        raise ImportError(
            "Couldn't import the dvbe packages. Are the requirements installed and "
            "is lab/ on your PYTHONPATH? Did you forget to activate a virtual "
            "environment?"
        ) from exc
    sys.exit(run(sys.argv[1:]))


if __name__ == '__main__':
    main()
