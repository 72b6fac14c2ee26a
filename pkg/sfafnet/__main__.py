#!/usr/bin/env python3
"""
sfafnet entry point for running as a module.
"""

from sfafnet.cli import main

if __name__ == "__main__":
    main()
