"""
FOA stream learner: command-line entry point.

Dispatches to the subcommands in cli/commands and exits with their code
(0 success, 2 invalid configuration, 1 any other error).
See ARCHITECTURE.md for the full project structure.
"""

import sys

from cli import main

if __name__ == "__main__":
    sys.exit(main())
