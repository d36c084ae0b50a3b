#!/usr/bin/env python
"""Development entry point; same commands as ``python -m subrig``."""
from subrig.__main__ import main

if __name__ == "__main__":
    main()
