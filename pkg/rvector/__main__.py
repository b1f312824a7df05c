"""python -m rvector"""
import sys

from .cli import main

sys.exit(main())
