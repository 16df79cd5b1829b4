"""Allow `python -m pmm_lab`."""
from .cli import main

main()
