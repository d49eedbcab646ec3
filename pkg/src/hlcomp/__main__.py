"""
Allow hlcomp to be executable through `python -m hlcomp`.
"""
from .cli import cli

if __name__ == "__main__":
    cli()
