"""Top-level entry point for running castellan as a module."""
from castellan.cli import cli

if __name__ == "__main__":
    cli()
