"""Entry point for `python -m semantic_loss`."""

from semantic_loss.main import cli

if __name__ == "__main__":
    cli()
