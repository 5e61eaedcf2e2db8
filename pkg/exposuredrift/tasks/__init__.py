"""Batch jobs behind the command-line subcommands."""

__all__ = []
