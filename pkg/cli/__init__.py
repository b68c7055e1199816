"""Command-line front end: run configuration and subcommands."""
