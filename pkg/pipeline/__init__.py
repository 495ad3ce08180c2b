"""Pipeline driver: run configuration, bounded-queue runner and subcommands."""
