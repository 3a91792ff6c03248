import os
import sys
import logging
from pathlib import Path

import structlog
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class RuntimeEnvironment:
    """
    Singleton holding the process-wide runtime settings: worker thread cap,
    log level and default output directory. Ensures structlog is configured
    exactly once and gives services one place to ask for the worker count.
    """
    _instance = None
    _configured = False

    DEFAULT_THREADS = 1
    DEFAULT_LOG_LEVEL = "INFO"
    DEFAULT_OUTPUT_DIR = "runs"

    def __new__(cls):
        """
        Ensures that only one instance of the RuntimeEnvironment is created.
        """
        if cls._instance is None:
            cls._instance = super(RuntimeEnvironment, cls).__new__(cls)
        return cls._instance

    def __init__(self):
        """
        Reads the environment and configures logging if not done already.
        """
        if not self._configured:
            self.configure()

    def configure(self, threads: int | None = None, log_level: str | None = None):
        """
        Resolves settings with the precedence explicit argument > environment
        variable > default.

        Args:
            threads: worker cap passed on the command line (--threads).
            log_level: level name overriding HF2D_LOG_LEVEL.
        """
        env_threads = os.getenv("HF2D_THREADS")
        if threads is not None:
            resolved = threads
        elif env_threads:
            try:
                resolved = int(env_threads)
            except ValueError:
                raise ValueError(f"HF2D_THREADS must be an integer, got {env_threads!r}")
        else:
            resolved = self.DEFAULT_THREADS
        if resolved < 1:
            raise ValueError("thread count must be at least 1")
        self.threads = resolved

        self.log_level = (log_level or os.getenv("HF2D_LOG_LEVEL") or self.DEFAULT_LOG_LEVEL).upper()
        self.output_dir = Path(os.getenv("HF2D_OUTPUT_DIR") or self.DEFAULT_OUTPUT_DIR)
        self._configure_logging()
        RuntimeEnvironment._configured = True

    def _configure_logging(self):
        """
        Key-value structlog output on stderr; artifacts never see log lines.
        """
        level = logging.getLevelName(self.log_level)
        if not isinstance(level, int):
            level = logging.INFO
        structlog.configure(
            processors=[
                structlog.processors.add_log_level,
                structlog.processors.StackInfoRenderer(),
                structlog.dev.ConsoleRenderer(colors=False),
            ],
            wrapper_class=structlog.make_filtering_bound_logger(level),
            logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
            cache_logger_on_first_use=False,
        )

    @property
    def workers(self) -> int:
        """Worker count handed to scipy.fft and the scan loops."""
        return self.threads


# Create a single, globally accessible instance of the runtime environment
runtime_env = RuntimeEnvironment()
