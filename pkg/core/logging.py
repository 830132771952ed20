import logging
import sys

from core.config import config


class Colors:
    """ANSI color codes for terminal output."""

    RESET = "\033[0m"
    BOLD = "\033[1m"

    CYAN = "\033[36m"
    WHITE = "\033[37m"

    BRIGHT_BLACK = "\033[90m"
    BRIGHT_RED = "\033[91m"
    BRIGHT_GREEN = "\033[92m"
    BRIGHT_YELLOW = "\033[93m"
    BRIGHT_MAGENTA = "\033[95m"
    BRIGHT_CYAN = "\033[96m"

    BG_RED = "\033[41m"


# Map string log levels to logging constants
LOG_LEVELS = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
    "CRITICAL": logging.CRITICAL,
}

LOG_FORMAT = "%(asctime)s │ %(levelname)-8s │ %(filename)s:%(lineno)d │ %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


class ColorfulFormatter(logging.Formatter):
    """Formatter that colours level, timestamp and source location."""

    LEVEL_COLORS = {
        logging.DEBUG: Colors.BRIGHT_CYAN,
        logging.INFO: Colors.BRIGHT_GREEN,
        logging.WARNING: Colors.BRIGHT_YELLOW,
        logging.ERROR: Colors.BRIGHT_RED,
        logging.CRITICAL: Colors.BOLD + Colors.BG_RED + Colors.WHITE,
    }

    LEVEL_ICONS = {
        logging.DEBUG: "·",
        logging.INFO: "▸",
        logging.WARNING: "!",
        logging.ERROR: "✗",
        logging.CRITICAL: "✗✗",
    }

    def __init__(self, fmt: str = None, datefmt: str = None, use_colors: bool = True):
        super().__init__(fmt, datefmt)
        self.use_colors = use_colors

    def format(self, record: logging.LogRecord) -> str:
        """Format the record, colouring only when attached to a terminal."""
        if not self.use_colors:
            return super().format(record)

        original_levelname = record.levelname
        level_color = self.LEVEL_COLORS.get(record.levelno, Colors.WHITE)
        level_icon = self.LEVEL_ICONS.get(record.levelno, "•")
        record.levelname = f"{level_color}{level_icon} {original_levelname}{Colors.RESET}"

        try:
            formatted = super().format(record)
        finally:
            record.levelname = original_levelname

        timestamp = self.formatTime(record, self.datefmt)
        location = f"{record.filename}:{record.lineno}"
        formatted = formatted.replace(
            timestamp, f"{Colors.BRIGHT_BLACK}{timestamp}{Colors.RESET}", 1
        )
        return formatted.replace(
            location,
            f"{Colors.CYAN}{record.filename}{Colors.RESET}"
            f"{Colors.BRIGHT_BLACK}:{Colors.RESET}"
            f"{Colors.BRIGHT_MAGENTA}{record.lineno}{Colors.RESET}",
            1,
        )


def setup_logging(level: str = None) -> logging.Logger:
    """
    Configure root logging for the command-line engine.

    The level defaults to LOG_LEVEL from settings. Colours and the start
    banner are only used when stdout is a terminal, so report files and
    piped output stay plain.
    """
    level_name = (level or config.LOG_LEVEL).upper()
    log_level = LOG_LEVELS.get(level_name, logging.INFO)
    use_colors = sys.stdout.isatty()

    formatter = ColorfulFormatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT, use_colors=use_colors)

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(formatter)
    console_handler.setLevel(log_level)

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)
    root_logger.handlers.clear()
    root_logger.addHandler(console_handler)

    if use_colors:
        print(
            f"{Colors.BOLD}{Colors.BRIGHT_CYAN}"
            f"── {config.APP_NAME} │ convex integration engine │ "
            f"log level {level_name} │ threads {config.WILDGRAD_THREADS} ──"
            f"{Colors.RESET}"
        )

    # Third-party loggers - reduce noise
    logging.getLogger("PIL").setLevel(logging.WARNING)

    return root_logger


def get_logger(name: str) -> logging.Logger:
    """Get a logger with the specified name."""
    return logging.getLogger(name)
