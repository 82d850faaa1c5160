"""Just a standard place to stash the logging config"""
import logging

LOG_LEVELS = ["CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG"]
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def set_log_level(logger, log_level):
    """Set the logging level according to the user-supplied Click.choice() values"""
    if log_level not in LOG_LEVELS:
        log_level = "INFO"
    logger.setLevel(getattr(logging, log_level))


def configure_logging(log_level="INFO"):
    """
    Attach a stream handler to the package logger. Only the CLI entry point calls this;
    library users keep the NullHandler installed by the package.

    :param log_level: One of CRITICAL, ERROR, WARNING, INFO, or DEBUG
    """
    package_logger = logging.getLogger("blendshape_diffusion")
    if not any(
        isinstance(handler, logging.StreamHandler)
        and not isinstance(handler, logging.NullHandler)
        for handler in package_logger.handlers
    ):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        package_logger.addHandler(handler)
    set_log_level(package_logger, log_level)
    return package_logger


class TrainingLog:
    """
    Tab-separated training log: one header line, then one row per logged step.
    Rows must arrive in increasing step order.
    """

    def __init__(self, path, fields):
        self.path = path
        self.fields = list(fields)
        self.last_step = None
        with open(self.path, "w", encoding="utf-8") as file_obj:
            file_obj.write("\t".join(["step", "wall_ms"] + self.fields) + "\n")

    def append(self, step, wall_ms, values):
        """Append one row. Missing fields raise KeyError."""
        if self.last_step is not None and step <= self.last_step:
            raise ValueError(f"Training log steps must increase: {step} after {self.last_step}")
        self.last_step = step
        row = [str(step), str(int(wall_ms))] + [repr(float(values[field])) for field in self.fields]
        with open(self.path, "a", encoding="utf-8") as file_obj:
            file_obj.write("\t".join(row) + "\n")
