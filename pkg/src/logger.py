"""
Structured logging for allocation solvers, fixed-point iterations and experiments.
"""
import json
import sys
from datetime import datetime
from typing import Any, Dict, List, Optional
from enum import Enum


class LogLevel(Enum):
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"


class AllocLogger:
    """Logger for solver runs: keeps every entry in memory and echoes to stderr."""

    def __init__(self, environment: str = "development", echo: bool = True):
        self.environment = environment
        self.echo = echo
        self.logs: List[Dict[str, Any]] = []

    def _create_log_entry(self, level: LogLevel, message: str, extra_data: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Create a standardized log entry."""
        entry = {
            "timestamp": datetime.utcnow().isoformat(),
            "level": level.value,
            "message": message,
            "environment": self.environment
        }

        if extra_data:
            entry["data"] = extra_data

        return entry

    def _emit(self, level: LogLevel, message: str, extra_data: Optional[Dict[str, Any]], show_data: bool):
        if not self.echo:
            return
        print(f"[{level.value}] {message}", file=sys.stderr)
        if extra_data and show_data:
            print(f"  Data: {json.dumps(extra_data, indent=2, default=str)}", file=sys.stderr)

    def debug(self, message: str, extra_data: Optional[Dict[str, Any]] = None):
        """Log debug information."""
        self.logs.append(self._create_log_entry(LogLevel.DEBUG, message, extra_data))
        if self.environment == "development":
            self._emit(LogLevel.DEBUG, message, extra_data, True)

    def info(self, message: str, extra_data: Optional[Dict[str, Any]] = None):
        """Log general information."""
        self.logs.append(self._create_log_entry(LogLevel.INFO, message, extra_data))
        self._emit(LogLevel.INFO, message, extra_data, self.environment == "development")

    def warning(self, message: str, extra_data: Optional[Dict[str, Any]] = None):
        """Log warning information."""
        self.logs.append(self._create_log_entry(LogLevel.WARNING, message, extra_data))
        self._emit(LogLevel.WARNING, message, extra_data, True)

    def error(self, message: str, extra_data: Optional[Dict[str, Any]] = None):
        """Log error information."""
        self.logs.append(self._create_log_entry(LogLevel.ERROR, message, extra_data))
        self._emit(LogLevel.ERROR, message, extra_data, True)

    # ------------------------------------------------------------------
    # Iteration helpers
    # ------------------------------------------------------------------

    def log_sweep(self, solver: str, sweep: int, residual: float):
        """Log one sweep of a fixed-point iteration."""
        self.debug(f"{solver} sweep {sweep}", {"residual": residual})

    def log_fixed_point(self, solver: str, sweeps: int, residual: float, extra_data: Optional[Dict[str, Any]] = None):
        """Log a converged (or abandoned) fixed-point iteration."""
        data = {"sweeps": sweeps, "residual": residual}
        if extra_data:
            data.update(extra_data)
        self.info(f"{solver} finished after {sweeps} sweeps", data)

    def log_bisection_step(self, tau: float, value: float, below: bool):
        """Log one evaluation of the threshold predicate."""
        self.debug("Threshold step", {"tau": tau, "value": value, "below_capacity": below})

    def log_trial(self, experiment: str, trial: int, value: float, seed: int):
        """Log the outcome of one simulation trial."""
        self.debug(f"{experiment} trial {trial}", {"value": value, "seed": seed})

    def log_error_with_context(self, error: Exception, context: str, extra_data: Optional[Dict[str, Any]] = None):
        """Log an error with additional context."""
        error_data = {
            "error_type": type(error).__name__,
            "error_message": str(error),
            "context": context
        }

        if extra_data:
            error_data.update(extra_data)

        self.error(f"Error occurred: {str(error)}", error_data)

    def get_processing_summary(self) -> str:
        """Get a summary of all logs for this session."""
        if not self.logs:
            return "No logs recorded."

        summary = f"Run completed with {len(self.logs)} log entries:\n"

        for log in self.logs:
            timestamp = log["timestamp"].split("T")[1][:8]
            summary += f"[{timestamp}] {log['level']}: {log['message']}\n"

        return summary

    def export_logs(self) -> str:
        """Export all logs as JSON string."""
        return json.dumps(self.logs, indent=2, default=str)
