import sys
import traceback
from datetime import datetime
from typing import Any, Dict, Optional, cast


class MeanFieldControlException(Exception):
    def __init__(self, error_message, error_details: Optional[object] = None):
        # Normalize message
        norm_msg = str(error_message)

        # Resolve exc_info (supports sys module, exception object, or current context)
        exc_type = exc_value = exc_tb = None
        if error_details is None:
            exc_type, exc_value, exc_tb = sys.exc_info()
        else:
            if hasattr(error_details, "exc_info"):  # e.g., sys
                exc_info_obj = cast(sys, error_details)
                exc_type, exc_value, exc_tb = exc_info_obj.exc_info()
            elif isinstance(error_details, BaseException):
                exc_type, exc_value, exc_tb = (
                    type(error_details),
                    error_details,
                    error_details.__traceback__,
                )
            else:
                exc_type, exc_value, exc_tb = sys.exc_info()

        # Walk to the deepest traceback frame
        last_tb = exc_tb
        while last_tb and last_tb.tb_next:
            last_tb = last_tb.tb_next

        self.file_name = last_tb.tb_frame.f_code.co_filename if last_tb else "<unknown>"
        self.lineno = last_tb.tb_lineno if last_tb else -1
        self.error_message = norm_msg

        # Readable timestamp - Example: 21_Nov_2025_05:15_PM
        self.timestamp = datetime.now().strftime("%d_%b_%Y_%I:%M_%p")

        # Full pretty traceback
        if exc_type and exc_tb:
            self.traceback_str = "".join(
                traceback.format_exception(exc_type, exc_value, exc_tb)
            )
        else:
            self.traceback_str = ""

        super().__init__(self.__str__())

    def __str__(self):
        base = (
            f"[{self.timestamp}] "
            f"Error in [{self.file_name}] at line [{self.lineno}] | "
            f"Message: {self.error_message}"
        )
        if self.traceback_str:
            return f"{base}\nTraceback:\n{self.traceback_str}"
        return base

    def __repr__(self):
        return (
            f"{type(self).__name__}(file={self.file_name!r}, "
            f"line={self.lineno}, message={self.error_message!r}, "
            f"timestamp={self.timestamp!r})"
        )


class ModelDomainError(MeanFieldControlException, ValueError):
    """Density outside the domain of H, L or L~."""


class UnboundedModelError(MeanFieldControlException):
    """psi bracket grew past mu_max: the cost violates its growth assumption."""


class NumericalConvergenceError(MeanFieldControlException):
    def __init__(
        self,
        error_message,
        diagnostics: Optional[Dict[str, Any]] = None,
        error_details: Optional[object] = None,
    ):
        self.diagnostics = dict(diagnostics or {})
        if self.diagnostics:
            pairs = " | ".join(f"{k}={v}" for k, v in self.diagnostics.items())
            error_message = f"{error_message} | {pairs}"
        super().__init__(error_message, error_details)


class GridMismatchError(MeanFieldControlException, ValueError):
    pass


class InfeasibleDualError(MeanFieldControlException):
    pass


class ConfigError(MeanFieldControlException):
    def __init__(
        self,
        error_message,
        key: Optional[str] = None,
        line: Optional[int] = None,
        error_details: Optional[object] = None,
    ):
        self.key = key
        self.line = line
        where = []
        if key:
            where.append(f"key={key}")
        if line is not None:
            where.append(f"line={line}")
        if where:
            error_message = f"{error_message} | " + " | ".join(where)
        super().__init__(error_message, error_details)


class AuditFailedError(MeanFieldControlException):
    def __init__(self, error_message, report: Any = None, error_details: Optional[object] = None):
        self.report = report
        super().__init__(error_message, error_details)


class FieldFormatError(MeanFieldControlException, ValueError):
    pass


class InsufficientParticlesError(MeanFieldControlException, ValueError):
    pass
