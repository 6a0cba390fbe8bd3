from .custom_logger import get_logger

GLOBAL_LOGGER = get_logger("congestion_mfc")

__all__ = ["GLOBAL_LOGGER"]
