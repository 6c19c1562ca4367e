"""
Custom exceptions for the anchordiff package.

This module defines all custom exceptions used throughout the package
to provide clear error handling and debugging information.
"""

from typing import Optional, Any


class AnchorDiffError(Exception):
    """
    Base exception class for all anchordiff-related errors.

    This is the parent class for all custom exceptions in the package.
    """

    def __init__(self, message: str, error_code: Optional[str] = None, details: Optional[Any] = None):
        """
        Initialize the base exception.

        Args:
            message (str): Human-readable error message.
            error_code (str, optional): Machine-readable error code.
            details (Any, optional): Additional error details.
        """
        super().__init__(message)
        self.message = message
        self.error_code = error_code
        self.details = details

    def __str__(self) -> str:
        """Return string representation of the error."""
        if self.error_code:
            return f"[{self.error_code}] {self.message}"
        return self.message


class ShapeError(AnchorDiffError):
    """
    Exception raised for dimension and shape mismatches.

    This includes incompatible matrix products, embeddings of different
    sizes and frames that the encoder stride does not divide.
    """
    pass


class ValidationError(AnchorDiffError):
    """
    Exception raised for invalid input data.

    This includes empty videos, mismatched frame counts and
    non-finite tensor values.
    """
    pass


class ConfigurationError(AnchorDiffError):
    """
    Exception raised for configuration-related errors.

    This includes invalid settings, unknown keys in config files,
    or incompatible options.
    """
    pass


class FileError(AnchorDiffError):
    """
    Exception raised for file operation errors.

    This includes missing files, corrupt image headers and
    unreadable checkpoints.
    """
    pass


class TrainingError(AnchorDiffError):
    """Exception raised when an optimisation run cannot continue."""
    pass


class EvaluationError(AnchorDiffError):
    """
    Exception raised when a quantity cannot be evaluated.

    This includes non-finite objective values during gradient checks
    and metrics requested over an empty dataset.
    """
    pass


# Error code constants
class ErrorCodes:
    """Constants for error codes used throughout the package."""

    # Shape errors
    DIMENSION_MISMATCH = "SHAPE_001"
    KERNEL_TOO_LARGE = "SHAPE_002"
    STRIDE_INDIVISIBLE = "SHAPE_003"

    # Validation errors
    INVALID_INPUT_FORMAT = "VAL_001"
    INVALID_INPUT_SIZE = "VAL_002"
    NON_FINITE_VALUE = "VAL_003"
    COUNT_MISMATCH = "VAL_004"

    # Configuration errors
    INVALID_CONFIGURATION = "CFG_001"
    UNKNOWN_CONFIG_KEY = "CFG_002"
    INCOMPATIBLE_OPTIONS = "CFG_003"

    # File errors
    FILE_NOT_FOUND = "FILE_001"
    FILE_CORRUPTED = "FILE_002"
    INVALID_FILE_FORMAT = "FILE_003"
    UNSUPPORTED_VERSION = "FILE_004"

    # Training errors
    NON_FINITE_LOSS = "TRAIN_001"

    # Evaluation errors
    NON_FINITE_OBJECTIVE = "EVAL_001"
    EMPTY_DATASET = "EVAL_002"


# Errors the command line reports as bad input (exit code 1).
INPUT_ERRORS = (ShapeError, ValidationError, ConfigurationError, FileError)


def create_error(error_type: str, message: str, error_code: Optional[str] = None,
                 details: Optional[Any] = None) -> AnchorDiffError:
    """
    Factory function to create appropriate error instances.

    Args:
        error_type (str): Type of error to create.
        message (str): Error message.
        error_code (str, optional): Error code.
        details (Any, optional): Additional details.

    Returns:
        AnchorDiffError: Appropriate error instance.

    Raises:
        ValueError: If error_type is not recognized.
    """
    error_classes = {
        "shape": ShapeError,
        "validation": ValidationError,
        "configuration": ConfigurationError,
        "file": FileError,
        "training": TrainingError,
        "evaluation": EvaluationError,
    }

    error_class = error_classes.get(error_type.lower())
    if not error_class:
        raise ValueError(f"Unknown error type: {error_type}")

    return error_class(message, error_code, details)
