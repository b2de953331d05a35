"""One-shot converter from the legacy serialized citation-network benchmark
distribution into the canonical dataset directory format."""

from .convert import TABLE1, ConversionError, ConversionSummary, convert
from .legacy import RawBenchmark, RawBenchmarkError, load_raw

__version__ = "0.1.0"

__all__ = [
    "TABLE1",
    "ConversionError",
    "ConversionSummary",
    "RawBenchmark",
    "RawBenchmarkError",
    "convert",
    "load_raw",
]
