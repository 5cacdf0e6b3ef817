"""Build paired decompiled/source function datasets from C repositories."""

__version__ = "0.1.0"

from .config import PipelineConfig, load_config_file  # noqa: E402
from .mapping import MappingPolicy, NameNormalization, map_functions, normalize_name  # noqa: E402
from .pipeline import RunReport, run_pipeline  # noqa: E402

__all__ = [
    "__version__", "PipelineConfig", "load_config_file", "MappingPolicy", "NameNormalization",
    "map_functions", "normalize_name", "RunReport", "run_pipeline",
]
