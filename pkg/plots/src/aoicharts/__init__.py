"""Chart rendering for fleet-scheduling sweep CSVs."""

from .render import (CHART_KINDS, EXPECTED_COLUMNS, ChartError, ChartSpec,
                     RenderResult, render)

__all__ = ["CHART_KINDS", "EXPECTED_COLUMNS", "ChartError", "ChartSpec",
           "RenderResult", "render"]
