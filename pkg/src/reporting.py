# src/reporting.py
import io
import os
import sys
import json
import math
import logging
from enum import Enum
from typing import Any, Dict, List, Optional

import pandas as pd

from config import config

logger = logging.getLogger(__name__)


def format_number(value: float) -> float:
    """Round to the configured number of significant digits"""
    if value is None or not math.isfinite(value):
        return value
    return float(f"{value:.{config.SIGNIFICANT_DIGITS}g}")


def normalise(value: Any) -> Any:
    """Make a report value JSON friendly with fixed float precision"""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, float):
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format_number(value)
    if isinstance(value, dict):
        return {str(k): normalise(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [normalise(v) for v in value]
    if hasattr(value, 'item'):
        return normalise(value.item())
    return value


def render_csv(rows: List[Dict[str, Any]], schema: str) -> str:
    """CSV text with a versioned schema line above the header"""
    frame = pd.DataFrame([{k: normalise(v) for k, v in row.items()} for row in rows])
    buffer = io.StringIO()
    buffer.write(f"# schema={schema}/v{config.SCHEMA_VERSION}\n")
    frame.to_csv(buffer, index=False, lineterminator="\n",
                 float_format=f"%.{config.SIGNIFICANT_DIGITS}g")
    return buffer.getvalue()


def render_json(rows: List[Dict[str, Any]], schema: str, resolved_config: Optional[Dict] = None,
                summary: Optional[Dict] = None) -> str:
    document = {
        'schema': f"{schema}/v{config.SCHEMA_VERSION}",
        'config': resolved_config,
        'rows': rows,
        'summary': summary,
    }
    return json.dumps(normalise(document), indent=2, sort_keys=True) + "\n"


def emit(text: str, out_path: Optional[str] = None):
    """Write a rendered report to out_path, or to stdout"""
    if out_path is None:
        sys.stdout.write(text)
        return

    directory = os.path.dirname(out_path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    with open(out_path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(text)

    logger.info(f"Saved report to {out_path}")
