import logging
import os

import pandas as pd

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def write_csv(df: pd.DataFrame, path: str, schema: str) -> str:
    """Write `df` behind a versioned schema comment line."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# dpstream {schema} v{SCHEMA_VERSION}\n")
        df.to_csv(f, index=False, lineterminator="\n")
    logger.info(f"Wrote {len(df)} rows of {schema} to {path}")
    return path


def read_csv(path: str) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")
