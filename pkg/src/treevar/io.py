"""CSV ingestion, transformation, and config parsing.

Panels arrive as two CSV files — endogenous variables and effect modifiers —
each with a header row and an ISO-date first column. Per-column transformations
(none, yoy, yoy_pct, diff, log) are applied before the two files are aligned on
dates; any gap, irregular spacing, or missing value is a named ingestion error.
"""

from __future__ import annotations

import dataclasses
import json
import warnings
from typing import Dict, Optional

import numpy as np
import pandas as pd

from .core import ConfigError, Dataset, IngestionError, ModelConfig, validate_config

__all__ = ["load_panel", "save_panel", "load_config", "apply_transform", "TRANSFORMS"]

TRANSFORMS = ("none", "yoy", "yoy_pct", "diff", "log")


def apply_transform(x: np.ndarray, name: str, yoy_lag: int = 4) -> np.ndarray:
    """Transform one series; the result keeps length but leads with NaNs.

    yoy is the log year-over-year growth 100*(log x_t - log x_{t-lag});
    yoy_pct is the arithmetic variant 100*(x_t/x_{t-lag} - 1).
    """
    x = np.asarray(x, dtype=float)
    out = np.full_like(x, np.nan)
    if name == "none":
        return x.copy()
    if name == "yoy":
        with np.errstate(invalid="ignore", divide="ignore"):
            out[yoy_lag:] = 100.0 * (np.log(x[yoy_lag:]) - np.log(x[:-yoy_lag]))
        return out
    if name == "yoy_pct":
        with np.errstate(invalid="ignore", divide="ignore"):
            out[yoy_lag:] = 100.0 * (x[yoy_lag:] / x[:-yoy_lag] - 1.0)
        return out
    if name == "diff":
        out[1:] = np.diff(x)
        return out
    if name == "log":
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.log(x)
    raise IngestionError(f"unknown transformation {name!r}; choose from {TRANSFORMS}")


def _read_csv(path: str) -> pd.DataFrame:
    try:
        df = pd.read_csv(path)
    except Exception as exc:
        raise IngestionError(f"cannot parse {path}: {exc}") from exc
    if df.shape[1] < 2:
        raise IngestionError(f"{path} needs a date column plus data columns")
    date_col = df.columns[0]
    try:
        dates = pd.to_datetime(df[date_col], format="ISO8601")
    except (ValueError, TypeError):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                dates = pd.to_datetime(df[date_col])
        except Exception as exc:
            raise IngestionError(f"{path}: first column must hold ISO dates") from exc
    if dates.duplicated().any():
        raise IngestionError(f"{path}: duplicated dates")
    df = df.drop(columns=[date_col])
    for c in df.columns:
        coerced = pd.to_numeric(df[c], errors="coerce")
        if (coerced.isna() & df[c].notna()).any():
            raise IngestionError(f"{path}: column {c} is not numeric")
        df[c] = coerced
    df.index = pd.DatetimeIndex(dates)
    if len(df) >= 3 and pd.infer_freq(df.index) is None:
        raise IngestionError(
            f"{path}: irregular date spacing (skipped or misaligned periods)")
    return df


def _trim_lead_nans(df: pd.DataFrame, path: str) -> pd.DataFrame:
    """Drop the NaN rows a differencing transform leads with; reject others."""
    valid = ~np.isnan(df.to_numpy(dtype=float))
    start = 0
    for j, c in enumerate(df.columns):
        col = valid[:, j]
        if not col.any():
            raise IngestionError(
                f"{path}: column {c} is entirely missing after transformation")
        first = int(col.argmax())
        if not col[first:].all():
            raise IngestionError(
                f"{path}: column {c} has missing values after transformation")
        start = max(start, first)
    return df.iloc[start:]


def load_panel(
    endog_path: str,
    modifiers_path: str,
    transforms: Optional[Dict[str, str]] = None,
    yoy_lag: int = 4,
) -> Dataset:
    """Read, transform, and align the endogenous and modifier CSVs.

    ``transforms`` maps column names (in either file) to a transformation name;
    unmapped columns pass through untransformed. Initial rows lost to
    differencing are dropped, the two files are aligned on the dates both
    retain, and the joint index must remain regularly spaced.

    Raises
    ------
    IngestionError
        On parse failures, unknown columns in ``transforms``, date
        misalignment or gaps, and missing values after transformation.
    """
    transforms = dict(transforms or {})
    endog = _read_csv(endog_path)
    mods = _read_csv(modifiers_path)
    known = set(endog.columns) | set(mods.columns)
    unknown = set(transforms) - known
    if unknown:
        raise IngestionError(f"transforms name unknown columns: {sorted(unknown)}")
    for df, path in ((endog, endog_path), (mods, modifiers_path)):
        for c in df.columns:
            df[c] = apply_transform(df[c].to_numpy(), transforms.get(c, "none"),
                                    yoy_lag=yoy_lag)
    endog = _trim_lead_nans(endog, endog_path)
    mods = _trim_lead_nans(mods, modifiers_path)
    common = endog.index.intersection(mods.index)
    if len(common) == 0:
        raise IngestionError("endogenous and modifier files share no dates")
    endog = endog.loc[common]
    mods = mods.loc[common]
    if len(common) >= 3 and pd.infer_freq(common) is None:
        raise IngestionError("aligned panel has irregular date spacing")
    dates = [d.date().isoformat() for d in common]
    return Dataset(
        Y=endog.to_numpy(dtype=float),
        Z=mods.to_numpy(dtype=float),
        variable_names=list(endog.columns),
        modifier_names=list(mods.columns),
        dates=dates,
    )


def save_panel(dataset: Dataset, endog_path: str, modifiers_path: str) -> None:
    """Write a Dataset back to the two-CSV layout load_panel reads."""
    pd.DataFrame(dataset.Y, index=pd.Index(dataset.dates, name="date"),
                 columns=dataset.variable_names).to_csv(endog_path)
    pd.DataFrame(dataset.Z, index=pd.Index(dataset.dates, name="date"),
                 columns=dataset.modifier_names).to_csv(modifiers_path)


def load_config(path: str) -> ModelConfig:
    """Parse a flat JSON config whose keys mirror ModelConfig's field names."""
    try:
        with open(path) as f:
            obj = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}")
    if not isinstance(obj, dict):
        raise ConfigError("config JSON must be an object")
    fields = {f.name for f in dataclasses.fields(ModelConfig)}
    unknown = set(obj) - fields
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return validate_config(ModelConfig(**obj))
