"""Synthetic transaction data from a known generative model.

Writes raw-schema CSV files (exact timestamps, no minute rounding) so the
whole pipeline can be exercised, and parameter recovery checked, without
proprietary exchange data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date, datetime, time as dtime, timedelta
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .fitting import FittedModel
from .ingest import DEFAULT_TRADING_END, default_trading_begin
from .models import ModelSpec, feasible_on_grid
from .scoring import minute_grid
from .simulate import simulate_one

__all__ = ["synth_generate"]


def _cell_rng(seed: int, day_index: int, product: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(day_index, product))
    )


def synth_generate(
    spec: ModelSpec,
    theta,
    days: int,
    seed: int,
    out_path: str | Path,
    products: tuple[int, ...] = (12,),
    start_date: date = date(2017, 9, 3),
    gen_start: float | None = None,
    gen_end: float = DEFAULT_TRADING_END,
    trading_begin: dict[int, float] | None = None,
) -> Path:
    """Simulate ``days`` consecutive delivery days and write them as CSV.

    Arrivals for each (day, product) cell are generated over
    ``[gen_start, gen_end)`` (the product's trading begin by default) from
    the model ``spec`` at ``theta``, then converted to exact timestamps.
    ``days = 0`` writes just the header.
    """
    theta = np.asarray(theta, dtype=float)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    begins = {}
    for product in products:
        if gen_start is not None:
            begins[product] = gen_start
        elif trading_begin is not None:
            begins[product] = trading_begin[product]
        else:
            begins[product] = default_trading_begin(product)
        if not begins[product] < gen_end:
            raise ParameterError(
                f"generation window empty for product {product}: "
                f"[{begins[product]}, {gen_end})"
            )
        grid = minute_grid(begins[product], gen_end)
        if not feasible_on_grid(spec, theta, grid):
            raise ParameterError(
                f"{spec.name}: theta is infeasible on [{begins[product]}, {gen_end})"
            )

    with out_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["delivery_date", "product", "timestamp", "market_area", "volume",
             "price", "transaction_id"]
        )
        for day_index in range(days):
            day = start_date + timedelta(days=day_index)
            for product in products:
                a = begins[product]
                fitted = FittedModel(
                    spec=spec,
                    theta=theta,
                    log_likelihood=None,
                    window=(a, gen_end),
                )
                rng = _cell_rng(seed, day_index, product)
                arrivals = simulate_one(fitted, a, a, gen_end, rng)
                start = datetime.combine(day, dtime(hour=product - 1))
                prev = None
                for i, t in enumerate(arrivals):
                    ts = start + timedelta(hours=float(t))
                    if prev is not None and ts <= prev:
                        ts = prev + timedelta(microseconds=1)
                    prev = ts
                    writer.writerow(
                        [
                            day.isoformat(),
                            product,
                            ts.isoformat(sep=" "),
                            "DE",
                            "1.0",
                            "40.0",
                            f"{day.isoformat()}-{product}-{i}",
                        ]
                    )
    return out_path
