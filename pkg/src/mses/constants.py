"""Global constants for MSES.

This module defines application identifiers, the on-disk layout of experiment
results, numeric tolerances and the parameter defaults used across the
package.
"""

# --- Identity ---
APP_NAME = "mses"
"""str: The application name (also the logger name)."""

# --- Result layout ---
LOG_FILE_NAME = "mses.log"
"""str: The rotating log file written into every output directory."""

LOG_MAX_BYTES = 5 * 1024 * 1024
"""int: Max bytes for the log file before rotation."""

SUMMARY_FILE = "summary.csv"
"""str: Per (arm, problem) statistics of final objectives."""

EVENTS_FILE = "events.jsonl"
"""str: One JSON record per transfer / reconstruction event."""

COMPARISON_STEM = "comparison"
"""str: Stem of the `.csv` / `.txt` files written by `compare`."""

RUN_FILE_PATTERN = "run-*.csv"
"""str: Glob matching per-run convergence files."""

CSV_HEADER = "fe,best"
"""str: Header line of every convergence CSV."""

CSV_FLOAT_FORMAT = ".17g"
"""str: Format spec giving 17 significant digits (lossless for float64)."""

# --- Numerics ---
PINV_REL_TOL = 1e-10
"""float: Relative singular-value cutoff for pseudo-inverses."""

ORTHONORMAL_TOL = 1e-9
"""float: Tolerance on basis orthonormality and rotation orthogonality."""

DEDUP_TOL = 1e-12
"""float: L-infinity distance at or below which archive entries are duplicates."""

SIGNIFICANCE_LEVEL = 0.05
"""float: Two-sided level of the Wilcoxon verdicts (95% confidence)."""

EXACT_WILCOXON_MAX_N = 20
"""int: Largest combined sample size for which p-values are enumerated."""

# --- Algorithm defaults ---
DEFAULT_RUNS = 25
DEFAULT_MAX_FES = 3_000_000
DEFAULT_NP = {"de": 50, "llso": 500}
"""dict[str, int]: Population size per optimizer kind."""

DEFAULT_G_T = 1
DEFAULT_G_R = 10
DEFAULT_TRANSFER_FRACTION = 0.2
"""float: Q = P = ceil(0.2 * NP)."""

DEFAULT_ARCHIVE_FACTOR = 5
"""int: Archive capacity = 5 * NP."""

DEFAULT_DS_FRACTION = 0.6
"""float: d_s = ceil(0.6 * dim)."""

SWEEP_PARAMS = ("A_size", "d_s", "G_r", "G_t", "Q")
"""tuple[str, ...]: Parameters accepted by `sweep`."""
