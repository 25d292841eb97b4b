from .metrics import (
    AutocorrelationCurve,
    MetricsReport,
    compare,
    compare_grouped,
    curve_tables,
    duration_histograms,
    format_metrics_table,
    grouped_state_probability,
    hamming_distribution,
    resample_corpus,
    run_lengths,
    state_autocorrelation,
    state_probability_curves,
    weekly_activity_counts,
    working_day_pairs,
)
