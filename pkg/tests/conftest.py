import numpy as np

from surprisal.traces import TraceSet, layers_from_counts


def make_traces(values, ground_truth=None, predicted=None, ids=None, layer_counts=None):
    """TraceSet builder with a single 'dense' layer unless counts are given."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    if layer_counts is None:
        layer_counts = [("dense", values.shape[1])]
    return TraceSet(
        values=values,
        layers=layers_from_counts(layer_counts),
        ground_truth=ground_truth,
        predicted=predicted,
        ids=ids,
    )
