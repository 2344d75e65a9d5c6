"""Estimator-style wrapper: fit a decoder to a circuit, predict observable flips."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..circuits.ir import CircuitIR
from .graph import build_graph
from .ler import make_decoder, resolve_weights


class MatchingDecoder(BaseEstimator):
    """Decoder over the matching graph of an annotated circuit.

    ``fit`` takes the circuit instead of training data: the graph and its
    weights follow from the noise model. ``X`` is a boolean shots x detectors
    matrix and predictions are shots x observables.
    """

    def __init__(self, decoder: str = "uf", weighting: str = "llr", lut_capacity: int | None = None):
        self.decoder = decoder
        self.weighting = weighting
        self.lut_capacity = lut_capacity

    def fit(self, circuit: CircuitIR, y=None) -> "MatchingDecoder":
        self.graph_ = build_graph(circuit)
        self.decoder_ = make_decoder(
            self.graph_, self.decoder, resolve_weights(self.graph_, self.weighting), self.lut_capacity
        )
        self.n_features_in_ = self.graph_.n_detectors
        self.observable_names_ = list(self.graph_.observable_names)
        return self

    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=bool)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ValueError(f"X must have shape (n_shots, {self.n_features_in_})")
        return X

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "decoder_")
        X = self._check_X(X)
        shots, dets = np.nonzero(X)
        ptr = np.zeros(len(X) + 1, dtype=np.int64)
        np.cumsum(np.bincount(shots, minlength=len(X)), out=ptr[1:])
        masks = self.decoder_.decode_csr(ptr, dets.astype(np.int64))
        bits = np.arange(len(self.observable_names_), dtype=np.uint64)
        return ((masks[:, None] >> bits) & np.uint64(1)).astype(bool)

    def score(self, X, y) -> float:
        """Fraction of shots whose every observable is predicted correctly."""
        y = np.asarray(y, dtype=bool)
        return float(np.mean(np.all(self.predict(X) == y, axis=1)))
