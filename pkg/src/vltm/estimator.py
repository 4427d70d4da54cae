"""Estimator-style front end over the transport-matrix engine."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import engine
from .validation import check_gate_kind, check_grid, check_impulse, check_voxel, check_wave


class VirtualTransportMatrix(TransformerMixin, BaseEstimator):
    """Probe the virtual light transport matrix of one impulse response.

    ``fit`` computes the direct image and the occupancy mask; the remaining
    methods probe columns, the in-focus indirect image and full matrices.
    ``transform`` maps an impulse response to its direct image values.

    Parameters
    ----------
    grid : VoxelGrid
        Hidden-volume discretization.
    wavelength : float, optional
        Virtual wavelength in meters; defaults to four times the laser pitch.
    gate_sigma : float, optional
        Gate width in seconds; defaults to ``2*wavelength / (2.576*c)``.
    epsilon : float, optional
        Absolute occupancy threshold. Overrides ``relative_epsilon``.
    relative_epsilon : float
        Occupancy threshold as a fraction of the direct-image maximum.
    gate_kind : {'two-bounce', 'higher', 'none'}
    n_jobs : int, optional
        Worker threads for independent columns; results do not depend on it.
    """

    def __init__(self, grid=None, wavelength=None, gate_sigma=None, epsilon=None,
                 relative_epsilon=0.05, gate_kind="two-bounce", n_jobs=None):
        self.grid = grid
        self.wavelength = wavelength
        self.gate_sigma = gate_sigma
        self.epsilon = epsilon
        self.relative_epsilon = relative_epsilon
        self.gate_kind = gate_kind
        self.n_jobs = n_jobs

    def _wave(self, h):
        wavelength = self.wavelength
        if wavelength is None:
            wavelength = engine.default_wavelength(h.topology)
        return check_wave(wavelength, self.gate_sigma)

    def fit(self, X, y=None):
        h = check_impulse(X)
        if self.grid is None:
            raise ValueError("VirtualTransportMatrix needs a voxel grid")
        self.grid_ = check_grid(self.grid, h)
        check_gate_kind(self.gate_kind)
        self.params_ = self._wave(h)
        self.impulse_ = h
        self.direct_ = engine.compute_direct(h, self.grid_, self.params_, n_jobs=self.n_jobs)
        self.mask_ = engine.occupancy_from_direct(self.direct_, self.epsilon, self.relative_epsilon)
        return self

    def transform(self, X):
        """Direct image values (length ``K_v``) of ``X``."""
        check_is_fitted(self, "params_")
        h = check_impulse(X)
        if h is self.impulse_:
            return self.direct_.values.copy()
        return engine.compute_direct(h, self.grid_, self.params_, n_jobs=self.n_jobs).values

    def column(self, source, gate_kind=None):
        check_is_fitted(self, "params_")
        kind = check_gate_kind(gate_kind or self.gate_kind)
        return engine.compute_column(self.impulse_, self.grid_, self.params_,
                                     check_voxel(self.grid_, source), kind)

    def in_focus_indirect(self):
        check_is_fitted(self, "params_")
        return engine.accumulate_in_focus_indirect(self.impulse_, self.grid_, self.params_,
                                                   self.mask_, self.gate_kind, self.n_jobs)

    def assemble(self, sources="all", masked=False):
        check_is_fitted(self, "params_")
        if not (isinstance(sources, str) and sources == "all"):
            sources = [check_voxel(self.grid_, s) for s in np.atleast_1d(sources)]
        return engine.assemble_ltm(self.impulse_, self.grid_, self.params_, sources,
                                   self.gate_kind, self.mask_ if masked else None, self.n_jobs)

    @property
    def occupied_(self):
        check_is_fitted(self, "mask_")
        return self.mask_.occupied
