"""Port grid, Jakes spatial correlation and channel synthesis for a fluid antenna surface.

Ports are numbered 0..N_s-1 in row-major order over the (x, y) grid:
``index = ix * ns_y + iy``.  All coordinates are in meters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class FasGeometry:
    """Geometry of the transmit port surface and of the radar receive array.

    ``area_x``/``area_y`` and ``rx_spacing`` are expressed in wavelengths.
    """

    ns_x: int
    ns_y: int
    area_x: float = 1.0
    area_y: float = 1.0
    wavelength: float = SPEED_OF_LIGHT / 2.4e9
    nr: int = 10
    rx_spacing: float = 0.5

    def __post_init__(self):
        if self.ns_x < 1 or self.ns_y < 1:
            raise ValueError("port counts per axis must be >= 1")
        if self.area_x < 0 or self.area_y < 0:
            raise ValueError("surface extents must be nonnegative")
        if (self.ns_x > 1 and self.area_x <= 0) or (self.ns_y > 1 and self.area_y <= 0):
            raise ValueError("an axis with more than one port needs a positive extent")
        if self.wavelength <= 0 or self.nr < 1 or self.rx_spacing <= 0:
            raise ValueError("wavelength, nr and rx_spacing must be positive")

    @property
    def n_ports(self) -> int:
        return self.ns_x * self.ns_y

    def index(self, ix: int, iy: int) -> int:
        return ix * self.ns_y + iy

    def coords(self, index: int) -> tuple[int, int]:
        if not 0 <= index < self.n_ports:
            raise IndexError(index)
        return divmod(index, self.ns_y)


def grid_shape(n_ports: int) -> tuple[int, int]:
    """Most nearly square factorization ``(ns_x, ns_y)`` with ``ns_x <= ns_y``."""
    best = (1, n_ports)
    for a in range(1, int(np.sqrt(n_ports)) + 1):
        if n_ports % a == 0:
            best = (a, n_ports // a)
    return best


def _axis(n: int, extent: float, wavelength: float) -> np.ndarray:
    if n == 1:
        return np.zeros(1)
    return np.arange(n) / (n - 1) * extent * wavelength


def port_positions(geom: FasGeometry) -> np.ndarray:
    """(N_s, 2) array of port coordinates, row-major over (x, y)."""
    xs = _axis(geom.ns_x, geom.area_x, geom.wavelength)
    ys = _axis(geom.ns_y, geom.area_y, geom.wavelength)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def port_distances(geom: FasGeometry) -> np.ndarray:
    pos = port_positions(geom)
    diff = pos[:, None, :] - pos[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=-1))


@dataclass(frozen=True)
class SpatialCorrelation:
    matrix: np.ndarray
    eigvectors: np.ndarray
    eigvalues: np.ndarray

    @property
    def n_ports(self) -> int:
        return self.matrix.shape[0]

    @property
    def sqrt_factor(self) -> np.ndarray:
        """``Lambda^{1/2} Upsilon^T``; a white row vector times this has covariance ``J_s``."""
        return np.sqrt(self.eigvalues)[:, None] * self.eigvectors.T


def spherical_j0(x: np.ndarray) -> np.ndarray:
    # np.sinc(t) = sin(pi t) / (pi t) with sinc(0) = 1
    return np.sinc(np.asarray(x, dtype=float) / np.pi)


def jakes_correlation(geom: FasGeometry, clamp_rel: float = 1e-12) -> SpatialCorrelation:
    """Jakes correlation ``j0(2 pi d_ij / lambda)`` with a descending eigendecomposition.

    Eigenvalues below ``clamp_rel * max`` (roundoff negatives included) are set to 0.
    """
    dist = port_distances(geom)
    J = spherical_j0(2 * np.pi * dist / geom.wavelength)
    J = 0.5 * (J + J.T)
    np.fill_diagonal(J, 1.0)
    try:
        vals, vecs = np.linalg.eigh(J)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"eigendecomposition of the port correlation failed: {exc}")
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    vals = np.where(vals < clamp_rel * vals[0], 0.0, vals)
    return SpatialCorrelation(matrix=J, eigvectors=vecs, eigvalues=vals)


@dataclass(frozen=True)
class UserLink:
    distance: float
    pathloss_exp: float = 2.0
    noise_var: float = 1.0

    def __post_init__(self):
        if self.distance <= 0 or self.pathloss_exp <= 0 or self.noise_var <= 0:
            raise ValueError("distance, path-loss exponent and noise variance must be positive")

    @property
    def pathloss(self) -> float:
        return self.distance ** (-self.pathloss_exp)


def complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2)


def synthesize_user_channel(
    corr: SpatialCorrelation, link: UserLink, rng: np.random.Generator
) -> np.ndarray:
    """One user's channel as the row ``h_k^H`` (the form stored in ``H``).

    ``h_k^H = sqrt(l_k) g_k^H Lambda^{1/2} Upsilon^T`` with ``g_k ~ CN(0, I)``.
    """
    g = complex_normal(rng, corr.n_ports)
    return np.sqrt(link.pathloss) * (g.conj() @ corr.sqrt_factor)


def direction_vector(theta: float, phi: float = 0.0) -> np.ndarray:
    """Unit vector at polar angle ``theta`` from broadside (+z) and azimuth ``phi`` (radians)."""
    return np.array(
        [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]
    )


def steering_from_positions(positions: np.ndarray, theta: float, phi: float,
                            wavelength: float) -> np.ndarray:
    """Far-field steering vector; path differences are taken relative to the first element."""
    pos = np.zeros((positions.shape[0], 3))
    pos[:, : positions.shape[1]] = positions
    delta = (pos - pos[0]) @ direction_vector(theta, phi)
    return np.exp(1j * 2 * np.pi / wavelength * delta)


def rx_positions(geom: FasGeometry) -> np.ndarray:
    x = np.arange(geom.nr) * geom.rx_spacing * geom.wavelength
    return np.column_stack([x, np.zeros(geom.nr)])


def steering_vectors(geom: FasGeometry, theta: float, phi: float = 0.0):
    """Transmit (port surface) and receive (uniform linear array) steering vectors."""
    a_t = steering_from_positions(port_positions(geom), theta, phi, geom.wavelength)
    a_r = steering_from_positions(rx_positions(geom), theta, phi, geom.wavelength)
    return a_t, a_r


def target_response(a_r: np.ndarray, a_t: np.ndarray, alpha: complex) -> np.ndarray:
    return alpha * np.outer(a_r, a_t.conj())


@dataclass
class ChannelSet:
    """One channel realization.

    ``H`` rows are ``h_k^H``.  ``sigma_k2`` holds the user noise variances, which
    double as the noise of a user acting as an eavesdropper (``sigma_eve2``).
    """

    H: np.ndarray
    a_t: np.ndarray
    a_r: np.ndarray
    alpha: complex
    Rc: np.ndarray
    sigma_b2: float
    sigma_k2: np.ndarray
    sigma_r2: float
    sigma_eve2: np.ndarray = field(default=None)

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=complex))
        self.sigma_k2 = np.broadcast_to(
            np.asarray(self.sigma_k2, dtype=float), (self.H.shape[0],)
        ).copy()
        if self.sigma_eve2 is None:
            self.sigma_eve2 = self.sigma_k2.copy()
        else:
            self.sigma_eve2 = np.broadcast_to(
                np.asarray(self.sigma_eve2, dtype=float), (self.H.shape[0],)
            ).copy()
        if self.H.shape[1] != self.a_t.shape[0]:
            raise ValueError("H and a_t disagree on the number of ports")
        if self.Rc.shape != (self.a_r.shape[0], self.a_r.shape[0]):
            raise ValueError("Rc must be N_r x N_r")

    @property
    def K(self) -> int:
        return self.H.shape[0]

    @property
    def n_ports(self) -> int:
        return self.H.shape[1]

    @property
    def G(self) -> np.ndarray:
        return target_response(self.a_r, self.a_t, self.alpha)

    @property
    def R_tilde(self) -> np.ndarray:
        return self.Rc + self.sigma_b2 * np.eye(self.a_r.shape[0])

    def restrict_users(self, users) -> "ChannelSet":
        users = np.asarray(users)
        return ChannelSet(self.H[users], self.a_t, self.a_r, self.alpha, self.Rc,
                          self.sigma_b2, self.sigma_k2[users], self.sigma_r2,
                          self.sigma_eve2[users])
