"""Licensed and unlicensed link capacities and per-user achieved rates.

SINR terms depend only on the fixed transmit powers and the channel draw,
never on the allocation fractions, so capacities are computed once per
channel realization and cached in a LinkCapacitySet. A joint allocation
then turns capacities into rates by plain fraction weighting.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scenario import LICENSED, UNLICENSED, ChannelRealization, ScenarioConfig

LOG2 = np.log(2.0)


@dataclass(frozen=True)
class LinkCapacitySet:
    """Cached capacities in bps, shape (n_users, n_bs) each.

    The macro cell has no unlicensed radio: column 0 of the unlicensed
    matrices is identically zero. ``lte_fraction`` is the duty-cycle share
    already folded into the unlicensed entries.
    """

    c_l_dl: np.ndarray
    c_l_ul: np.ndarray
    c_u_dl: np.ndarray
    c_u_ul: np.ndarray
    lte_fraction: float

    @property
    def n_users(self) -> int:
        return self.c_l_dl.shape[0]

    @property
    def n_bs(self) -> int:
        return self.c_l_dl.shape[1]

    def without_unlicensed(self) -> "LinkCapacitySet":
        zero = np.zeros_like(self.c_u_dl)
        return LinkCapacitySet(self.c_l_dl, self.c_l_ul, zero, zero.copy(),
                               self.lte_fraction)


def _shannon(bandwidth_hz: float, signal_w, interference_w, noise_w: float):
    return bandwidth_hz * np.log1p(signal_w / (interference_w + noise_w)) / LOG2


def licensed_dl_capacity(user: int, bs: int, channel: ChannelRealization,
                         config: ScenarioConfig) -> float:
    """Downlink capacity on the licensed band; every other BS interferes at
    its full transmit power (macro or small-cell level)."""
    h = channel.gain[user, :, LICENSED]
    powers = np.array([config.bs_power_w(j) for j in range(channel.gain.shape[1])])
    received = powers * h
    signal = received[bs]
    interference = received.sum() - signal
    return float(_shannon(config.f_l_dl_hz, signal, interference, config.noise_power_w))


def licensed_ul_capacity(user: int, bs: int, channel: ChannelRealization,
                         config: ScenarioConfig, active_users=None) -> float:
    """Uplink capacity on the licensed band.

    ``active_users`` is the set of transmitting users (the user itself must
    belong to it); by default every user is assumed active, the worst-case
    stationary interference.
    """
    n_users = channel.gain.shape[0]
    if active_users is None:
        active_users = range(n_users)
    active = set(int(k) for k in active_users)
    if user not in active:
        raise ValueError("user must be in active_users")
    h_to_bs = channel.gain[:, bs, LICENSED]
    signal = config.user_power_w * h_to_bs[user]
    interference = config.user_power_w * sum(h_to_bs[k] for k in active if k != user)
    return float(_shannon(config.f_l_ul_hz, signal, interference, config.noise_power_w))


def unlicensed_capacities(user: int, sbs: int, channel: ChannelRealization,
                          config: ScenarioConfig, lte_fraction: float,
                          active_users=None) -> tuple[float, float]:
    """(DL, UL) capacities on the unlicensed band for one small cell.

    Only small cells transmit there: DL interference comes from the other
    SBSs, UL interference from other users. Both scale linearly with the
    duty-cycle fraction granted to LTE-U.
    """
    if sbs == 0:
        raise ValueError("the macro cell has no unlicensed radio")
    n_users, n_bs = channel.gain.shape[:2]
    if active_users is None:
        active_users = range(n_users)
    active = set(int(k) for k in active_users)
    if user not in active:
        raise ValueError("user must be in active_users")

    h_dl = channel.gain[user, :, UNLICENSED]
    p_sbs = config.bs_power_w(sbs)
    signal = p_sbs * h_dl[sbs]
    interference = p_sbs * sum(h_dl[k] for k in range(1, n_bs) if k != sbs)
    dl = lte_fraction * float(
        _shannon(config.f_u_hz, signal, interference, config.noise_power_w))

    h_ul = channel.gain[:, sbs, UNLICENSED]
    signal_u = config.user_power_w * h_ul[user]
    interference_u = config.user_power_w * sum(h_ul[k] for k in active if k != user)
    ul = lte_fraction * float(
        _shannon(config.f_u_hz, signal_u, interference_u, config.noise_power_w))
    return dl, ul


def build_capacities(channel: ChannelRealization, config: ScenarioConfig,
                     lte_fraction: float) -> LinkCapacitySet:
    """Vectorized capacity matrices for every (user, BS) pair."""
    n_users, n_bs = channel.gain.shape[:2]
    noise = config.noise_power_w
    powers = np.array([config.bs_power_w(j) for j in range(n_bs)])

    # licensed DL: all BSs interfere
    rx = channel.gain[:, :, LICENSED] * powers[None, :]
    interf_dl = rx.sum(axis=1, keepdims=True) - rx
    c_l_dl = _shannon(config.f_l_dl_hz, rx, interf_dl, noise)

    # licensed UL: all other users interfere at the serving BS
    rx_ul = channel.gain[:, :, LICENSED] * config.user_power_w
    interf_ul = rx_ul.sum(axis=0, keepdims=True) - rx_ul
    c_l_ul = _shannon(config.f_l_ul_hz, rx_ul, interf_ul, noise)

    # unlicensed DL: small cells only, other SBSs interfere
    rx_u = channel.gain[:, :, UNLICENSED] * powers[None, :]
    rx_u[:, 0] = 0.0
    interf_u = rx_u[:, 1:].sum(axis=1, keepdims=True) - rx_u
    c_u_dl = lte_fraction * _shannon(config.f_u_hz, rx_u, np.maximum(interf_u, 0.0), noise)
    c_u_dl[:, 0] = 0.0

    # unlicensed UL: other users interfere at the serving SBS
    rx_uu = channel.gain[:, :, UNLICENSED] * config.user_power_w
    interf_uu = rx_uu.sum(axis=0, keepdims=True) - rx_uu
    c_u_ul = lte_fraction * _shannon(config.f_u_hz, rx_uu, interf_uu, noise)
    c_u_ul[:, 0] = 0.0

    return LinkCapacitySet(c_l_dl=c_l_dl, c_l_ul=c_l_ul, c_u_dl=c_u_dl,
                           c_u_ul=c_u_ul, lte_fraction=lte_fraction)


@dataclass(frozen=True)
class UserRates:
    """Achieved long-term rates per user, plus the serving BS per direction
    (-1 when a direction is not served)."""

    dl_bps: np.ndarray
    ul_bps: np.ndarray
    serving_dl: np.ndarray
    serving_ul: np.ndarray

    @property
    def total_bps(self) -> np.ndarray:
        return self.dl_bps + self.ul_bps

    def decoupled_users(self) -> int:
        """Count of users whose DL and UL are served by different BSs."""
        both = (self.serving_dl >= 0) & (self.serving_ul >= 0)
        return int(np.sum(both & (self.serving_dl != self.serving_ul)))

    def csv_rows(self):
        for i in range(len(self.dl_bps)):
            yield {
                "user": i,
                "dl_bps": self.dl_bps[i],
                "ul_bps": self.ul_bps[i],
                "serving_dl": int(self.serving_dl[i]),
                "serving_ul": int(self.serving_ul[i]),
            }

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["user", "dl_bps", "ul_bps", "serving_dl", "serving_ul"])
            for row in self.csv_rows():
                writer.writerow([
                    row["user"],
                    format(row["dl_bps"], ".9g"),
                    format(row["ul_bps"], ".9g"),
                    row["serving_dl"],
                    row["serving_ul"],
                ])


def compute_user_rates(joint_action, capacities: LinkCapacitySet) -> UserRates:
    """Fraction-weighted rates for a conflict-free joint allocation.

    ``joint_action`` is a sequence of per-BS actions exposing dense
    length-n_users fraction arrays (``d_dense``/``v_dense``/``kappa_dense``/
    ``tau_dense``). Raises if two BSs grant the same user a nonzero
    fraction in the same direction; resolve conflicts first.
    """
    n_users, n_bs = capacities.c_l_dl.shape
    d = np.vstack([np.asarray(a.d_dense) for a in joint_action])
    v = np.vstack([np.asarray(a.v_dense) for a in joint_action])
    kp = np.vstack([np.asarray(a.kappa_dense) for a in joint_action])
    tp = np.vstack([np.asarray(a.tau_dense) for a in joint_action])
    if d.shape != (n_bs, n_users):
        raise ValueError("joint action shape does not match the capacity set")

    dl_grants = (d > 0) | (kp > 0)
    ul_grants = (v > 0) | (tp > 0)
    for name, grants in (("DL", dl_grants), ("UL", ul_grants)):
        counts = grants.sum(axis=0)
        if np.any(counts > 1):
            bad = int(np.argmax(counts > 1))
            raise ValueError(
                f"user {bad} is granted a {name} allocation by more than one BS")

    dl = np.einsum("ji,ij->i", d, capacities.c_l_dl) + \
        np.einsum("ji,ij->i", kp, capacities.c_u_dl)
    ul = np.einsum("ji,ij->i", v, capacities.c_l_ul) + \
        np.einsum("ji,ij->i", tp, capacities.c_u_ul)

    serving_dl = np.where(dl_grants.any(axis=0), dl_grants.argmax(axis=0), -1)
    serving_ul = np.where(ul_grants.any(axis=0), ul_grants.argmax(axis=0), -1)
    return UserRates(dl_bps=dl, ul_bps=ul,
                     serving_dl=serving_dl.astype(int),
                     serving_ul=serving_ul.astype(int))
