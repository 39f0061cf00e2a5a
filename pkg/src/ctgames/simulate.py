"""Simulation of continuous-time event data and discretely sampled panels.

Markets are simulated independently, each from its own random stream spawned
off the master seed, so output is reproducible bit-for-bit and markets may
be generated in any order.  Only state-changing events are recorded:
continuation decisions (choice 0) are invisible to an observer of the state
path and never enter the event log.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import game, markov
from .equilibrium import aggregate_generator, best_response_map, check_ccp
from .errors import InvalidArgumentError

# Actor codes used in event records and their CSV serialization.
NATURE = -1
CENSOR = -2

# A simulator refuses choice probabilities farther than this from equilibrium.
EQUILIBRIUM_RESIDUAL_TOL = 1e-6


@dataclass
class EventLog:
    """Continuous-time event records plus per-market censoring information.

    Event arrays (one entry per recorded state change):

    - ``market_id``, ``index`` : market and 1-based event counter
    - ``pre_state`` : state the market was in when the event fired
    - ``time`` : absolute event time
    - ``actor`` : ``NATURE`` (-1) or a player index
    - ``action`` : the player's choice (always 1; choice 0 is unobservable)
      or, for nature, the destination state

    Market arrays (one entry per market): ``markets``, ``horizon`` (the
    censoring time), and ``final_state`` (state held at the censoring time).
    """

    market_id: np.ndarray
    index: np.ndarray
    pre_state: np.ndarray
    time: np.ndarray
    actor: np.ndarray
    action: np.ndarray
    markets: np.ndarray
    horizon: np.ndarray
    final_state: np.ndarray

    @property
    def n_events(self):
        return len(self.market_id)

    @property
    def n_markets(self):
        return len(self.markets)

    def post_state(self, config):
        """Destination state of every event."""
        tables = game.state_tables(config)
        out = np.empty(self.n_events, dtype=np.int64)
        nature = self.actor == NATURE
        out[nature] = self.action[nature]
        players = ~nature
        out[players] = tables.toggle[self.actor[players], self.pre_state[players]]
        return out

    def to_csv(self, path):
        """Write one row per event plus a terminal censor row per market.

        Columns are ``market_id, n, k, t, actor, action``; the censor row
        has ``actor = -2``, ``k`` the final state, ``t`` the censoring time
        and ``action = -1``.  Times round-trip losslessly (17 significant
        digits).
        """
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["market_id", "n", "k", "t", "actor", "action"])
            by_market = {m: [] for m in self.markets}
            for row in range(self.n_events):
                by_market[self.market_id[row]].append(row)
            for pos, m in enumerate(self.markets):
                for row in by_market[m]:
                    writer.writerow([m, self.index[row], self.pre_state[row],
                                     f"{self.time[row]:.17g}", self.actor[row],
                                     self.action[row]])
                writer.writerow([m, len(by_market[m]) + 1, self.final_state[pos],
                                 f"{self.horizon[pos]:.17g}", CENSOR, -1])

    @classmethod
    def from_csv(cls, path):
        market_id, index, pre_state, time, actor, action = [], [], [], [], [], []
        markets, horizon, final_state = [], [], []
        with open(path, newline="") as handle:
            reader = csv.DictReader(handle)
            for row in reader:
                if int(row["actor"]) == CENSOR:
                    markets.append(int(row["market_id"]))
                    horizon.append(float(row["t"]))
                    final_state.append(int(row["k"]))
                else:
                    market_id.append(int(row["market_id"]))
                    index.append(int(row["n"]))
                    pre_state.append(int(row["k"]))
                    time.append(float(row["t"]))
                    actor.append(int(row["actor"]))
                    action.append(int(row["action"]))
        return cls(market_id=np.array(market_id, dtype=np.int64),
                   index=np.array(index, dtype=np.int64),
                   pre_state=np.array(pre_state, dtype=np.int64),
                   time=np.array(time, dtype=float),
                   actor=np.array(actor, dtype=np.int64),
                   action=np.array(action, dtype=np.int64),
                   markets=np.array(markets, dtype=np.int64),
                   horizon=np.array(horizon, dtype=float),
                   final_state=np.array(final_state, dtype=np.int64))


@dataclass
class Panel:
    """States observed on the sampling lattice {0, delta, 2*delta, ...}."""

    market_id: np.ndarray
    period: np.ndarray
    state: np.ndarray

    @property
    def n_rows(self):
        return len(self.market_id)

    def to_csv(self, path):
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["market_id", "n", "k"])
            for row in range(self.n_rows):
                writer.writerow([self.market_id[row], self.period[row], self.state[row]])

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
        if data.size == 0:
            data = data.reshape(0, 3)
        return cls(market_id=data[:, 0], period=data[:, 1], state=data[:, 2])


def _require_equilibrium(theta, ccp, config):
    ccp = check_ccp(ccp, config)
    residual = np.abs(best_response_map(theta, ccp, config) - ccp).max()
    if residual > EQUILIBRIUM_RESIDUAL_TOL:
        raise InvalidArgumentError(
            f"choice probabilities are not an equilibrium (residual {residual:g})")
    return ccp


def _market_rngs(seed, n_markets):
    return [np.random.default_rng(child)
            for child in np.random.SeedSequence(seed).spawn(n_markets)]


def simulate_continuous(theta, ccp_star, config, n_markets, seed,
                        horizon=None, events_per_market=1):
    """Draw continuous-time event histories from the equilibrium process.

    Each market starts from the stationary distribution of the aggregate
    intensity matrix and evolves by competing exponential hazards: nature's
    rates plus ``lam * ccp[i, 1, k]`` per firm.  With ``horizon`` set,
    events are recorded up to that time and the final spell is censored
    there; otherwise exactly ``events_per_market`` events are recorded and
    observation stops at the last event (a zero-length final spell).

    Raises
    ------
    InvalidArgumentError
        If ``ccp_star`` is not an equilibrium for ``theta`` (fixed-point
        residual above 1e-6).
    """
    ccp = _require_equilibrium(theta, ccp_star, config)
    if horizon is None and events_per_market < 1:
        raise InvalidArgumentError("events_per_market must be >= 1")
    k_total = config.n_states
    q0 = game.nature_generator(config)
    tables = game.state_tables(config)
    nature_targets = [np.nonzero(q0[k])[0] for k in range(k_total)]
    nature_targets = [t[t != k] for k, t in enumerate(nature_targets)]
    nature_rates = [q0[k, t] for k, t in enumerate(nature_targets)]
    player_rates = config.lam * ccp[:, 1, :]

    pi = markov.stationary_distribution(aggregate_generator(ccp, config))
    cum_pi = np.cumsum(pi)

    market_id, index, pre_state, time, actor, action = [], [], [], [], [], []
    horizons = np.empty(n_markets)
    finals = np.empty(n_markets, dtype=np.int64)

    for m, rng in enumerate(_market_rngs(seed, n_markets)):
        k = min(int(np.searchsorted(cum_pi, rng.random())), k_total - 1)
        t = 0.0
        count = 0
        while True:
            rates = np.concatenate([nature_rates[k], player_rates[:, k]])
            total = rates.sum()
            if total <= 0.0:
                t = horizon if horizon is not None else t
                break
            wait = rng.exponential(1.0 / total)
            if horizon is not None and t + wait > horizon:
                t = horizon
                break
            t += wait
            cum = np.cumsum(rates)
            pick = int(np.searchsorted(cum, rng.random() * total))
            pick = min(pick, len(rates) - 1)
            count += 1
            market_id.append(m)
            index.append(count)
            pre_state.append(k)
            time.append(t)
            n_nature = len(nature_targets[k])
            if pick < n_nature:
                target = int(nature_targets[k][pick])
                actor.append(NATURE)
                action.append(target)
            else:
                firm = pick - n_nature
                target = int(tables.toggle[firm, k])
                actor.append(firm)
                action.append(1)
            k = target
            if horizon is None and count >= events_per_market:
                break
        horizons[m] = t
        finals[m] = k

    return EventLog(market_id=np.array(market_id, dtype=np.int64),
                    index=np.array(index, dtype=np.int64),
                    pre_state=np.array(pre_state, dtype=np.int64),
                    time=np.array(time, dtype=float),
                    actor=np.array(actor, dtype=np.int64),
                    action=np.array(action, dtype=np.int64),
                    markets=np.arange(n_markets, dtype=np.int64),
                    horizon=horizons, final_state=finals)


def sample_discrete(theta, ccp_star, config, n_markets, periods=1, seed=0,
                    init_state=None):
    """Draw snapshot panels: states on the lattice {0, delta, ..., periods*delta}.

    Initial states come from the stationary distribution (or ``init_state``
    when given); successive states are drawn from the rows of
    ``expm(delta * Q)``.  Deterministic given the seed; each market consumes
    its own spawned stream.
    """
    ccp = _require_equilibrium(theta, ccp_star, config)
    if periods < 1:
        raise InvalidArgumentError("periods must be >= 1")
    q = aggregate_generator(ccp, config)
    p = markov.transition_matrix(q, config.delta)
    cum_rows = np.cumsum(p, axis=1)

    rngs = _market_rngs(seed, n_markets)
    draws = np.empty((n_markets, periods))
    states = np.empty((n_markets, periods + 1), dtype=np.int64)
    if init_state is None:
        cum_pi = np.cumsum(markov.stationary_distribution(q))
        for m, rng in enumerate(rngs):
            states[m, 0] = min(int(np.searchsorted(cum_pi, rng.random())),
                               config.n_states - 1)
            draws[m] = rng.random(periods)
    else:
        if not 0 <= init_state < config.n_states:
            raise InvalidArgumentError(f"init_state out of range: {init_state}")
        states[:, 0] = init_state
        for m, rng in enumerate(rngs):
            draws[m] = rng.random(periods)

    for n in range(1, periods + 1):
        rows = cum_rows[states[:, n - 1]]
        nxt = (draws[:, n - 1][:, None] > rows).sum(axis=1)
        states[:, n] = np.minimum(nxt, config.n_states - 1)

    market_id = np.repeat(np.arange(n_markets, dtype=np.int64), periods + 1)
    period = np.tile(np.arange(periods + 1, dtype=np.int64), n_markets)
    return Panel(market_id=market_id, period=period, state=states.reshape(-1))


def to_panel(events, config, periods=None):
    """Snapshot an event log on the lattice {n * delta} up to each horizon."""
    delta = config.delta
    rows_m, rows_n, rows_k = [], [], []
    for pos, m in enumerate(events.markets):
        sel = events.market_id == m
        times = events.time[sel]
        pres = events.pre_state[sel]
        last = int(events.final_state[pos])
        t_max = events.horizon[pos]
        n_max = periods if periods is not None else int(np.floor(t_max / delta + 1e-12))
        for n in range(n_max + 1):
            t = n * delta
            after = np.searchsorted(times, t, side="right")
            state = pres[after] if after < len(pres) else last
            rows_m.append(m)
            rows_n.append(n)
            rows_k.append(int(state))
    return Panel(market_id=np.array(rows_m, dtype=np.int64),
                 period=np.array(rows_n, dtype=np.int64),
                 state=np.array(rows_k, dtype=np.int64))


def descriptive_stats(panel, config):
    """Steady-state style summary of a panel.

    Returns a dict with the average and standard deviation of the active
    firm count, the AR(1) slope of the count on its one-period lag (OLS
    with intercept; nan when the lag has zero variance), per-transition
    average entrant and exit counts, excess turnover
    ``(entrants + exits) - |entrants - exits|``, the correlation between
    entry and exit counts, and the per-firm activity probability.
    """
    if panel.n_rows == 0:
        raise InvalidArgumentError("panel is empty")
    tables = game.state_tables(config)
    activity = tables.activity[panel.state]
    n_active = activity.sum(axis=1)

    same_market = panel.market_id[1:] == panel.market_id[:-1]
    consecutive = same_market & (panel.period[1:] == panel.period[:-1] + 1)
    if not np.any(consecutive):
        raise InvalidArgumentError("panel has no consecutive observations")
    prev = activity[:-1][consecutive]
    curr = activity[1:][consecutive]
    entrants = ((curr == 1) & (prev == 0)).sum(axis=1)
    exits = ((curr == 0) & (prev == 1)).sum(axis=1)
    turnover = entrants + exits - np.abs(entrants - exits)

    lag = n_active[:-1][consecutive].astype(float)
    lead = n_active[1:][consecutive].astype(float)
    lag_var = lag.var()
    ar1 = float(np.cov(lag, lead, ddof=0)[0, 1] / lag_var) if lag_var > 0 else float("nan")
    if entrants.var() > 0 and exits.var() > 0:
        corr = float(np.corrcoef(entrants, exits)[0, 1])
    else:
        corr = float("nan")

    return {
        "avg_active": float(n_active.mean()),
        "sd_active": float(n_active.std(ddof=1)) if len(n_active) > 1 else 0.0,
        "ar1": ar1,
        "avg_entrants": float(entrants.mean()),
        "avg_exits": float(exits.mean()),
        "excess_turnover": float(turnover.mean()),
        "corr_entry_exit": corr,
        "activity_prob": activity.mean(axis=0),
    }
