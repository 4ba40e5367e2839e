"""Learning agents for the spectrum allocation game.

Two kinds of player: the two-reservoir agent (EsnAgent), which predicts
per-action rewards with one echo state network and their opponent-averaged
expectations with a second, and the table-driven QAgent baselines in three
variants. Both follow the same synchronous round protocol:

  1. ``select_and_broadcast``: epsilon-greedy pick from the stored predictor,
     announce (current_action, best_action).
  2. ``finish_round``: once every broadcast of the round is in, rebuild the
     opponent model, compute learning targets with the pre-update readouts,
     apply one readout-row (or Q-entry) update, then commit reservoir states.
  3. ``observe_outcome``: absorb the conflict-resolved joint action; the
     agent's own association bits become the next round's selection input.

``agent_step`` / ``q_step`` bundle phases 1 and 2 for a single agent whose
opponents' messages are already known.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import esn
from .game import (ExpectedUtility, JointEvaluator, MixedStrategy,
                   restrict_coupled, restrict_licensed_only)
from .scenario import ALGORITHMS

Q_VARIANTS = tuple(a for a in ALGORITHMS if a.startswith("q_"))


@dataclass(frozen=True)
class BroadcastMsg:
    """One BS's round announcement: the action it plays and the action its
    learner currently ranks best."""

    sender: int
    current_action: int
    best_action: int


@dataclass(frozen=True)
class StepDiagnostics:
    action: int
    best_action: int
    r_hat_alpha: float
    e_alpha: float
    r_hat_beta: float
    e_beta: float


@dataclass(frozen=True)
class QDiagnostics:
    action: int
    best_action: int
    q_before: float
    target: float
    q_after: float


def _check_spaces(bs, spaces):
    spaces = tuple(spaces)
    if not 0 <= bs < len(spaces):
        raise ValueError("bs index outside the player list")
    for n, space in enumerate(spaces):
        if space.owner != n:
            raise ValueError("spaces must be listed in owner order")
    return spaces


def _encode_space(space):
    """(|A|, 4K) matrix of [d | v | kappa | tau] blocks over covered users."""
    k = len(space.covered_users)
    rows = np.zeros((len(space), 4 * k))
    for i, action in enumerate(space.actions):
        rows[i, 0:k] = action.d
        rows[i, k:2 * k] = action.v
        if action.kappa is not None:
            rows[i, 2 * k:3 * k] = action.kappa
            rows[i, 3 * k:4 * k] = action.tau
    return rows


class EsnAgent:
    """Two-reservoir learner of one BS.

    The alpha network maps the opponents' announced actions to a predicted
    own reward per action; the beta network maps the agent's last resolved
    association pattern to the opponent-averaged expectation of those
    predictions and drives selection. The two readouts answer different
    questions and the broadcast reflects that: the played action is an
    epsilon-greedy draw around beta's robust pick, while the advertised
    best_action is alpha's reply to wherever the opponents last said their
    bests were.
    """

    def __init__(self, bs, spaces, config, seed):
        self.spaces = _check_spaces(bs, spaces)
        self.bs = int(bs)
        self.action_space = self.spaces[self.bs]
        self.epsilon = float(config.epsilon)
        self.eta = float(config.eta)
        self.coupled = False
        self.expectation_budget = int(config.expectation_budget)
        self.opponents = tuple(m for m in range(len(self.spaces)) if m != self.bs)
        self.opponent_model = None
        self.opponent_bests = {m: 0 for m in self.opponents}
        self._best_prev = None
        self.last_action = 0
        self._pending = None
        self._eval_cache = None

        streams = np.random.SeedSequence([int(seed), self.bs]).generate_state(3)
        self.rng = np.random.default_rng(int(streams[0]))

        # opponents' actions enter alpha as one concatenated block per
        # opponent, the whole vector scaled by 1/sqrt(width)
        blocks = [_encode_space(self.spaces[m]) for m in self.opponents]
        self.alpha_dim = int(sum(b.shape[1] for b in blocks))
        scale = 1.0 / math.sqrt(self.alpha_dim) if self.alpha_dim else 1.0
        self._enc = {m: b * scale for m, b in zip(self.opponents, blocks)}

        k = len(self.action_space.covered_users)
        self.beta_dim = 2 * k
        self._beta_scale = 1.0 / math.sqrt(self.beta_dim) if self.beta_dim else 1.0

        n_actions = len(self.action_space)
        self.res_alpha, self.ro_alpha = esn.init(
            config.reservoir_units, self.alpha_dim, n_actions,
            density=config.reservoir_density,
            target_radius=config.reservoir_radius, seed=int(streams[1]),
            input_scale=config.reservoir_input_scale)
        self.ro_alpha.rule = esn.FixedRate(config.lambda_alpha)
        self.res_beta, self.ro_beta = esn.init(
            config.reservoir_units, self.beta_dim, n_actions,
            density=config.reservoir_density,
            target_radius=config.reservoir_radius, seed=int(streams[2]),
            input_scale=config.reservoir_input_scale)
        self.ro_beta.rule = esn.FixedRate(config.lambda_beta)

        # per-action input projections; profile encodings in the expectation
        # then reduce to row gathers instead of matrix products
        self._phi = {}
        off = 0
        for m in self.opponents:
            width = self._enc[m].shape[1]
            self._phi[m] = self._enc[m] @ self.res_alpha.w_in[:, off:off + width].T
            off += width

        self.x_beta = np.ones(self.beta_dim) * self._beta_scale  # request state

    @property
    def esn_alpha(self):
        return self.res_alpha, self.ro_alpha

    @property
    def esn_beta(self):
        return self.res_beta, self.ro_beta

    def profile_input(self, indices):
        """Alpha input vector for one opponent profile {bs: action index}."""
        if not self.opponents:
            return np.zeros(0)
        return np.concatenate([self._enc[m][indices[m]] for m in self.opponents])


class QAgent:
    """Per-action value learner of one BS.

    ``variant`` names the capacity/action-space gating the surrounding run
    applies; the update rule itself is identical across variants. The
    coupled variant also learns over coupled-association payoffs, matching
    how its runs are scored.
    """

    def __init__(self, bs, spaces, config, seed, variant="q_lteu_decoupled"):
        if variant not in Q_VARIANTS:
            raise ValueError(f"unknown Q variant {variant!r}")
        self.spaces = _check_spaces(bs, spaces)
        self.bs = int(bs)
        self.action_space = self.spaces[self.bs]
        self.epsilon = float(config.epsilon)
        self.eta = float(config.eta)
        self.lambda_q = float(config.lambda_q)
        self.variant = variant
        self.coupled = variant == "q_lteu_coupled"
        self.opponents = tuple(m for m in range(len(self.spaces)) if m != self.bs)
        self.q_table = np.zeros(len(self.action_space))
        self.last_action = 0
        self._pending = None
        self._eval_cache = None
        streams = np.random.SeedSequence([int(seed), self.bs]).generate_state(1)
        self.rng = np.random.default_rng(int(streams[0]))


# selection and broadcast ---------------------------------------------------


def _scores(agent):
    if isinstance(agent, QAgent):
        return np.array(agent.q_table)
    return esn.readout_all(agent.ro_beta, agent.res_beta.state, agent.x_beta)


# a challenger must beat the advertised incumbent by this relative margin
# before the broadcast switches; stray LMS jitter between near-tied actions
# otherwise keeps every agent's reply input churning and nothing settles
BEST_SWITCH_MARGIN = 0.06


def _best_reply(agent):
    """Alpha's argmax against the opponents' last announced bests.

    This is the action the reservoir agent advertises: a direct reply to
    where the others say they are. It re-reads the opponents' positions
    every round, so it tracks their moves immediately instead of waiting
    to revisit actions the way a value table must. Switches of the
    advertised action are debounced by BEST_SWITCH_MARGIN.
    """
    x = agent.profile_input(agent.opponent_bests)
    mu = esn.peek_state(agent.res_alpha, x)
    values = esn.readout_all(agent.ro_alpha, mu, x)
    best = int(np.argmax(values))
    prev = agent._best_prev
    if prev is not None and prev != best:
        if values[best] <= values[prev] + BEST_SWITCH_MARGIN * abs(values[prev]):
            best = prev
    agent._best_prev = best
    return best


def _draw(agent, best):
    # argmax with prob 1-eps, uniform with prob eps; realizes the epsilon
    # greedy law (best gets 1-eps+eps/|A|, everything else eps/|A|)
    if agent.rng.random() < agent.epsilon:
        return int(agent.rng.integers(len(agent.action_space)))
    return best


def select_action(agent) -> int:
    """Epsilon-greedy draw from the agent's current predictor; score ties go
    to the lowest action index."""
    return _draw(agent, int(np.argmax(_scores(agent))))


def select_and_broadcast(agent) -> BroadcastMsg:
    """Phase one of a round: pick an action, remember it, announce it.

    For the reservoir agent the announced best and the selection peak are
    different readouts; for the table learners they coincide.
    """
    scores = _scores(agent)
    action = _draw(agent, int(np.argmax(scores)))
    if isinstance(agent, EsnAgent):
        best = _best_reply(agent)
    else:
        best = int(np.argmax(scores))
    agent.last_action = action
    agent._pending = (action, best, scores)
    return BroadcastMsg(sender=agent.bs, current_action=action, best_action=best)


def build_opponent_model(msgs, epsilon, spaces, expected=None):
    """Per-sender epsilon-greedy strategies peaked at each broadcast best.

    ``expected`` lists the senders that must have spoken; a missing or
    duplicated broadcast is a protocol violation.
    """
    seen = {}
    for msg in msgs:
        if msg.sender in seen:
            raise ValueError(f"duplicate broadcast from BS {msg.sender}")
        seen[msg.sender] = msg
    senders = tuple(expected) if expected is not None else tuple(sorted(seen))
    missing = [m for m in senders if m not in seen]
    if missing:
        raise ValueError(f"missing broadcast from BS {missing[0]}")
    return {m: MixedStrategy.epsilon_greedy(spaces[m], seen[m].best_action, epsilon)
            for m in senders}


def _opponent_msgs(agent, msgs):
    seen = {}
    for msg in msgs:
        if msg.sender == agent.bs:
            continue  # own echo on the bus is fine, just ignored
        if msg.sender not in agent.opponents:
            raise ValueError(f"broadcast from unknown BS {msg.sender}")
        if msg.sender in seen:
            raise ValueError(f"duplicate broadcast from BS {msg.sender}")
        seen[msg.sender] = msg
    missing = [m for m in agent.opponents if m not in seen]
    if missing:
        raise ValueError(f"missing broadcast from BS {missing[0]}")
    return seen


# learning targets ----------------------------------------------------------


def _evaluator(agent, capacities):
    cached = agent._eval_cache
    if cached is None or cached[0] is not capacities:
        agent._eval_cache = (capacities,
                             JointEvaluator(agent.spaces, capacities,
                                            eta=agent.eta,
                                            coupled=agent.coupled))
    return agent._eval_cache[1]


def esn_alpha_target(agent, joint_action, capacities) -> float:
    """Realized reward: the agent's utility on the conflict-resolved joint."""
    return _evaluator(agent, capacities).utility_of(agent.bs, joint_action)


def _alpha_predictions(agent, combos, action_i):
    """Alpha readout of one action over candidate states, one per opponent
    profile row in ``combos`` (columns follow agent.opponents order).

    States branch from the current committed state; nothing here mutates
    the reservoir.
    """
    base = agent.res_alpha.w @ agent.res_alpha.state
    pre = np.tile(base, (combos.shape[0], 1))
    for j, m in enumerate(agent.opponents):
        pre += agent._phi[m][combos[:, j]]
    states = np.tanh(pre)
    row = agent.ro_alpha.w_out[action_i]
    n = agent.res_alpha.n_units
    values = states @ row[:n] + row[-1]
    off = n
    for j, m in enumerate(agent.opponents):
        width = agent._enc[m].shape[1]
        values = values + (agent._enc[m] @ row[off:off + width])[combos[:, j]]
        off += width
    return values


def beta_expectation(agent, action_i) -> ExpectedUtility:
    """Expectation of alpha's predicted reward for ``action_i`` over the
    opponent model: exact enumeration when the joint opponent space fits the
    budget, else a Monte-Carlo average over that many profile draws."""
    if agent.opponent_model is None:
        raise RuntimeError("opponent model not built yet")
    probs = [np.asarray(agent.opponent_model[m].probs) for m in agent.opponents]
    sizes = [len(p) for p in probs]
    if math.prod(sizes) <= agent.expectation_budget:
        if sizes:
            combos = np.indices(sizes).reshape(len(sizes), -1).T
        else:
            combos = np.zeros((1, 0), dtype=int)
        weights = np.ones(combos.shape[0])
        for j, p in enumerate(probs):
            weights *= p[combos[:, j]]
        values = _alpha_predictions(agent, combos, action_i)
        return ExpectedUtility(value=float(weights @ values), stderr=0.0,
                               exact=True)
    budget = agent.expectation_budget
    draws = np.stack([agent.rng.choice(sizes[j], size=budget, p=probs[j])
                      for j in range(len(sizes))], axis=1)
    values = _alpha_predictions(agent, draws, action_i)
    stderr = float(values.std(ddof=1) / math.sqrt(budget))
    return ExpectedUtility(value=float(values.mean()), stderr=stderr,
                           exact=False)


def esn_beta_target(agent, action_i, capacities=None) -> float:
    """Expected-reward target for the beta network. ``capacities`` is accepted
    for signature symmetry with the alpha target; the expectation runs
    entirely on alpha predictions."""
    return beta_expectation(agent, action_i).value


# round completion ----------------------------------------------------------


def _esn_finish(agent, action, best, scores, msgs, capacities, t):
    by_sender = _opponent_msgs(agent, msgs)
    agent.opponent_model = build_opponent_model(
        list(by_sender.values()), agent.epsilon, agent.spaces,
        expected=agent.opponents)
    for m, msg in by_sender.items():
        agent.opponent_bests[m] = msg.best_action

    joint = np.zeros(len(agent.spaces), dtype=int)
    joint[agent.bs] = action
    for m, msg in by_sender.items():
        joint[m] = msg.current_action
    e_alpha = esn_alpha_target(agent, joint, capacities)
    # both targets and both predictions use the readouts and states as they
    # stood at selection time; training and state commits come after
    e_beta = beta_expectation(agent, action).value
    x_alpha = agent.profile_input(
        {m: msg.current_action for m, msg in by_sender.items()})
    mu_alpha = esn.peek_state(agent.res_alpha, x_alpha)
    r_hat_alpha = esn.readout(agent.ro_alpha, mu_alpha, x_alpha, action)
    r_hat_beta = float(scores[action])

    esn.train_step(agent.ro_alpha, mu_alpha, x_alpha, action, e_alpha, t)
    esn.train_step(agent.ro_beta, agent.res_beta.state, agent.x_beta, action,
                   e_beta, t)
    agent.res_alpha.state = mu_alpha
    esn.update_state(agent.res_beta, agent.x_beta)
    return StepDiagnostics(action=action, best_action=best,
                           r_hat_alpha=r_hat_alpha, e_alpha=e_alpha,
                           r_hat_beta=r_hat_beta, e_beta=e_beta)


def _q_finish(agent, action, best, msgs, capacities):
    by_sender = _opponent_msgs(agent, msgs)
    joint = np.zeros(len(agent.spaces), dtype=int)
    joint[agent.bs] = action
    for m, msg in by_sender.items():
        joint[m] = msg.best_action  # opponents assumed at their announced best
    target = _evaluator(agent, capacities).utility_of(agent.bs, joint)
    q_before = float(agent.q_table[action])
    agent.q_table[action] = (1.0 - agent.lambda_q) * q_before \
        + agent.lambda_q * target
    return QDiagnostics(action=action, best_action=best, q_before=q_before,
                        target=target, q_after=float(agent.q_table[action]))


def finish_round(agent, msgs, capacities, t=None):
    """Phase two of a round. ``msgs`` must carry one broadcast per opponent;
    the agent's own, if present, is ignored. ``t`` is the 1-based round index
    the reservoir learning-rate schedule is queried at."""
    if agent._pending is None:
        raise RuntimeError("select_and_broadcast must run before finish_round")
    action, best, scores = agent._pending
    agent._pending = None
    if isinstance(agent, QAgent):
        return _q_finish(agent, action, best, msgs, capacities)
    if t is None:
        raise ValueError("the reservoir agent needs the 1-based round index t")
    return _esn_finish(agent, action, best, scores, msgs, capacities, t)


def agent_step(agent, msgs, capacities, t):
    """One full round for a single agent whose opponents' broadcasts are
    already known: select, broadcast, learn. Returns the outgoing message and
    the step diagnostics."""
    out = select_and_broadcast(agent)
    return out, finish_round(agent, msgs, capacities, t)


def q_step(agent, msgs, capacities):
    out = select_and_broadcast(agent)
    return out, finish_round(agent, msgs, capacities)


def observe_outcome(agent, resolved_joint):
    """Absorb the conflict-resolved joint action. For the reservoir agent the
    own-association bits (served DL, served UL per covered user) become the
    next round's beta input; the Q baselines keep no such state."""
    if not isinstance(agent, EsnAgent):
        return
    own = resolved_joint[agent.bs]
    if own.owner != agent.bs or own.users != agent.action_space.covered_users:
        raise ValueError("resolved joint must be listed in owner order")
    k = len(own.users)
    bits = np.zeros(2 * k)
    for i in range(k):
        dl = own.d[i] > 0 or (own.kappa is not None and own.kappa[i] > 0)
        ul = own.v[i] > 0 or (own.tau is not None and own.tau[i] > 0)
        bits[i] = 1.0 if dl else 0.0
        bits[k + i] = 1.0 if ul else 0.0
    agent.x_beta = bits * agent._beta_scale


# per-algorithm gating ------------------------------------------------------


def algorithm_spaces(spaces, algorithm):
    """Action spaces after the named algorithm's structural gate."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if algorithm == "q_lte_decoupled":
        return tuple(restrict_licensed_only(s) for s in spaces)
    if algorithm == "q_lteu_coupled":
        return tuple(restrict_coupled(s) for s in spaces)
    return tuple(spaces)


def algorithm_capacities(caps, algorithm):
    """Capacity set after the named algorithm's band gate."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if algorithm == "q_lte_decoupled":
        return caps.without_unlicensed()
    return caps


def make_agents(algorithm, spaces, config, seed):
    """One agent per BS over already-gated spaces."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if algorithm == "esn":
        return [EsnAgent(n, spaces, config, seed) for n in range(len(spaces))]
    return [QAgent(n, spaces, config, seed, variant=algorithm)
            for n in range(len(spaces))]
