"""
Tabular MDP simulation and fixture IO.

Rollouts are driven by uniforms drawn from one generator per trajectory:
one uniform for s_0, then per step the policy's action uniforms followed by
one transition uniform. Batches spawn a child generator per trajectory, so
a batch is the same whether trajectories are drawn serially or in threads.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from models import TabularMDP, Trajectory
from .config import Config
from .policy import Policy


logger = logging.getLogger(__name__)

REPO_ROOT = Path(__file__).resolve().parents[3]

BENCHMARKS = {
    "bench3x2": "bench3x2.mdp",
    "bench5x3": "bench5x3.mdp",
}


def _inverse_cdf(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise inverse-CDF draw; probs has shape (n, k), u shape (n,)."""
    cdf = np.cumsum(probs, axis=1)
    draws = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(draws, probs.shape[1] - 1)


def uniforms_per_trajectory(policy: Policy, H: int) -> int:
    return 1 + H * (policy.uniforms_per_action + 1)


def simulate(mdp: TabularMDP, policy: Policy, theta: np.ndarray, H: int,
             uniforms: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Roll out n trajectories in lockstep from pre-drawn uniforms.

    Returns states (n, H), actions (n, H) or (n, H, m), rewards (n, H).
    """
    if H < 1:
        raise ValueError(f"Invalid horizon '{H}'. Must be at least 1")
    uniforms = np.atleast_2d(uniforms)
    n = uniforms.shape[0]
    k = policy.uniforms_per_action
    initial = np.broadcast_to(mdp.initial_dist, (n, mdp.n_states))
    s = _inverse_cdf(initial, uniforms[:, 0])

    states = np.zeros((n, H), dtype=np.int64)
    rewards = np.zeros((n, H))
    actions = None
    for h in range(H):
        offset = 1 + h * (k + 1)
        a = policy.sample_actions(theta, s, uniforms[:, offset:offset + k])
        if actions is None:
            actions = np.zeros((n, H) + a.shape[1:], dtype=a.dtype)
        idx = policy.env_actions(a)
        states[:, h] = s
        actions[:, h] = a
        rewards[:, h] = mdp.reward[s, idx]
        s = _inverse_cdf(mdp.transition[s, idx], uniforms[:, offset + k])
    return states, actions, rewards


def sample_trajectory(mdp: TabularMDP, policy: Policy, theta: np.ndarray, H: int,
                      rng: np.random.Generator) -> Trajectory:
    """Draw one trajectory; deterministic given the generator state."""
    uniforms = rng.random(uniforms_per_trajectory(policy, H))
    states, actions, rewards = simulate(mdp, policy, theta, H, uniforms[None, :])
    return Trajectory(states=states[0], actions=actions[0], rewards=rewards[0], reward_bound=mdp.reward_bound)


def sample_batch(mdp: TabularMDP, policy: Policy, theta: np.ndarray, H: int, n: int,
                 rng: np.random.Generator, workers: int = 1) -> List[Trajectory]:
    """
    Draw n independent trajectories, one spawned child generator each.

    Trajectory i equals sample_trajectory(..., rng.spawn(n)[i]) for any
    number of workers.
    """
    if n < 1:
        return []
    children = rng.spawn(n)
    width = uniforms_per_trajectory(policy, H)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda child: child.random(width), children))
    else:
        rows = [child.random(width) for child in children]
    states, actions, rewards = simulate(mdp, policy, theta, H, np.vstack(rows))
    return [Trajectory(states=states[i], actions=actions[i], rewards=rewards[i], reward_bound=mdp.reward_bound)
            for i in range(n)]


def discount_weights(gamma: float, H: int) -> np.ndarray:
    return gamma ** np.arange(H, dtype=float)


def truncated_return(traj: Trajectory, gamma: float) -> float:
    """ℛ(τ) = Σ_{h<H} γ^h r_h."""
    return float(discount_weights(gamma, traj.horizon) @ traj.rewards)


def random_mdp(n_states: int, n_actions: int, gamma: float = 0.9, reward_bound: float = 1.0,
               seed: int = 0, horizon: Optional[int] = None) -> TabularMDP:
    """Seeded MDP with Dirichlet(1) transitions and U[−R, R] rewards."""
    rng = np.random.default_rng(seed)
    transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    reward = rng.uniform(-reward_bound, reward_bound, size=(n_states, n_actions))
    initial = rng.dirichlet(np.ones(n_states))
    return TabularMDP(
        n_states=n_states,
        n_actions=n_actions,
        transition=transition,
        reward=reward,
        initial_dist=initial,
        gamma=gamma,
        reward_bound=reward_bound,
        horizon=horizon,
        name=f"random-{n_states}x{n_actions}-seed{seed}",
    )


def dumps_mdp(mdp: TabularMDP, horizon: Optional[int] = None) -> str:
    """Serialize to the flat fixture format."""
    H = horizon or mdp.horizon or 1
    lines = [f"{mdp.n_states} {mdp.n_actions} {H} {mdp.gamma!r} {mdp.reward_bound!r}"]
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            probs = " ".join(repr(float(p)) for p in mdp.transition[s, a])
            lines.append(f"P {s} {a} {probs}")
    for s in range(mdp.n_states):
        lines.append(f"r {s} " + " ".join(repr(float(r)) for r in mdp.reward[s]))
    lines.append("rho " + " ".join(repr(float(p)) for p in mdp.initial_dist))
    return "\n".join(lines) + "\n"


def loads_mdp(text: str, name: Optional[str] = None) -> TabularMDP:
    """
    Parse the flat fixture format.

    Header `S A H gamma R`, then `P s a p_0 .. p_{S−1}` rows, `r s r_0 .. r_{A−1}`
    rows and one `rho p_0 .. p_{S−1}` row. Blank lines and `#` comments are
    ignored. Invariant violations surface as pydantic ValidationError.
    """
    header = None
    transition = reward = initial = None
    seen_p = set()
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if header is None:
                if len(parts) != 5:
                    raise ValueError("header must read 'S A H gamma R'")
                header = (int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3]), float(parts[4]))
                S, A = header[0], header[1]
                transition = np.full((S, A, S), np.nan)
                reward = np.full((S, A), np.nan)
                continue
            S, A = header[0], header[1]
            tag = parts[0]
            if tag == "P":
                s, a = int(parts[1]), int(parts[2])
                values = [float(x) for x in parts[3:]]
                if len(values) != S:
                    raise ValueError(f"P row needs {S} probabilities, got {len(values)}")
                transition[s, a] = values
                seen_p.add((s, a))
            elif tag == "r":
                s = int(parts[1])
                values = [float(x) for x in parts[2:]]
                if len(values) != A:
                    raise ValueError(f"r row needs {A} rewards, got {len(values)}")
                reward[s] = values
            elif tag == "rho":
                values = [float(x) for x in parts[1:]]
                if len(values) != S:
                    raise ValueError(f"rho row needs {S} probabilities, got {len(values)}")
                initial = np.array(values)
            else:
                raise ValueError(f"unknown row tag '{tag}'")
        except (ValueError, IndexError) as e:
            raise ValueError(f"line {number}: {e}") from e

    if header is None:
        raise ValueError("fixture is empty")
    S, A, H, gamma, bound = header
    if len(seen_p) != S * A:
        raise ValueError(f"fixture defines {len(seen_p)} of {S * A} transition rows")
    if np.isnan(reward).any():
        raise ValueError("fixture reward table is incomplete")
    if initial is None:
        raise ValueError("fixture has no rho row")
    return TabularMDP(
        n_states=S, n_actions=A, transition=transition, reward=reward, initial_dist=initial,
        gamma=gamma, reward_bound=bound, horizon=H, name=name,
    )


def load_mdp(path) -> TabularMDP:
    path = Path(path)
    logger.debug(f"Loading MDP fixture {path}")
    return loads_mdp(path.read_text(), name=path.stem)


def save_mdp(mdp: TabularMDP, path, horizon: Optional[int] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_mdp(mdp, horizon))
    return path


def fixtures_dir() -> Path:
    configured = Path(Config.FIXTURES_DIR)
    return configured if configured.is_absolute() else REPO_ROOT / configured


def load_benchmark(name: str) -> TabularMDP:
    """Load a committed benchmark fixture by name (bench3x2, bench5x3)."""
    if name not in BENCHMARKS:
        raise ValueError(f"Invalid benchmark '{name}'. Valid benchmarks: {', '.join(BENCHMARKS)}")
    return load_mdp(fixtures_dir() / BENCHMARKS[name])


def validate_mdp_file(path) -> List[str]:
    """Return the invariant violations of a fixture file (empty when valid)."""
    try:
        load_mdp(path)
    except ValidationError as e:
        return [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()]
    except (ValueError, OSError) as e:
        return [str(e)]
    return []
