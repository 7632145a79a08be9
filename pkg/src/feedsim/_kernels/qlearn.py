"""Tabular temporal-difference update kernel."""

from . import maybe_jit


def q_update_py(states, actions, rewards, next_states, terminal, q, alpha, gamma):
    """Apply Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a)) in order."""
    n = states.shape[0]
    n_actions = q.shape[1]
    for i in range(n):
        s = states[i]
        a = actions[i]
        best_next = 0.0
        if terminal[i] == 0:
            sp = next_states[i]
            best_next = q[sp, 0]
            for b in range(1, n_actions):
                if q[sp, b] > best_next:
                    best_next = q[sp, b]
        q[s, a] += alpha * (rewards[i] + gamma * best_next - q[s, a])
    return q


q_update = maybe_jit(q_update_py)
