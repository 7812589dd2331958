"""Exact finite-horizon values by direct recursion over successor beliefs.

No grid and no interpolation anywhere: continuation beliefs are carried in
closed form and the recursion is memoized on exact float pairs. This is the
independent oracle the grid solver is checked against at small horizons.
"""

from gepower import Action, propagate


class HorizonOracle:
    def __init__(self, ch, econ, discount):
        self.ch = ch
        self.econ = econ
        self.beta = discount.beta
        self._memo = {}

    def value(self, p1, p2, horizon):
        if horizon == 0:
            return 0.0
        key = (p1, p2, horizon)
        got = self._memo.get(key)
        if got is None:
            got = max(
                self.action_value(p1, p2, horizon, a)
                for a in Action
            )
            self._memo[key] = got
        return got

    def action_value(self, p1, p2, horizon, action):
        ch, econ, beta = self.ch, self.econ, self.beta
        l0, l1 = ch.lambda0, ch.lambda1
        if action is Action.BALANCED:
            g = (p1 + p2) * (econ.rl + econ.cl) - 2.0 * econ.cl
            cont = (
                (1.0 - p1) * (1.0 - p2) * self.value(l0, l0, horizon - 1)
                + p1 * p2 * self.value(l1, l1, horizon - 1)
                + p1 * (1.0 - p2) * self.value(l1, l0, horizon - 1)
                + (1.0 - p1) * p2 * self.value(l0, l1, horizon - 1)
            )
        elif action is Action.BET1:
            g = (econ.rh + econ.ch) * p1 - econ.ch
            t2 = propagate(p2, ch)
            cont = p1 * self.value(l1, t2, horizon - 1) + (1.0 - p1) * self.value(
                l0, t2, horizon - 1
            )
        elif action is Action.BET2:
            g = (econ.rh + econ.ch) * p2 - econ.ch
            t1 = propagate(p1, ch)
            cont = p2 * self.value(t1, l1, horizon - 1) + (1.0 - p2) * self.value(
                t1, l0, horizon - 1
            )
        else:
            g = 0.0
            cont = self.value(propagate(p1, ch), propagate(p2, ch), horizon - 1)
        return g + beta * cont
