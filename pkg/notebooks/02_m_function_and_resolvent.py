# coding: utf-8

# # M-function and resolvent
#
# Continuing with `-v'' = lam v`, we compute the Weyl solution `psi`, build the
# Green kernel and apply the resolvent to a Gaussian forcing.

# In[1]:

import numpy as np

from weylscale import (
    apply_resolvent,
    build_sturm_liouville,
    fundamental_pair,
    green_kernel,
    m_estimate,
    make_continuous,
    norm_inequalities,
    stable_weyl_solutions,
)

sys, rot = build_sturm_liouville(1.0, 0.0, 1.0, eta=np.pi / 2)
ts = make_continuous(0, 40, 0.01)
lam, lam0 = 1 + 1j, 0.0


# The estimate records the disk centres at each horizon and checks that the
# final value sits in all of them.

# In[2]:

est = m_estimate(sys, ts, rot, lam, [5, 10, 20, 40], lam0)
print("M       ", est.M[0, 0])
print("i/sqrt  ", 1j / np.sqrt(lam))
print("inside every disk:", all(est.contained), " cauchy gap:", est.cauchy_gap)


# The Weyl solution decays like `exp(i k t)`.  A backward sweep keeps it
# accurate where the literal combination `theta + phi M` loses digits.

# In[3]:

pair = stable_weyl_solutions(fundamental_pair(sys, ts, lam), rot)
for t in (0, 10, 20, 40):
    print(f"t={t:2d}  |psi|={abs(pair.psi[ts.index_of(t), 0, 0]):.3e}")


# Apply the resolvent to `f(t) = exp(-(t-5)^2 / 2)` in the first component.

# In[4]:

kern = green_kernel(pair, lam0=lam0, rot=rot)
t = ts.points
f = np.stack([np.exp(-0.5 * (t - 5) ** 2), 0 * t], 1)
r = apply_resolvent(kern, f)
print("equation residual", r.residual_max)
print("boundary", r.boundary)
print("tails", r.tails)


# The norm bound with `eps = delta / 2`:

# In[5]:

d = norm_inequalities(sys, ts, rot, r, lam, lam0, 0.5)
print({k: round(float(np.real(v)), 6) for k, v in d.items()})
