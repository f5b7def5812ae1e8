# coding: utf-8

# # Nested Weyl disks for a Sturm-Liouville equation
#
# We write `-v'' = lam v` on `[0, T]` as a Hamiltonian system and watch the
# Weyl disks shrink as the horizon grows.  Their centres approach the
# M-function `i / sqrt(lam)`.

# In[1]:

import numpy as np

from weylscale import build_sturm_liouville, disk_at, fundamental_pair, make_continuous, nesting_report

sys, rot = build_sturm_liouville(1.0, 0.0, 1.0, eta=np.pi / 2)
ts = make_continuous(0, 16, 0.01)
lam = 1 + 1j
traj = fundamental_pair(sys, ts, lam)


# The fundamental matrix satisfies the symplectic identity up to the ODE tolerance.

# In[2]:

print("symplectic residual", traj.symplectic_residual().max())


# Disks at the horizons 2, 4, 8 and 16:

# In[3]:

disks = [disk_at(traj, rot, ts.index_of(T)) for T in (2.0, 4.0, 8.0, 16.0)]
exact = 1j / np.sqrt(lam)
for T, d in zip((2, 4, 8, 16), disks):
    c = d.center[0, 0]
    print(f"T={T:2d}  centre={c:.10f}  radius={d.radius_euclidean:.3e}  |c - M|={abs(c - exact):.3e}")


# Each disk lies inside the previous one.  The report samples boundary points
# and checks membership in every earlier disk.

# In[4]:

rep = nesting_report(disks, 1e-8, np.random.default_rng(0))
print("nested:", rep.ok, " cauchy gaps:", np.array(rep.cauchy_gaps))


# The same construction on the integers uses the exact step `I + mu K` instead of an ODE solver.

# In[5]:

from weylscale import make_uniform_discrete

zs = make_uniform_discrete(0, 200, 1.0)
ztraj = fundamental_pair(sys, zs, 1j)
for T in (25.0, 50.0, 100.0, 200.0):
    d = disk_at(ztraj, rot, zs.index_of(T))
    print(f"T={T:5.0f}  centre={d.center[0, 0]:.12f}  radius={d.radius_euclidean:.3e}")
