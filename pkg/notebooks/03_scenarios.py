# coding: utf-8

# # Running the bundled scenarios
#
# Each scenario JSON describes a problem, a time scale, spectral points and
# horizons.  `cli.run` performs every check and writes a CSV report with a
# manifest next to it.

# In[1]:

import io
import tempfile
from pathlib import Path

from weylscale import cli, runner
from weylscale.config import bundled_scenarios

for p in bundled_scenarios():
    print(p.name)


# The two discrete scenarios run in a couple of seconds.

# In[2]:

out = Path(tempfile.mkdtemp())
for name in ("sl_discrete_variable", "even_order_discrete"):
    path = next(p for p in bundled_scenarios() if p.stem == name)
    code = cli.run("check", path, out, threads=4, stream=io.StringIO())
    print(path.stem, "exit code", code)


# Every row of the report is one check at one spectral point.

# In[3]:

for csv in sorted(out.glob("*/check.csv")):
    rows = runner.read_csv(csv)
    failed = [r for r in rows if r["asserted"] == 1.0 and r["passed"] == 0.0]
    print(csv.parent.name, len(rows), "checks,", len(failed), "failed")
    for r in rows[:6]:
        print(f"    {r['check']:<24} {r['value']:.3e}  tol {r['tol']:.0e}")
