# Closed-loop walkthrough of the three petal-path cases.
# Run top to bottom (``python3 notebooks/01_petal_cases.py``) or cell by cell.

#%%
import numpy as np

from fapp import case_config, compare, run_episode
from fapp.experiment import reference_speed

#%% Case (i): start near P0, no wind
fapp_i = run_episode(case_config("i"))
reference = fapp_i.reference
base_i = run_episode(case_config("i", "baseline"), reference)
print(fapp_i.metrics.to_json())
print("reference samples:", len(reference), "duration %.2f s" % reference.duration)

#%% RMS comparison against the baseline flying the recorded reference
report = compare(fapp_i.metrics, base_i.metrics)
print("RMS tracking  FAPP %.4f m  baseline %.4f m  reduction %.1f %%" % (
    report["a"]["rms_tracking_error"], report["b"]["rms_tracking_error"],
    report["rms_reduction_percent"]))

#%% Virtual-vehicle speed along the path, sampled once per second
path = fapp_i.config.path()
speed = reference_speed(path, fapp_i.trace)
t = fapp_i.times
for second in range(int(t[-1]) + 1):
    k = np.searchsorted(t, second)
    print("t = %4.1f s  theta = %.3f  reference speed %.2f m/s" % (t[k], fapp_i.trace["theta"][k], speed[k]))

#%% Case (ii): 1.2 m initial offset
fapp_ii = run_episode(case_config("ii"))
ct = fapp_ii.trace["cross_track"]
first = fapp_ii.times[np.argmax(ct < 0.1)]
print("initial cross-track %.2f m, below 0.1 m from t = %.2f s" % (ct[0], first))

#%% Case (iii): lateral wind from 2 s to 6 s
fapp_iii = run_episode(case_config("iii"))
base_iii = run_episode(case_config("iii", "baseline"), reference)
print("max cross-track  FAPP %.3f m  baseline %.3f m" % (
    fapp_iii.metrics.max_cross_track_error, base_iii.metrics.max_cross_track_error))
window = (fapp_iii.times >= 2.0) & (fapp_iii.times < 6.0)
print("mean theta rate in the wind window %.3f 1/s (undisturbed %.3f 1/s)" % (
    fapp_iii.trace["theta_dot"][window].mean(),
    fapp_i.trace["theta_dot"][(fapp_i.times >= 2.0) & (fapp_i.times < 6.0)].mean()))
