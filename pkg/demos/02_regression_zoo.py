"""Linear-in-parameters models on a mixed workload.

Polynomial CPU models nest, so their in-sample error can only fall as terms
are added.  Multi-variable models see memory, disk and network too, which
matters because the composite plant has a CPU x memory interaction.  The
lasso on a sparse counter plant keeps only the planted counters.
"""

import numpy as np

from wattzoo.catalog import fit_model
from wattzoo.core import derive_server_profile
from wattzoo.evaluation import in_sample_sse, standard_error
from wattzoo.synth import GroundTruthSpec, generate_counter_trace, generate_trace
from wattzoo.trace_io import split_70_30

trace = generate_trace(GroundTruthSpec("composite", noise_sigma=2.0, sweep="mixed", full_metrics=True), 300, seed=1)
split = split_70_30(trace, seed=1)
profile = derive_server_profile(split.train)

print("in-sample SSE of the nested CPU polynomials:")
for kind in ("svlr", "svpr-2", "svpr-3"):
    print(f"  {kind:<7} {in_sample_sse(fit_model(kind, split.train), split.train):10.1f}")

print("validation error of the multi-variable models:")
for kind in ("mvlr-3", "mvlr-4", "mvlr-4-fixed", "mvlr-cache", "mvlr-9-fixed", "mvlr-24-temp", "mvlr-33-temp-freq"):
    m = fit_model(kind, split.train, profile)
    print(f"  {kind:<18} {standard_error(split.validation.power, m.predict_trace(split.validation)):7.3f} W")

counters, plant = generate_counter_trace(300, 30, 3, seed=2)
lasso = fit_model("lasso-30", counters)
slopes = np.asarray(lasso.parameters["slopes"])
names = lasso.feature_spec.inputs
kept = [n for n, s in zip(names, slopes) if abs(s) > 0.05 * np.abs(slopes).max()]
print(f"planted support {plant['support']}")
print(f"lasso support   {kept}")
