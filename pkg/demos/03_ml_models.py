"""Non-linear learned models: SVR, GMM regression, MLP and the recursive autoencoder.

On the composite plant with idle disk and network, power depends on
u_cpu * u_mem, which no linear model can express.  An rbf SVR captures it.
"""

from wattzoo.catalog import fit_model
from wattzoo.core import derive_server_profile
from wattzoo.evaluation import evaluate_model
from wattzoo.synth import GroundTruthSpec, generate_trace
from wattzoo.trace_io import split_70_30

plant = GroundTruthSpec("composite", {"u_disk": 0.0, "u_net": 0.0}, noise_sigma=1.0, sweep="mixed", full_metrics=True)
split = split_70_30(generate_trace(plant, 300, seed=0), seed=0)
profile = derive_server_profile(split.train)

settings = {
    "mvlr-4": {},
    "svm": {"C": 100.0, "epsilon": 0.5, "kernel": "rbf"},
    "gmm": {"n_components": 3},
    "mlp": {"epochs": 600},
    "rae": {"epochs": 300},
}
for kind, hp in settings.items():
    model = fit_model(kind, split.train, profile, seed=0, **hp)
    err, _ = evaluate_model(model, split.validation)
    print(f"{kind:<7} validation standard error {err:7.3f} W  ({', '.join(model.feature_spec.inputs)})")
