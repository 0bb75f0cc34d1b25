"""scikit-learn compatible classifier trained by a simulated multi-device run."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import Dataset, batches
from .errors import InputError
from .executor import STRATEGIES, run_data_parallel, run_schedule, train_single
from .nn import LayerSpec, ModelSpec, forward, init_params
from .numcore import make_rng
from .optim import UPDATE_RULES
from .partition import balance_partition, plan_from_cuts


def _sub_seeds(seed):
    """Independent seeds for weight init and batch order."""
    state = np.random.SeedSequence(int(seed)).generate_state(2, dtype=np.uint64)
    return int(state[0]), int(state[1])


class PipelinedMLPClassifier(ClassifierMixin, BaseEstimator):
    """Dense softmax classifier trained under one of five parallel strategies.

    ``strategy`` picks ``"single"``, ``"data_parallel"`` (``n_devices``
    replicas), or one of the pipelined schemes ``"vanilla"``, ``"stash"`` and
    ``"spectrain"`` over ``n_devices`` stages. Stage boundaries come from
    ``cuts`` if given, otherwise from the cost-balancing partitioner.

    After ``fit`` the run's bookkeeping is kept on the estimator:
    ``metrics_``, ``trace_``, ``traffic_``, ``losses_`` and ``plan_``.
    """

    def __init__(self, hidden_layer_sizes=(32, 32, 32), activation="relu", strategy="spectrain",
                 n_devices=4, cuts=None, learning_rate=0.1, momentum=0.9, update_rule="momentum",
                 batch_size=128, n_steps=1000, eval_every=20, random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.strategy = strategy
        self.n_devices = n_devices
        self.cuts = cuts
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.update_rule = update_rule
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.eval_every = eval_every
        self.random_state = random_state

    def _build_spec(self, n_in, n_out):
        hidden = list(self.hidden_layer_sizes)
        acts = self.activation
        if isinstance(acts, str):
            acts = [acts] * len(hidden)
        if len(acts) != len(hidden):
            raise InputError(f"{len(acts)} activations for {len(hidden)} hidden layers")
        sizes = [n_in, *hidden, n_out]
        layers = [LayerSpec(a, b, act) for a, b, act in zip(sizes, sizes[1:], [*acts, "none"])]
        return ModelSpec(tuple(layers), "softmax_xent")

    def _validate_params(self):
        if self.strategy not in STRATEGIES:
            raise InputError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.update_rule not in UPDATE_RULES:
            raise InputError(f"update_rule must be one of {UPDATE_RULES}, got {self.update_rule!r}")
        if self.n_devices < 1:
            raise InputError(f"n_devices must be positive, got {self.n_devices}")
        if self.n_steps < 0:
            raise InputError(f"n_steps must be non-negative, got {self.n_steps}")

    def fit(self, X, y, X_val=None, y_val=None):
        self._validate_params()
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise InputError("need at least two classes")
        self.n_features_in_ = X.shape[1]
        val = None
        if X_val is not None:
            X_val, y_val = check_X_y(X_val, y_val, dtype=np.float64)
            val = (X_val, self._encode(y_val))

        spec = self._build_spec(X.shape[1], len(self.classes_))
        init_seed, batch_seed = _sub_seeds(self.random_state)
        params = init_params(spec, make_rng(init_seed))
        stream = batches(Dataset(X, y_enc.astype(np.int64)), self.batch_size, batch_seed, drop_last=True)
        common = dict(eta=self.learning_rate, gamma=self.momentum, rule=self.update_rule,
                      val=val, eval_every=self.eval_every)

        self.plan_ = None
        if self.strategy == "single":
            result = train_single(spec, params, stream, self.n_steps, **common)
        elif self.strategy == "data_parallel":
            result = run_data_parallel(spec, params, self.n_devices, stream, self.n_steps, **common)
        else:
            if self.cuts is not None:
                self.plan_ = plan_from_cuts(spec, self.cuts, self.batch_size)
                if self.plan_.n_devices != self.n_devices:
                    raise InputError(f"{len(self.cuts)} cuts do not make {self.n_devices} stages")
            else:
                self.plan_ = balance_partition(spec, self.n_devices, self.batch_size)
            result = run_schedule(spec, self.plan_, self.strategy, params, stream, self.n_steps, **common)

        self.model_spec_ = spec
        self.params_ = result.params
        self.metrics_ = result.metrics
        self.trace_ = result.trace
        self.traffic_ = result.traffic
        self.losses_ = result.losses
        return self

    def _encode(self, y):
        idx = np.searchsorted(self.classes_, y)
        idx = np.clip(idx, 0, len(self.classes_) - 1)
        if np.any(self.classes_[idx] != y):
            raise InputError("validation labels contain classes absent from training data")
        return idx.astype(np.int64)

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise InputError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        logits, _ = forward(self.model_spec_, self.params_, X)
        return logits

    def predict_proba(self, X):
        z = self.decision_function(X)
        z = z - z.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X):
        check_is_fitted(self, "params_")
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
