"""Complex-valued two-layer network: forward pass, modulus logits, Adam training.

The network maps C^2 -> C^H -> C^K through two complex linear layers with a
modReLU activation in between.  Real logits are the stabilized moduli of the
complex output scores; probabilities come from a temperature softmax.

Inputs live in R^4 with the block layout [Re z1, Re z2, Im z1, Im z2].
All gradients are computed in real coordinates (each complex weight is two
real tensors), which is exact for real-valued losses and easy to verify
against finite differences.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

CHECKPOINT_SCHEMA_VERSION = 1


class InvalidTemperatureError(ValueError):
    """Softmax temperature must be strictly positive."""


class TrainingInputError(ValueError):
    """Training data is empty or contains fewer than two classes."""


# ---------------------------------------------------------------------------
# Layout helpers
# ---------------------------------------------------------------------------

def as_complex_pair(x: np.ndarray) -> np.ndarray:
    """View [Re1, Re2, Im1, Im2] real vectors as (z1, z2) in C^2.

    Accepts shape (4,) or (n, 4); returns (2,) or (n, 2) complex.
    """
    x = np.asarray(x, dtype=float)
    return x[..., :2] + 1j * x[..., 2:]


def as_real_vec(z: np.ndarray) -> np.ndarray:
    """Inverse of :func:`as_complex_pair`."""
    z = np.asarray(z, dtype=complex)
    return np.concatenate([z.real, z.imag], axis=-1)


# ---------------------------------------------------------------------------
# Parameters and configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """Immutable trained parameters of the two-layer complex network.

    W1: complex (H, 2) first-layer weights.
    b1: real (H,) modReLU biases.
    W2: complex (K, H) output-layer weights.
    eps_logit: stabilizer inside the modulus logits.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    eps_logit: float = 1e-9

    def __post_init__(self):
        W1 = np.asarray(self.W1, dtype=complex)
        b1 = np.asarray(self.b1, dtype=float)
        W2 = np.asarray(self.W2, dtype=complex)
        if W1.ndim != 2 or W1.shape[1] != 2:
            raise ValueError(f"W1 must be (H, 2), got {W1.shape}")
        H = W1.shape[0]
        if b1.shape != (H,):
            raise ValueError(f"b1 must be ({H},), got {b1.shape}")
        if W2.ndim != 2 or W2.shape[1] != H:
            raise ValueError(f"W2 must be (K, {H}), got {W2.shape}")
        if W2.shape[0] < 2:
            raise ValueError("need at least two output classes")
        if not (self.eps_logit > 0):
            raise ValueError("eps_logit must be positive")
        for arr in (W1, b1, W2):
            if not np.all(np.isfinite(arr.view(float))):
                raise ValueError("parameters must be finite")
            arr.setflags(write=False)
        object.__setattr__(self, "W1", W1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "W2", W2)

    @property
    def hidden_width(self) -> int:
        return self.W1.shape[0]

    @property
    def num_classes(self) -> int:
        return self.W2.shape[0]


@dataclass
class TrainConfig:
    """Adam training hyperparameters (defaults match the shipped experiments)."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 1e-4
    epochs: int = 50
    batch_size: int = 64
    seed: int = 42
    hidden_width: int = 16
    num_classes: int = 2
    eps_logit: float = 1e-9

    def __post_init__(self):
        if not (self.lr > 0):
            raise ValueError("lr must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


# ---------------------------------------------------------------------------
# Forward pieces
# ---------------------------------------------------------------------------

def modrelu(h: np.ndarray | complex, b: np.ndarray | float) -> np.ndarray:
    """modReLU activation: h * (|h| + b)/|h| when |h| + b > 0, else 0.

    The output keeps the phase of h.  At h = 0 the scaling is undefined and
    we return 0 regardless of b (measure-zero convention).
    """
    h = np.asarray(h, dtype=complex)
    b = np.asarray(b, dtype=float)
    r = np.abs(h)
    safe_r = np.where(r > 0, r, 1.0)
    scale = np.where(r > 0, np.maximum(r + b, 0.0) / safe_r, 0.0)
    return scale * h


def complex_linear(W: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Apply the complex matrix W to z: (Wr x - Wi y) + i (Wr y + Wi x)."""
    W = np.asarray(W, dtype=complex)
    z = np.asarray(z, dtype=complex)
    if W.shape[-1] != z.shape[-1]:
        raise ValueError(f"dimension mismatch: W is {W.shape}, z is {z.shape}")
    return z @ W.T


def modulus_logits(c: np.ndarray, eps: float) -> np.ndarray:
    """Stabilized moduli of complex scores: sqrt(Re^2 + Im^2 + eps)."""
    if not (eps > 0):
        raise ValueError("eps must be positive")
    c = np.asarray(c, dtype=complex)
    return np.sqrt(c.real**2 + c.imag**2 + eps)


def softmax_temp(logits: np.ndarray, T: float) -> np.ndarray:
    """Temperature softmax over the last axis, computed with max subtraction.

    The argmax is invariant under any T > 0.
    """
    if not (T > 0):
        raise InvalidTemperatureError(f"temperature must be > 0, got {T}")
    logits = np.asarray(logits, dtype=float)
    z = logits / T
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params: ModelParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Run the network on x (shape (4,) or (n, 4)).

    Returns (logits, hidden_margins) where hidden_margins[h] = |a_h| + b_h for
    the first-layer pre-activations a (the quantity the kink detector uses).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    z = as_complex_pair(np.atleast_2d(x))
    a = complex_linear(params.W1, z)
    h = modrelu(a, params.b1)
    c = complex_linear(params.W2, h)
    logits = modulus_logits(c, params.eps_logit)
    margins = np.abs(a) + params.b1
    if single:
        return logits[0], margins[0]
    return logits, margins


def predict_proba(params: ModelParams, x: np.ndarray, T: float = 1.0) -> np.ndarray:
    logits, _ = forward(params, x)
    return softmax_temp(logits, T)


def logit_diff(params: ModelParams, x: np.ndarray) -> np.ndarray | float:
    """Signed logit difference l_0 - l_1 whose zero set is the binary boundary.

    For more than two classes this reduces to the top-2 gap (unsigned).
    """
    logits, _ = forward(params, x)
    logits2 = np.atleast_2d(logits)
    if params.num_classes == 2:
        d = logits2[:, 0] - logits2[:, 1]
    else:
        part = np.sort(logits2, axis=1)
        d = part[:, -1] - part[:, -2]
    return float(d[0]) if np.asarray(logits).ndim == 1 else d


# ---------------------------------------------------------------------------
# Backward pass (real-coordinate gradients packed as complex arrays)
# ---------------------------------------------------------------------------
# Convention: for a complex tensor w = wr + i*wi and a real loss L, the
# "gradient" G below is dL/dwr + i*dL/dwi.  Chain rules in this convention:
#   c = W h        ->  GW = Gc^T conj(h),   Gh = Gc conj(W)
#   out = modrelu  ->  see _modrelu_backward
#   l = |c|_eps    ->  Gc = gl * c / l

def _forward_cache(W1, b1, W2, eps, z):
    a = z @ W1.T
    r = np.abs(a)
    safe_r = np.where(r > 0, r, 1.0)
    active = (r + b1 > 0) & (r > 0)
    scale = np.where(active, (r + b1) / safe_r, 0.0)
    h = scale * a
    c = h @ W2.T
    logits = np.sqrt(c.real**2 + c.imag**2 + eps)
    return a, r, safe_r, active, scale, h, c, logits


def _backward(W1, b1, W2, z, a, r, safe_r, active, scale, h, c, logits, g_logits):
    gc = (g_logits / logits) * c
    gW2 = gc.T @ np.conj(h)
    gh = gc @ np.conj(W2)
    # modReLU backward: Gin = scale*Gout - (b/r^3) Re(conj(a) Gout) a  (active)
    inner = np.real(np.conj(a) * gh)
    coef = np.where(active, b1 / safe_r**3, 0.0)
    ga = np.where(active, scale, 0.0) * gh - coef * inner * a
    gb1 = np.sum(np.where(active, inner / safe_r, 0.0), axis=0)
    gW1 = ga.T @ np.conj(z)
    gz = ga @ np.conj(W1)
    return gW1, gb1, gW2, gz


def loss_and_grads(W1, b1, W2, eps, X, y, weight_decay=0.0):
    """Cross-entropy loss (T = 1) and gradients for one mini-batch.

    Returns (loss, gW1, gb1, gW2).  Weight decay adds wd * param to each
    gradient, matching coupled-L2 Adam conventions.
    """
    z = as_complex_pair(np.atleast_2d(np.asarray(X, dtype=float)))
    y = np.asarray(y, dtype=int)
    n = z.shape[0]
    cache = _forward_cache(W1, b1, W2, eps, z)
    a, r, safe_r, active, scale, h, c, logits = cache
    p = softmax_temp(logits, 1.0)
    p_true = np.clip(p[np.arange(n), y], 1e-300, None)
    loss = float(-np.mean(np.log(p_true)))
    g_logits = p.copy()
    g_logits[np.arange(n), y] -= 1.0
    g_logits /= n
    gW1, gb1, gW2, _ = _backward(W1, b1, W2, z, *cache, g_logits)
    if weight_decay:
        gW1 = gW1 + weight_decay * W1
        gb1 = gb1 + weight_decay * b1
        gW2 = gW2 + weight_decay * W2
    return loss, gW1, gb1, gW2


def input_gradient(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Gradient of the logit difference l_0 - l_1 with respect to the input.

    Returned in the real layout [d/dRe1, d/dRe2, d/dIm1, d/dIm2].
    """
    z = as_complex_pair(np.atleast_2d(np.asarray(x, dtype=float)))
    cache = _forward_cache(params.W1, params.b1, params.W2, params.eps_logit, z)
    logits = cache[-1]
    g_logits = np.zeros_like(logits)
    g_logits[:, 0] = 1.0
    g_logits[:, 1] = -1.0
    _, _, _, gz = _backward(params.W1, params.b1, params.W2, z, *cache, g_logits)
    out = as_real_vec(gz)
    return out[0] if np.asarray(x).ndim == 1 else out


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def init_params(rng: np.random.Generator, hidden_width: int, num_classes: int,
                eps_logit: float = 1e-9) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Complex Glorot init: each real/imag part uniform with fan-based limit."""
    def cglorot(fan_out, fan_in):
        limit = np.sqrt(6.0 / (fan_in + fan_out)) / np.sqrt(2.0)
        re = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        im = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        return re + 1j * im

    W1 = cglorot(hidden_width, 2)
    b1 = np.zeros(hidden_width)
    W2 = cglorot(num_classes, hidden_width)
    return W1, b1, W2, eps_logit


def train(data: tuple[np.ndarray, np.ndarray], cfg: TrainConfig) -> ModelParams:
    """Mini-batch Adam on cross-entropy; deterministic given cfg.seed.

    The shuffling stream is one seeded generator advanced once per epoch, so
    identical seeds give bit-identical parameters.
    """
    X, y = data
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.shape[0] == 0:
        raise TrainingInputError("empty training set")
    if np.unique(y).size < 2:
        raise TrainingInputError("training set must contain at least two classes")

    rng = np.random.default_rng(cfg.seed)
    W1, b1, W2, eps = init_params(rng, cfg.hidden_width, cfg.num_classes, cfg.eps_logit)

    # Adam state on the real coordinates: each complex weight contributes its
    # real and imaginary parts as independent real tensors.
    theta = [W1.real.copy(), W1.imag.copy(), b1.copy(), W2.real.copy(), W2.imag.copy()]
    m = [np.zeros_like(p) for p in theta]
    v = [np.zeros_like(p) for p in theta]
    t = 0
    n = X.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            cW1 = theta[0] + 1j * theta[1]
            cW2 = theta[3] + 1j * theta[4]
            _, gW1, gb1, gW2 = loss_and_grads(
                cW1, theta[2], cW2, eps, X[idx], y[idx], cfg.weight_decay)
            grads = [gW1.real, gW1.imag, gb1, gW2.real, gW2.imag]
            t += 1
            for k in range(5):
                g = grads[k]
                m[k] = cfg.beta1 * m[k] + (1 - cfg.beta1) * g
                v[k] = cfg.beta2 * v[k] + (1 - cfg.beta2) * g * g
                mhat = m[k] / (1 - cfg.beta1**t)
                vhat = v[k] / (1 - cfg.beta2**t)
                theta[k] = theta[k] - cfg.lr * mhat / (np.sqrt(vhat) + cfg.adam_eps)

    return ModelParams(W1=theta[0] + 1j * theta[1], b1=theta[2],
                       W2=theta[3] + 1j * theta[4], eps_logit=eps)


# ---------------------------------------------------------------------------
# Checkpoint I/O (single JSON document, flat row-major arrays)
# ---------------------------------------------------------------------------

def save_checkpoint(params: ModelParams, path, seed: int | None = None) -> None:
    doc = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "hidden_width": params.hidden_width,
        "num_classes": params.num_classes,
        "eps_logit": params.eps_logit,
        "seed": seed,
        "W1_re": params.W1.real.ravel().tolist(),
        "W1_im": params.W1.imag.ravel().tolist(),
        "b1": params.b1.tolist(),
        "W2_re": params.W2.real.ravel().tolist(),
        "W2_im": params.W2.imag.ravel().tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple[ModelParams, int | None]:
    with open(path) as fh:
        doc = json.load(fh)
    H, K = doc["hidden_width"], doc["num_classes"]
    W1 = (np.array(doc["W1_re"]) + 1j * np.array(doc["W1_im"])).reshape(H, 2)
    W2 = (np.array(doc["W2_re"]) + 1j * np.array(doc["W2_im"])).reshape(K, H)
    params = ModelParams(W1=W1, b1=np.array(doc["b1"]), W2=W2, eps_logit=doc["eps_logit"])
    return params, doc.get("seed")
