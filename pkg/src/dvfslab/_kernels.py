"""Hot numeric kernels for the Q-network and its integer mirror.

Every kernel exists twice: a loop-style version compiled with ``numba.njit``
and a vectorized pure-numpy version. The numba path is used when numba is
importable and ``DVFSLAB_DISABLE_JIT`` is unset; set ``DVFSLAB_DISABLE_JIT=1``
to force the numpy path (handy for debugging and for the backend benchmark).

Networks are stored as one flat float64 vector ``theta``. For each layer ``l``
the weight matrix (``sizes[l+1] x sizes[l]``, row-major) comes first, then the
bias vector. Hidden layers use ReLU, the output layer is the identity.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_DISABLE = os.environ.get("DVFSLAB_DISABLE_JIT", "").strip().lower() in ("1", "true", "yes", "on")
JIT_AVAILABLE = numba is not None
USE_JIT = JIT_AVAILABLE and not _DISABLE
BACKEND = "numba" if USE_JIT else "numpy"

# Fixed-point constants shared with the quantized engine.
Q_SHIFT = 30
Q_DIV = 10
Q_ONE = 1 << Q_SHIFT
_Q_MASK = Q_ONE - 1
_Q_HALF = 1 << (Q_SHIFT - 1)


def _njit(fn):
    if numba is None:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def param_count(sizes):
    n = 0
    for i in range(len(sizes) - 1):
        n += sizes[i + 1] * sizes[i] + sizes[i + 1]
    return n


def unpack(theta, sizes):
    """Split a flat parameter vector into ``[(W, b), ...]`` views."""
    layers = []
    off = 0
    for i in range(len(sizes) - 1):
        n_in, n_out = int(sizes[i]), int(sizes[i + 1])
        w = theta[off:off + n_out * n_in].reshape(n_out, n_in)
        off += n_out * n_in
        b = theta[off:off + n_out]
        off += n_out
        layers.append((w, b))
    return layers


# ---------------------------------------------------------------------------
# float network: numpy path


def np_forward(theta, sizes, x):
    """Batch forward pass; ``x`` is ``(n, sizes[0])``, returns ``(n,)``."""
    a = np.atleast_2d(x)
    layers = unpack(theta, sizes)
    for i, (w, b) in enumerate(layers):
        a = a @ w.T + b
        if i < len(layers) - 1:
            a = np.maximum(a, 0.0)
    return a[:, 0]


def np_loss_grad(theta, sizes, x, y):
    """Mean squared error ``mean((y - Q(x))^2)`` and its gradient."""
    layers = unpack(theta, sizes)
    n = x.shape[0]
    acts = [x]
    a = x
    for i, (w, b) in enumerate(layers):
        a = a @ w.T + b
        if i < len(layers) - 1:
            a = np.maximum(a, 0.0)
        acts.append(a)
    q = acts[-1][:, 0]
    err = y - q
    loss = float(np.mean(err * err))
    grad = np.zeros_like(theta)
    glayers = unpack(grad, sizes)
    delta = (-2.0 / n * err)[:, None]
    for i in range(len(layers) - 1, -1, -1):
        gw, gb = glayers[i]
        gw[...] = delta.T @ acts[i]
        gb[...] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ layers[i][0]) * (acts[i] > 0.0)
    return loss, grad


def np_q_values(theta, sizes, state, action_values):
    """Q(state, a) for every candidate action input value."""
    n_act = action_values.shape[0]
    x = np.empty((n_act, state.shape[0] + 1))
    x[:, :-1] = state
    x[:, -1] = action_values
    return np_forward(theta, sizes, x)


def np_ddqn_targets(theta, theta_tgt, sizes, rewards, next_states, terminal, action_values, gamma):
    n, d = next_states.shape
    n_act = action_values.shape[0]
    x = np.empty((n, n_act, d + 1))
    x[:, :, :d] = next_states[:, None, :]
    x[:, :, d] = action_values[None, :]
    flat = x.reshape(n * n_act, d + 1)
    q_online = np_forward(theta, sizes, flat).reshape(n, n_act)
    best = np.argmax(q_online, axis=1)  # first maximum, i.e. lowest level
    q_target = np_forward(theta_tgt, sizes, flat).reshape(n, n_act)
    bootstrap = q_target[np.arange(n), best]
    return np.where(terminal, rewards, rewards + gamma * bootstrap)


def np_adam_update(theta, grad, m, v, t, lr, beta1, beta2, eps):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    theta -= lr * mhat / (np.sqrt(vhat) + eps)


def np_train_batches(theta, theta_tgt, m, v, step, sizes, states, actions, rewards,
                     next_states, terminal, action_values, order, batch_size,
                     gamma, lr, beta1, beta2, eps, sync_every, batch_counter):
    n = order.shape[0]
    n_batches = (n + batch_size - 1) // batch_size
    losses = np.empty(n_batches)
    for k in range(n_batches):
        idx = order[k * batch_size:(k + 1) * batch_size]
        y = np_ddqn_targets(theta, theta_tgt, sizes, rewards[idx], next_states[idx],
                            terminal[idx], action_values, gamma)
        x = np.concatenate([states[idx], action_values[actions[idx]][:, None]], axis=1)
        loss, grad = np_loss_grad(theta, sizes, x, y)
        if not np.isfinite(loss):
            losses[k] = loss
            return losses[:k + 1], step, batch_counter
        losses[k] = loss
        step += 1
        np_adam_update(theta, grad, m, v, step, lr, beta1, beta2, eps)
        batch_counter += 1
        if batch_counter % sync_every == 0:
            theta_tgt[:] = theta
    return losses, step, batch_counter


# ---------------------------------------------------------------------------
# float network: numba path


@_njit
def _nb_forward_one(theta, sizes, x, acts):
    # acts holds every layer's activations back to back, input first
    n_layers = sizes.shape[0] - 1
    for j in range(sizes[0]):
        acts[j] = x[j]
    a_off = 0
    p_off = 0
    for li in range(n_layers):
        n_in = sizes[li]
        n_out = sizes[li + 1]
        b_off = p_off + n_out * n_in
        o_off = a_off + n_in
        for o in range(n_out):
            s = theta[b_off + o]
            row = p_off + o * n_in
            for j in range(n_in):
                s += theta[row + j] * acts[a_off + j]
            if li < n_layers - 1 and s < 0.0:
                s = 0.0
            acts[o_off + o] = s
        a_off = o_off
        p_off = b_off + n_out
    return acts[a_off]


@_njit
def nb_forward(theta, sizes, x):
    n = x.shape[0]
    out = np.empty(n)
    acts = np.empty(sizes.sum())
    for i in range(n):
        out[i] = _nb_forward_one(theta, sizes, x[i], acts)
    return out


@_njit
def nb_q_values(theta, sizes, state, action_values):
    d = state.shape[0]
    n_act = action_values.shape[0]
    acts = np.empty(sizes.sum())
    x = np.empty(d + 1)
    for j in range(d):
        x[j] = state[j]
    out = np.empty(n_act)
    for a in range(n_act):
        x[d] = action_values[a]
        out[a] = _nb_forward_one(theta, sizes, x, acts)
    return out


@_njit
def _nb_accum_grad(theta, sizes, acts, dq, grad, delta, delta_prev):
    # backprop a single sample whose activations are in acts
    n_layers = sizes.shape[0] - 1
    total_act = acts.shape[0]
    p_end = theta.shape[0]
    a_end = total_act
    delta[0] = dq
    for li in range(n_layers - 1, -1, -1):
        n_in = sizes[li]
        n_out = sizes[li + 1]
        b_off = p_end - n_out
        w_off = b_off - n_out * n_in
        in_off = a_end - n_out - n_in
        for o in range(n_out):
            d = delta[o]
            grad[b_off + o] += d
            row = w_off + o * n_in
            for j in range(n_in):
                grad[row + j] += d * acts[in_off + j]
        if li > 0:
            for j in range(n_in):
                if acts[in_off + j] > 0.0:
                    s = 0.0
                    for o in range(n_out):
                        s += theta[w_off + o * n_in + j] * delta[o]
                    delta_prev[j] = s
                else:
                    delta_prev[j] = 0.0
            for j in range(n_in):
                delta[j] = delta_prev[j]
        p_end = w_off
        a_end = a_end - n_out


@_njit
def nb_loss_grad(theta, sizes, x, y):
    n = x.shape[0]
    acts = np.empty(sizes.sum())
    grad = np.zeros(theta.shape[0])
    width = sizes.max()
    delta = np.empty(width)
    delta_prev = np.empty(width)
    loss = 0.0
    for i in range(n):
        q = _nb_forward_one(theta, sizes, x[i], acts)
        err = y[i] - q
        loss += err * err
        _nb_accum_grad(theta, sizes, acts, -2.0 * err / n, grad, delta, delta_prev)
    return loss / n, grad


@_njit
def nb_ddqn_targets(theta, theta_tgt, sizes, rewards, next_states, terminal, action_values, gamma):
    n, d = next_states.shape
    n_act = action_values.shape[0]
    acts = np.empty(sizes.sum())
    x = np.empty(d + 1)
    out = np.empty(n)
    for i in range(n):
        if terminal[i]:
            out[i] = rewards[i]
            continue
        for j in range(d):
            x[j] = next_states[i, j]
        best = 0
        best_q = -np.inf
        for a in range(n_act):
            x[d] = action_values[a]
            q = _nb_forward_one(theta, sizes, x, acts)
            if q > best_q:
                best_q = q
                best = a
        x[d] = action_values[best]
        out[i] = rewards[i] + gamma * _nb_forward_one(theta_tgt, sizes, x, acts)
    return out


@_njit
def nb_adam_update(theta, grad, m, v, t, lr, beta1, beta2, eps):
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for i in range(theta.shape[0]):
        g = grad[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * g
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
        theta[i] -= lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)


@_njit
def nb_train_batches(theta, theta_tgt, m, v, step, sizes, states, actions, rewards,
                     next_states, terminal, action_values, order, batch_size,
                     gamma, lr, beta1, beta2, eps, sync_every, batch_counter):
    n = order.shape[0]
    d = states.shape[1]
    n_batches = (n + batch_size - 1) // batch_size
    losses = np.empty(n_batches)
    x = np.empty((batch_size, d + 1))
    for k in range(n_batches):
        lo = k * batch_size
        hi = min(n, lo + batch_size)
        idx = order[lo:hi]
        y = nb_ddqn_targets(theta, theta_tgt, sizes, rewards[idx], next_states[idx],
                            terminal[idx], action_values, gamma)
        xb = x[:hi - lo]
        for r in range(hi - lo):
            t = idx[r]
            for j in range(d):
                xb[r, j] = states[t, j]
            xb[r, d] = action_values[actions[t]]
        loss, grad = nb_loss_grad(theta, sizes, xb, y)
        losses[k] = loss
        if not np.isfinite(loss):
            return losses[:k + 1], step, batch_counter
        step += 1
        nb_adam_update(theta, grad, m, v, step, lr, beta1, beta2, eps)
        batch_counter += 1
        if batch_counter % sync_every == 0:
            theta_tgt[:] = theta
    return losses, step, batch_counter


# ---------------------------------------------------------------------------
# integer network


def np_rescale(acc):
    """``round_half_away(acc * 10 / 2**30)`` in pure int64 arithmetic."""
    acc = np.asarray(acc, dtype=np.int64)
    mag = np.abs(acc)
    hi = mag >> Q_SHIFT
    lo = mag & _Q_MASK
    out = hi * Q_DIV + ((lo * Q_DIV + _Q_HALF) >> Q_SHIFT)
    return np.where(acc < 0, -out, out)


def np_int_forward(params, sizes, x):
    """Integer forward pass over a batch ``x`` of shape ``(n, sizes[0])``."""
    a = np.atleast_2d(np.asarray(x, dtype=np.int64))
    off = 0
    n_layers = len(sizes) - 1
    for li in range(n_layers):
        n_in, n_out = int(sizes[li]), int(sizes[li + 1])
        w = params[off:off + n_out * n_in].reshape(n_out, n_in).astype(np.int64)
        off += n_out * n_in
        b = params[off:off + n_out].astype(np.int64)
        off += n_out
        a = np_rescale(a @ w.T) + b
        if li < n_layers - 1:
            a = np.maximum(a, 0)
    return a[:, 0]


@_njit
def _nb_rescale(acc):
    neg = acc < 0
    mag = -acc if neg else acc
    out = (mag >> 30) * 10 + (((mag & 1073741823) * 10 + 536870912) >> 30)
    return -out if neg else out


@_njit
def _nb_int_forward_one(params, sizes, x, acts):
    n_layers = sizes.shape[0] - 1
    for j in range(sizes[0]):
        acts[j] = x[j]
    a_off = 0
    p_off = 0
    for li in range(n_layers):
        n_in = sizes[li]
        n_out = sizes[li + 1]
        b_off = p_off + n_out * n_in
        o_off = a_off + n_in
        for o in range(n_out):
            acc = np.int64(0)
            row = p_off + o * n_in
            for j in range(n_in):
                acc += np.int64(params[row + j]) * acts[a_off + j]
            s = _nb_rescale(acc) + np.int64(params[b_off + o])
            if li < n_layers - 1 and s < 0:
                s = np.int64(0)
            acts[o_off + o] = s
        a_off = o_off
        p_off = b_off + n_out
    return acts[a_off]


@_njit
def nb_int_forward(params, sizes, x):
    n = x.shape[0]
    out = np.empty(n, dtype=np.int64)
    acts = np.empty(sizes.sum(), dtype=np.int64)
    for i in range(n):
        out[i] = _nb_int_forward_one(params, sizes, x[i], acts)
    return out


@_njit
def nb_int_q_values(params, sizes, state_q, action_q):
    d = state_q.shape[0]
    n_act = action_q.shape[0]
    acts = np.empty(sizes.sum(), dtype=np.int64)
    x = np.empty(d + 1, dtype=np.int64)
    for j in range(d):
        x[j] = state_q[j]
    out = np.empty(n_act, dtype=np.int64)
    for a in range(n_act):
        x[d] = action_q[a]
        out[a] = _nb_int_forward_one(params, sizes, x, acts)
    return out


def np_int_q_values(params, sizes, state_q, action_q):
    n_act = action_q.shape[0]
    x = np.empty((n_act, state_q.shape[0] + 1), dtype=np.int64)
    x[:, :-1] = state_q
    x[:, -1] = action_q
    return np_int_forward(params, sizes, x)


# ---------------------------------------------------------------------------
# dispatch

if USE_JIT:
    forward = nb_forward
    loss_grad = nb_loss_grad
    q_values = nb_q_values
    ddqn_targets = nb_ddqn_targets
    train_batches = nb_train_batches
    int_forward = nb_int_forward
    int_q_values = nb_int_q_values
else:
    forward = np_forward
    loss_grad = np_loss_grad
    q_values = np_q_values
    ddqn_targets = np_ddqn_targets
    train_batches = np_train_batches
    int_forward = np_int_forward
    int_q_values = np_int_q_values
