"""Shared test utilities: scalar-tape network evaluation and FD checks."""

import numpy as np

from cvnn import autodiff as ad


def tape_mlp_gradients(model, x, d):
    """Run a dense stack plus its loss on the scalar tape, element by element.

    Returns ``(loss_value, [(grad_w, grad_b), ...])`` with gradients in the
    optimizer convention, for cross-checking the layered recursion and the
    tensor training path.  Supports elementwise activations plus the
    ``cart_softmax`` and ``softmax_real_with_abs`` heads, and the ``ace`` /
    ``cce_real`` / ``complex_quadratic`` losses.
    """
    tape = ad.Tape()
    wvars = []
    for layer in model.layers:
        w = [[tape.var(v) for v in row] for row in layer.weights]
        b = [tape.var(v) for v in layer.bias]
        wvars.append((w, b))

    def softmax_vars(values):
        exps = [ad.exp(v) for v in values]
        total = exps[0]
        for e in exps[1:]:
            total = total + e
        return [e / total for e in exps]

    total = None
    batch = x.shape[0]
    for bi in range(batch):
        h = [tape.var(v) for v in x[bi]]
        for layer, (w, b) in zip(model.layers, wvars):
            pre = []
            for n in range(len(w)):
                acc = b[n]
                for m, wv in enumerate(w[n]):
                    acc = acc + wv * h[m]
                pre.append(acc)
            name = layer.activation.name
            if name == "cart_softmax":
                p_re = softmax_vars([ad.re(v) for v in pre])
                p_im = softmax_vars([ad.im(v) for v in pre])
                h = [p_re[i] + p_im[i] * 1j for i in range(len(pre))]
            elif name == "softmax_real_with_abs":
                h = softmax_vars([ad.absval(v) for v in pre])
            else:
                h = [layer.activation.scalar_apply(v) for v in pre]

        kind = model.loss_spec.kind
        if kind == "complex_quadratic":
            contrib = None
            for c in range(d.shape[1]):
                e = h[c] - complex(d[bi, c])
                term = e * ad.conj(e) * 0.5
                contrib = term if contrib is None else contrib + term
        else:
            contrib = None
            for c in range(d.shape[1]):
                if d[bi, c] != 1.0:
                    continue
                if kind == "cce_real":
                    term = ad.log(ad.clamp(ad.re(h[c]), 1e-7, 1 - 1e-7)) * -1.0
                else:  # two-part average cross-entropy
                    term = (
                        ad.log(ad.clamp(ad.re(h[c]), 1e-7, 1 - 1e-7))
                        + ad.log(ad.clamp(ad.im(h[c]), 1e-7, 1 - 1e-7))
                    ) * -0.5
                contrib = term if contrib is None else contrib + term
        total = contrib if total is None else total + contrib
    if model.loss_spec.kind != "complex_quadratic":
        total = total * (1.0 / batch)

    _, grads = ad.reverse_gradient(tape, total)
    out = []
    for w, b in wvars:
        gw = np.array([[grads[v.idx] for v in row] for row in w])
        gb = np.array([grads[v.idx] for v in b])
        out.append((gw, gb))
    return float(total.value.real), out


def fd_param_gradient(model, x, d, param, h=1e-6, training=False):
    """Central-difference gradient of the model loss w.r.t. one parameter."""
    from cvnn.losses import loss_value

    def value():
        return loss_value(model.loss_spec, model.forward(x, training=training), d)

    grad = np.zeros_like(param)
    it = np.nditer(param, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = param[i]
        param[i] = orig + h
        lp = value()
        param[i] = orig - h
        lm = value()
        gx = (lp - lm) / (2 * h)
        if np.iscomplexobj(param):
            param[i] = orig + 1j * h
            lip = value()
            param[i] = orig - 1j * h
            lim = value()
            grad[i] = gx + 1j * (lip - lim) / (2 * h)
        else:
            grad[i] = gx
        param[i] = orig
    return grad
