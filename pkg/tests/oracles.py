"""Scalar-loop reference implementations, written independently of the
vectorised kernels they check."""
import math


def conv1d_loops(seq, filters, bias):
    length, dim = len(seq), len(seq[0])
    n_filters, width = len(filters), len(filters[0])
    out = []
    for t in range(length - width + 1):
        row = []
        for f in range(n_filters):
            acc = bias[f]
            for j in range(width):
                for d in range(dim):
                    acc += seq[t + j][d] * filters[f][j][d]
            row.append(acc)
        out.append(row)
    return out


def _sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def lstm_step_loops(x, h_prev, c_prev, wx, wh, b):
    """Gate order (input, forget, candidate, output)."""
    hidden = len(h_prev)
    pre = [[b[g][k] + sum(wx[g][k][d] * x[d] for d in range(len(x)))
            + sum(wh[g][k][m] * h_prev[m] for m in range(hidden))
            for k in range(hidden)] for g in range(4)]
    h, c = [], []
    for k in range(hidden):
        i, f, g, o = _sig(pre[0][k]), _sig(pre[1][k]), math.tanh(pre[2][k]), _sig(pre[3][k])
        ck = f * c_prev[k] + i * g
        c.append(ck)
        h.append(o * math.tanh(ck))
    return h, c
