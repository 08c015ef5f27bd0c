"""Straight-line per-layer summation of params and MACs.

Written directly from docs/cost_model.md without touching mogen.cost_model,
so the two can check each other.
"""


def _div8(v):
    new_v = max(8, int(v + 4) // 8 * 8)
    if new_v < 0.9 * v:
        new_v += 8
    return new_v


def nb201_totals(edge_ops, classes=20):
    params = macs = 0
    # stem
    params += 3 * 16 * 9 + 2 * 16
    macs += 3 * 16 * 9 * 32 * 32
    targets = [1, 2, 2, 3, 3, 3]
    prev_c, h = 16, 32
    for stage, c in enumerate((16, 32, 64)):
        if stage:
            h //= 2
            params += prev_c * c * 9 + 2 * c + c * c * 9 + 2 * c + prev_c * c
            macs += prev_c * c * 9 * h * h + c * c * 9 * h * h
            macs += 4 * prev_c * h * h + prev_c * c * h * h + c * h * h
        for _ in range(5):
            fan_in = {1: 0, 2: 0, 3: 0}
            for op, dst in zip(edge_ops, targets):
                if op == "conv1x1":
                    params += c * c + 2 * c
                    macs += c * c * h * h
                elif op == "conv3x3":
                    params += 9 * c * c + 2 * c
                    macs += 9 * c * c * h * h
                elif op == "avgpool3x3":
                    macs += 9 * c * h * h
                if op != "zeroise":
                    fan_in[dst] += 1
            for n in fan_in.values():
                if n > 1:
                    macs += (n - 1) * c * h * h
        prev_c = c
    params += 2 * 64 + 64 * classes + classes
    macs += 64 * 8 * 8 + 64 * classes
    return params, macs


def mbv3_totals(width_mult, stages, classes=20):
    params = macs = 0
    stem = _div8(16 * width_mult)
    h = 112
    params += 27 * stem + 2 * stem
    macs += 27 * stem * h * h
    params += 9 * stem + 2 * stem + stem * stem + 2 * stem
    macs += 9 * stem * h * h + stem * stem * h * h + stem * h * h
    c = stem
    widths = (24, 40, 80, 112, 160)
    strides = (2, 2, 2, 1, 2)
    se_on = (False, True, False, True, True)
    for s, blocks in enumerate(stages):
        out_c = _div8(widths[s] * width_mult)
        for j, (e, k) in enumerate(blocks):
            stride = strides[s] if j == 0 else 1
            mid = _div8(round(c * e))
            h_out = (h + stride - 1) // stride
            params += c * mid + 2 * mid
            macs += c * mid * h * h
            params += mid * k * k + 2 * mid
            macs += mid * k * k * h_out * h_out
            if se_on[s]:
                m = _div8(mid // 4)
                params += mid * m + m + m * mid + mid
                macs += 2 * mid * h_out * h_out + 2 * mid * m
            params += mid * out_c + 2 * out_c
            macs += mid * out_c * h_out * h_out
            if stride == 1 and c == out_c:
                macs += out_c * h_out * h_out
            c, h = out_c, h_out
    fe = _div8(960 * width_mult)
    fm = _div8(1280 * width_mult)
    params += c * fe + 2 * fe + fe * fm + fm * classes + classes
    macs += c * fe * h * h + fe * h * h + fe * fm + fm * classes
    return params, macs
