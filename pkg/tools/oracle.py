"""Independent reference values frozen into the test suite.

Nothing here imports ``metastab``.  Potentials are written in closed form,
roots are found by a dense sign-change scan refined with mpmath bisection,
barriers by grid maxima, and closed classes by brute-force reachability.

Run ``python tools/oracle.py`` to print every value.
"""

import mpmath as mp
import numpy as np

mp.mp.dps = 40
TWO_PI = 2 * mp.pi


# --- landscape L2: S = cos(4 pi x)/(4 pi) + 0.05 sin(2 pi x), a = 1 ----------

def S2(x):
    return mp.cos(4 * mp.pi * x) / (4 * mp.pi) + mp.mpf("0.05") * mp.sin(TWO_PI * x)


def dS2(x):
    return -mp.sin(4 * mp.pi * x) + mp.mpf("0.1") * mp.pi * mp.cos(TWO_PI * x)


def d2S2(x):
    return -4 * mp.pi * mp.cos(4 * mp.pi * x) - mp.mpf("0.2") * mp.pi ** 2 * mp.sin(TWO_PI * x)


def bisect(f, lo, hi, tol=mp.mpf("1e-30")):
    lo, hi = mp.mpf(lo), mp.mpf(hi)
    flo = f(lo)
    while hi - lo > tol:
        mid = (lo + hi) / 2
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return (lo + hi) / 2


def zeros(f, n=4096 * 3):
    xs = np.linspace(0.0, 1.0, n + 1)
    vals = [f(mp.mpf(x)) for x in xs]
    return [bisect(f, xs[i], xs[i + 1]) for i in range(n) if (vals[i] > 0) != (vals[i + 1] > 0)]


def level1(S, d2S, mins, sads):
    """Escape heights and Eyring-Kramers rates for alternating saddle/minimum lists
    with ``sads[k] < mins[k] < sads[k+1]`` (indices taken periodically)."""
    N = len(mins)
    out = []
    for k in range(N):
        left, right = sads[k], sads[(k + 1) % N] + (1 if k + 1 == N else 0)
        hm = S(left) - S(mins[k])
        hp = S(right) - S(mins[k])
        out.append((hm, hp, mp.sqrt(d2S(mins[k]) * -d2S(left)) / TWO_PI,
                    mp.sqrt(d2S(mins[k]) * -d2S(right)) / TWO_PI))
    return out


def closed_classes(rates_right, rates_left, lo=-4, hi=8):
    """Closed classes among states ``lo..hi`` of a periodic nearest-neighbour
    chain, found by explicit reachability.  States touching the window edge
    are dropped."""
    u = len(rates_right)
    states = range(lo, hi + 1)

    def succ(k):
        out = []
        if rates_right[k % u] > 0:
            out.append(k + 1)
        if rates_left[k % u] > 0:
            out.append(k - 1)
        return out

    def reach(k):
        seen, todo = {k}, [k]
        while todo:
            for j in succ(todo.pop()):
                if lo <= j <= hi and j not in seen:
                    seen.add(j)
                    todo.append(j)
        return seen

    R = {k: reach(k) for k in states}
    closed = set()
    for k in states:
        if all(k in R[j] for j in R[k]) and all(lo < j < hi for j in R[k]):
            closed.add(tuple(sorted(R[k])))
    return sorted(closed)


def grid_max(a, b, n=2_000_001):
    """Max of the L2 potential on ``[a, b]``: grid argmax polished by bisection on S'."""
    xs = np.linspace(a, b, n)
    i = int(np.argmax(S_np(xs)))
    if 0 < i < n - 1:
        return S2(bisect(dS2, xs[i - 1], xs[i + 1]))
    return S2(mp.mpf(xs[i]))


def S_np(x):
    return np.cos(4 * np.pi * x) / (4 * np.pi) + 0.05 * np.sin(2 * np.pi * x)


def K_grid(a, b, n=2_000_001):
    """``min(sup_{y<=x} S(x)-S(y), sup_{y<=x} S(y)-S(x))`` on a grid."""
    xs = np.linspace(a, b, n)
    s = S_np(xs)
    up = np.max(s - np.minimum.accumulate(s))
    down = np.max(np.maximum.accumulate(s) - s)
    return min(up, down)


# --- asymmetric landscape with two tied saddles of different curvature -------
# S = cos(4 pi x)/(4 pi) + 0.05 sin(2 pi x) + alpha cos(6 pi x) + beta cos(2 pi x)

ALPHA = mp.mpf("0.01")


def make_tied(beta):
    def S(x):
        return S2(x) + ALPHA * mp.cos(6 * mp.pi * x) + beta * mp.cos(TWO_PI * x)

    def dS(x):
        return dS2(x) - 6 * mp.pi * ALPHA * mp.sin(6 * mp.pi * x) - TWO_PI * beta * mp.sin(TWO_PI * x)

    def d2S(x):
        return (d2S2(x) - 36 * mp.pi ** 2 * ALPHA * mp.cos(6 * mp.pi * x)
                - 4 * mp.pi ** 2 * beta * mp.cos(TWO_PI * x))
    return S, dS, d2S


def saddle_gap(beta):
    S, dS, d2S = make_tied(beta)
    a = bisect(dS, -0.1, 0.15)
    b = bisect(dS, 0.35, 0.6)
    return S(a) - S(b)


def main():
    print("== L2 ==")
    b2 = lambda x: -dS2(x)  # noqa: E731
    z = zeros(b2)
    mins = [x for x in z if d2S2(x) > 0]
    sads = [x for x in z if d2S2(x) < 0]
    print("minima", [mp.nstr(x, 17) for x in mins])
    print("saddles", [mp.nstr(x, 17) for x in sads])
    S0 = S2(0)
    S = lambda x: S2(x) - S0  # noqa: E731
    print("S(min)", [mp.nstr(S(x), 17) for x in mins], "S(sad)", [mp.nstr(S(x), 17) for x in sads])
    print("S''(min)", [mp.nstr(d2S2(x), 17) for x in mins])
    print("S''(sad)", [mp.nstr(d2S2(x), 17) for x in sads])
    lv = level1(S, d2S2, mins, sads)
    for k, (hm, hp, rl, rr) in enumerate(lv):
        print(f"k={k} h-={mp.nstr(hm, 17)} h+={mp.nstr(hp, 17)} EK left={mp.nstr(rl, 17)} right={mp.nstr(rr, 17)}")
    H1 = min(min(hm, hp) for hm, hp, _, _ in lv)
    print("H1", mp.nstr(H1, 17))
    tie = lambda h: abs(h - H1) <= 1e-9 * 0.1  # noqa: E731
    rr = [float(r) if tie(hp) else 0.0 for (_, hp, _, r) in lv]
    rl = [float(r) if tie(hm) else 0.0 for (hm, _, r, _) in lv]
    print("rates right", rr, "left", rl)
    print("closed classes", closed_classes(rr, rl))
    # level 2: the deep minimum alone; both saddles of the shallow well tie by the
    # reflection x -> 1/2 - x that leaves S2 invariant
    deep = max(range(len(mins)), key=lambda k: -S(mins[k]))
    md = mins[deep]
    top = max(S(s) for s in sads)
    H2 = top - S(md)
    pi2 = mp.sqrt(TWO_PI / d2S2(md))
    sig2 = sum(mp.sqrt(TWO_PI / -d2S2(s)) for s in sads)
    print("deep", mp.nstr(md, 17), "H2", mp.nstr(H2, 17), "pi2", mp.nstr(pi2, 17),
          "sigma2", mp.nstr(sig2, 17), "rate2", mp.nstr(1 / (pi2 * sig2), 17))
    print("theta2(0.05)", mp.nstr(mp.exp(H2 / mp.mpf("0.05")), 17))
    print("barrier(deep, shallow) grid", mp.nstr(grid_max(0.25, 0.75) - S0, 17))
    print("K(0.25, 0.75) grid", repr(K_grid(0.25, 0.75)))
    print("K(0.1, 0.9) grid", repr(K_grid(0.1, 0.9)))
    r0 = H1 / 4
    for m in mins:
        lo = bisect(lambda y: S(y) - S(m) - r0, m - mp.mpf("0.24"), m)
        hi = bisect(lambda y: S(y) - S(m) - r0, m, m + mp.mpf("0.22"))
        lo, hi = max(lo, m - r0), min(hi, m + r0)
        print("well r0=H1/4 around", mp.nstr(m, 8), ":", mp.nstr(lo, 17), mp.nstr(hi, 17))

    print("== tied asymmetric saddles ==")
    beta = bisect(saddle_gap, -0.03, 0.0, tol=mp.mpf("1e-25"))
    S, dS, d2S = make_tied(beta)
    zs = zeros(lambda x: -dS(x))
    smin = [x for x in zs if d2S(x) > 0]
    ssad = [x for x in zs if d2S(x) < 0]
    print("beta", mp.nstr(beta, 25))
    print("b.cos", [mp.nstr(-0.1 * mp.pi, 20), 0, 0])
    print("b.sin", [mp.nstr(TWO_PI * beta, 20), 1, mp.nstr(6 * mp.pi * ALPHA, 20)])
    print("minima", [mp.nstr(x, 17) for x in smin], "saddles", [mp.nstr(x, 17) for x in ssad])
    print("S(sad)", [mp.nstr(S(x) - S(0), 17) for x in ssad])
    c = [1 / mp.sqrt(-d2S(s)) for s in ssad]
    print("curvatures", [mp.nstr(d2S(s), 17) for s in ssad])
    print("w (mass right of the left saddle)", mp.nstr(c[0] / (c[0] + c[1]), 17))


if __name__ == "__main__":
    main()
