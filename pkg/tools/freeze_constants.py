"""Compute frozen oracle values for the test suite with mpmath.

Every number the tests compare against at tight tolerance is produced here by
an implementation-independent route: mpmath's besselk, findroot and diff at 40
significant digits.  Output is the literal content of tests/_frozen.py.

Run:  python tools/freeze_constants.py > tests/_frozen.py
"""

from mpmath import mp, mpf, besselk, sqrt, pi, exp, log, findroot, diff, erfc

mp.dps = 40


def k_half(w):
    return sqrt(pi / (2 * w)) * exp(-w)


def frac_moment(w, t):
    # E[A^t] for A inverse-Gaussian with mean 1, shape w.
    return besselk(t - mpf(1) / 2, w) / k_half(w)


def step_value(m, w, t):
    return log(m * frac_moment(w, t))


def critical_weight(m):
    m = mpf(m)
    return findroot(lambda w: m * frac_moment(w, mpf(1) / 2) - 1,
                    (mpf("1e-8"), mpf(20)), solver="anderson")


def tilt_and_rate(m, w):
    m, w = mpf(m), mpf(w)

    def fval(t):
        return step_value(m, w, t)

    def fprime(t):
        return diff(fval, t)

    t_star = findroot(lambda t: t * fprime(t) - fval(t),
                      (mpf("1e-9"), mpf(40)), solver="anderson")
    return t_star, -fprime(t_star)


def norm_cdf(z):
    return erfc(-z / sqrt(2)) / 2


def ig_cdf(x, a, lam):
    x, a, lam = mpf(x), mpf(a), mpf(lam)
    s = sqrt(lam / x)
    return norm_cdf(s * (x / a - 1)) + exp(2 * lam / a) * norm_cdf(-s * (x / a + 1))


def emit(name, value):
    print(f'{name} = "{mp.nstr(value, 32)}"')


print('"""Frozen oracle values, generated by tools/freeze_constants.py (mpmath, 40 dps).')
print()
print('Do not edit by hand; regenerate with  python tools/freeze_constants.py > tests/_frozen.py')
print('"""')
print()

print("CRITICAL_WEIGHT = {")
for m in ("1.5", "2", "3", "5"):
    print(f'    "{m}": "{mp.nstr(critical_weight(mpf(m)), 32)}",')
print("}")
print()

print("BESSEL_K = {")
for nu, w in [("0", "1"), ("1", "1"), ("2", "0.05"), ("0.3", "50"),
              ("-2.2", "7"), ("3", "12"), ("0.5", "2")]:
    val = besselk(mpf(nu), mpf(w))
    print(f'    ("{nu}", "{w}"): "{mp.nstr(val, 32)}",')
print("}")
print()

print("FRAC_MOMENT = {")
for w, t in [("0.5", "0.3"), ("1.0", "2.5"), ("0.03", "0.5"), ("2.0", "-0.7")]:
    val = frac_moment(mpf(w), mpf(t))
    print(f'    ("{w}", "{t}"): "{mp.nstr(val, 32)}",')
print("}")
print()

print("IG_CDF = {")
for x, a, lam in [("0.7", "1", "2"), ("3.0", "1", "0.5"), ("1.9", "2.5", "1.3"),
                  ("0.05", "1", "0.031"), ("40.0", "1", "0.031")]:
    print(f'    ("{x}", "{a}", "{lam}"): "{mp.nstr(ig_cdf(x, a, lam), 32)}",')
print("}")
print()

wc2 = critical_weight(2)
for m, rel, tag in [(2, "0.5", "M2_HALF"), (2, "2.0", "M2_DOUBLE"), (3, "0.7", "M3_07")]:
    w = critical_weight(m) * mpf(rel)
    t_star, rate = tilt_and_rate(m, w)
    print(f'TILT_{tag} = "{mp.nstr(t_star, 32)}"')
    print(f'RATE_{tag} = "{mp.nstr(rate, 32)}"')
print()

# Forward difference rate(w_c - h)/h at the h named in the slope check; the
# rate's curvature in w is large, so this differs visibly from the slope itself.
h = mpf("1e-3")
_, rate_h = tilt_and_rate(2, wc2 - h)
emit("FD_SLOPE_H1E3_M2", rate_h / h)
print()

# Slope of the decay rate in w at criticality, and the cube-root constants (m = 2).
m = mpf(2)
alpha = 2 + 1 / wc2 - 2 * m * besselk(1, wc2) / k_half(wc2)
half_log2 = diff(lambda t: frac_moment(wc2, t), mpf(1) / 2, 2)
sigma2 = 16 * m * half_log2
rho_c = (3 * pi**2 * sigma2 / 2) ** (mpf(1) / 3) / 2
emit("ALPHA_M2", alpha)
emit("HALF_LOG2_M2", half_log2)
emit("SIGMA2_M2", sigma2)
emit("RHO_C_M2", rho_c)
