"""Fast invariant checks behind ``sogpfm selftest``.

Each check returns ``(passed, detail)``; :func:`run_selftest` prints one
line per group.
"""

import numpy as np

from . import armsim
from .gp_oracle import BatchGPRegressor
from .kernel import KernelParams, gram_matrix, kernel_eval
from .sogp import SparseOnlineGPRegressor
from .trajgen import default_two_task_schedule


def check_kernel(rng):
    p = KernelParams(1.3, 0.04, tuple(rng.uniform(0.2, 2.0, 3)))
    X = rng.normal(size=(12, 3))
    K = gram_matrix(p, X)
    pairwise = np.array([[kernel_eval(p, a, b) for b in X] for a in X])
    ok = np.array_equal(K, pairwise) and np.array_equal(K, K.T) and np.linalg.eigvalsh(K).min() >= -1e-10
    return ok, f"min eig {np.linalg.eigvalsh(K).min():.2e}"


def check_batch_equivalence(rng):
    worst = 0.0
    for _ in range(5):
        d = int(rng.integers(1, 7))
        n = int(rng.integers(1, 31))
        X, y = rng.uniform(-2, 2, (n, d)), rng.normal(size=n)
        kw = dict(sigma_s2=1.0, sigma_n2=0.04, lengthscales=rng.uniform(0.2, 2.0, d))
        online = SparseOnlineGPRegressor(eps_tol=0.0, capacity=n, **kw).fit(X, y)
        batch = BatchGPRegressor(**kw).fit(X, y)
        T = rng.uniform(-2, 2, (20, d))
        m1, v1 = online.predict(T, return_std=True)
        m2, v2 = batch.predict(T, return_var=True)
        worst = max(worst, np.abs(m1 - m2).max(), np.abs(v1**2 - v2).max())
    return worst <= 1e-8, f"max deviation {worst:.2e}"


def check_deletion(rng):
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(5, 46))
        X = rng.uniform(-3, 3, (n, 4))
        model = SparseOnlineGPRegressor(eps_tol=0.0, capacity=n, lengthscales=0.5).fit(X, rng.normal(size=n))
        model.delete_index(int(rng.integers(model.n_basis)))
        direct = np.linalg.inv(gram_matrix(model.kernel_params_, model.basis_vectors_))
        worst = max(worst, np.abs(model.Q_ - direct).max())
    return worst <= 1e-8, f"max |Q - inv(K)| {worst:.2e}"


def _deleted_sequence(policy, h, X, y):
    model = SparseOnlineGPRegressor(capacity=8, eps_tol=0.01, policy=policy, forget_period=h,
                                    lengthscales=0.5).initialize(X.shape[1])
    seq = [r.deleted_index for r in (model.update(x, t) for x, t in zip(X, y)) if r.deleted_index is not None]
    return seq, model


def check_policy_limits(rng):
    X, y = rng.uniform(-3, 3, (200, 3)), rng.normal(size=200)
    ops, m_ops = _deleted_sequence("ops", 1, X, y)
    fs1, m_fs1 = _deleted_sequence("fs", 1, X, y)
    pis, m_pis = _deleted_sequence("pis", 1, X, y)
    fsinf, m_fsinf = _deleted_sequence("fs", 10**9, X, y)
    T = rng.uniform(-3, 3, (20, 3))
    ok = (ops == fs1 and pis == fsinf and len(ops) > 0
          and np.abs(m_ops.predict(T) - m_fs1.predict(T)).max() <= 1e-12
          and np.abs(m_pis.predict(T) - m_fsinf.predict(T)).max() <= 1e-12)
    return ok, f"{len(ops)} / {len(pis)} deletions compared"


def check_dynamics(rng):
    p = armsim.ArmParams()
    worst_rt, worst_skew = 0.0, 0.0
    for _ in range(200):
        s = armsim.ArmState(rng.uniform(-np.pi, np.pi, 2), rng.uniform(-3, 3, 2))
        tau = rng.uniform(-10, 10, 2)
        qdd = armsim.forward_dynamics(p, s, tau)
        worst_rt = max(worst_rt, np.abs(armsim.inverse_dynamics(p, s.q, s.qd, qdd) - tau).max())
        h = -p.m2 * p.l1 * p.lc2 * np.sin(s.q[1]) * s.qd[1]
        mdot = np.array([[2 * h, h], [h, 0.0]])
        worst_skew = max(worst_skew, abs(s.qd @ (mdot - 2 * armsim.coriolis_matrix(p, s.q, s.qd)) @ s.qd))
    return worst_rt <= 1e-10 and worst_skew <= 1e-8, f"round trip {worst_rt:.1e}, skew {worst_skew:.1e}"


def check_schedule(rng):
    sched = default_two_task_schedule()
    worst = 0.0
    for start in sched.starts[1:]:
        a, b = sched.eval(start - 1e-9), sched.eval(start)
        worst = max(worst, np.abs(a[0] - b[0]).max(), np.abs(a[1] - b[1]).max())
    return worst <= 1e-6, f"max seam jump {worst:.1e}"


CHECKS = (
    ("kernel", check_kernel),
    ("batch-equivalence", check_batch_equivalence),
    ("deletion-algebra", check_deletion),
    ("policy-limits", check_policy_limits),
    ("arm-dynamics", check_dynamics),
    ("schedule-continuity", check_schedule),
)


def run_selftest(seed=0, out=print):
    """Run every check group; returns True if all pass."""
    rng = np.random.default_rng(seed)
    all_ok = True
    for name, check in CHECKS:
        try:
            ok, detail = check(rng)
        except Exception as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= bool(ok)
        out(f"{'PASS' if ok else 'FAIL'}  {name:<20s} {detail}")
    return all_ok
