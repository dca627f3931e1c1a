#!/usr/bin/env python3
"""Independent AC power flow reference solver (numpy).

Parses the gridcascade case schema, runs Newton-Raphson in polar form with
PV->PQ reactive-limit switching (one switching pass after each converged
inner solve, warm-continued), and prints the solution. The frozen voltage
references in tests/acceptance.cpp were recorded with this script; rerun it
after touching the case fixtures:

    python3 tests/reference/acpf_reference.py
"""
import sys
import numpy as np


def parse_case(path):
    base_mva = None
    tables = {"bus": [], "gen": [], "branch": [], "gencost": []}
    section = None
    for raw in open(path):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("baseMVA"):
            base_mva = float(line.split()[1])
            continue
        if line.startswith("["):
            section = line.strip("[]")
            continue
        tables[section].append([float(t) for t in line.split()])
    return base_mva, tables


class Case:
    def __init__(self, path):
        self.base, t = parse_case(path)
        bus = np.array(t["bus"])
        self.busid = bus[:, 0].astype(int)
        self.id2idx = {b: i for i, b in enumerate(self.busid)}
        self.bustype = bus[:, 1].astype(int)
        self.pd, self.qd = bus[:, 2], bus[:, 3]
        self.gs, self.bs = bus[:, 4], bus[:, 5]
        self.vm0, self.va0 = bus[:, 6], bus[:, 7]
        g = np.array(t["gen"])
        self.gbus = np.array([self.id2idx[int(x)] for x in g[:, 0]])
        self.pbase, self.pmax, self.pmin = g[:, 1], g[:, 2], g[:, 3]
        self.qmax, self.qmin = g[:, 4], g[:, 5]
        br = np.array(t["branch"])
        self.f = np.array([self.id2idx[int(x)] for x in br[:, 0]])
        self.t = np.array([self.id2idx[int(x)] for x in br[:, 1]])
        self.r, self.x, self.b = br[:, 2], br[:, 3], br[:, 4]
        self.tap = np.where(br[:, 5] == 0.0, 1.0, br[:, 5])
        self.shift = br[:, 6]
        self.status = br[:, 7].astype(int)
        self.n = len(self.busid)


def build_ybus(c, status=None):
    if status is None:
        status = c.status
    n = c.n
    Y = np.zeros((n, n), dtype=complex)
    ys = 1.0 / (c.r + 1j * c.x)
    for k in range(len(c.f)):
        if not status[k]:
            continue
        f, t = c.f[k], c.t[k]
        tap = c.tap[k] * np.exp(1j * np.deg2rad(c.shift[k]))
        yk = ys[k]
        bc = 1j * c.b[k] / 2
        Y[f, f] += (yk + bc) / (c.tap[k] ** 2)
        Y[f, t] += -yk / np.conj(tap)
        Y[t, f] += -yk / tap
        Y[t, t] += yk + bc
    Y += np.diag((c.gs + 1j * c.bs) / c.base)
    return Y


def solve_nr(c, pg_set=None, tol=1e-8, max_iter=20, enforce_q=True, verbose=False):
    """NR with Q-limit switching. pg_set: per-generator P setpoint (MW),
    default = pbase. Returns (converged, iters, vm, va, slack_p_mw, Y)."""
    if pg_set is None:
        pg_set = c.pbase.copy()
    n = c.n
    Y = build_ybus(c)
    # aggregate generation per bus
    pg_bus = np.zeros(n)
    qmin_bus = np.zeros(n)
    qmax_bus = np.zeros(n)
    hasgen = np.zeros(n, dtype=bool)
    for i, gb in enumerate(c.gbus):
        pg_bus[gb] += pg_set[i]
        qmin_bus[gb] += c.qmin[i]
        qmax_bus[gb] += c.qmax[i]
        hasgen[gb] = True
    slack = int(np.where(c.bustype == 3)[0][0])
    is_pv = (c.bustype == 2) & hasgen
    psched = (pg_bus - c.pd) / c.base
    qsched = -c.qd / c.base  # PV buses: Q free; PQ gen buses keep 0 gen Q
    vset = c.vm0.copy()

    vm = np.ones(n)
    vm[is_pv | (np.arange(n) == slack)] = vset[is_pv | (np.arange(n) == slack)]
    va = np.zeros(n)
    qfix = np.full(n, np.nan)  # clamped Q for switched buses

    total_iters = 0
    for outer in range(10):
        pv = list(np.where(is_pv)[0])
        pq = [i for i in range(n) if i != slack and i not in pv]
        qs = qsched.copy()
        for i in range(n):
            if not np.isnan(qfix[i]):
                qs[i] = (qfix[i] - c.qd[i]) / c.base
        converged = False
        for it in range(max_iter):
            V = vm * np.exp(1j * va)
            S = V * np.conj(Y @ V)
            dp = psched - S.real
            dq = qs - S.imag
            mism = np.concatenate([dp[[i for i in range(n) if i != slack]], dq[pq]])
            if np.max(np.abs(mism)) < tol:
                converged = True
                break
            total_iters += 1
            # Jacobian
            nb = n
            dS_dVa = np.zeros((nb, nb), dtype=complex)
            dS_dVm = np.zeros((nb, nb), dtype=complex)
            Ibus = Y @ V
            diagV = np.diag(V)
            diagI = np.diag(Ibus)
            diagVnorm = np.diag(V / np.abs(V))
            dS_dVa = 1j * diagV @ np.conj(diagI - Y @ diagV)
            dS_dVm = diagV @ np.conj(Y @ diagVnorm) + np.conj(diagI) @ diagVnorm
            nonslack = [i for i in range(n) if i != slack]
            J11 = dS_dVa[np.ix_(nonslack, nonslack)].real
            J12 = dS_dVm[np.ix_(nonslack, pq)].real
            J21 = dS_dVa[np.ix_(pq, nonslack)].imag
            J22 = dS_dVm[np.ix_(pq, pq)].imag
            J = np.block([[J11, J12], [J21, J22]])
            try:
                dx = np.linalg.solve(J, mism)
            except np.linalg.LinAlgError:
                return False, total_iters, vm, va, np.nan, Y
            va[nonslack] += dx[:len(nonslack)]
            vm[pq] += dx[len(nonslack):]
        if not converged:
            return False, total_iters, vm, va, np.nan, Y
        if not enforce_q:
            break
        # Q-limit check at PV buses
        V = vm * np.exp(1j * va)
        S = V * np.conj(Y @ V)
        qg = S.imag * c.base + c.qd  # generator reactive output per bus
        switched = False
        for i in np.where(is_pv)[0]:
            if qg[i] > qmax_bus[i] + 1e-9:
                qfix[i] = qmax_bus[i]
                is_pv[i] = False
                switched = True
            elif qg[i] < qmin_bus[i] - 1e-9:
                qfix[i] = qmin_bus[i]
                is_pv[i] = False
                switched = True
        if not switched:
            break
    V = vm * np.exp(1j * va)
    S = V * np.conj(Y @ V)
    slack_p = S.real[slack] * c.base + c.pd[slack]
    return True, total_iters, vm, va, slack_p, Y


def branch_flows(c, vm, va, Y=None, status=None):
    if status is None:
        status = c.status
    V = vm * np.exp(1j * va)
    ys = 1.0 / (c.r + 1j * c.x)
    sf = np.zeros(len(c.f))
    st = np.zeros(len(c.f))
    for k in range(len(c.f)):
        if not status[k]:
            continue
        f, t = c.f[k], c.t[k]
        tap = c.tap[k] * np.exp(1j * np.deg2rad(c.shift[k]))
        yk = ys[k]
        bc = 1j * c.b[k] / 2
        yff = (yk + bc) / (c.tap[k] ** 2)
        yft = -yk / np.conj(tap)
        ytf = -yk / tap
        ytt = yk + bc
        If = yff * V[f] + yft * V[t]
        It = ytf * V[f] + ytt * V[t]
        sf[k] = abs(V[f] * np.conj(If)) * c.base
        st[k] = abs(V[t] * np.conj(It)) * c.base
    return sf, st


def main():
    import os
    root = os.path.join(os.path.dirname(__file__), "..", "..", "data")
    for path, limit in [(os.path.join(root, "case14.txt"), 200.0),
                        (os.path.join(root, "case118.txt"), 450.0)]:
        c = Case(path)
        ok, iters, vm, va, slack_p, Y = solve_nr(c)
        print(f"== {path}")
        print(f"converged={ok} iters={iters} slack_p={slack_p:.4f} MW")
        sf, st = branch_flows(c, vm, va)
        loading = np.maximum(sf, st) / limit
        print(f"max loading: {loading.max():.4f} at branch "
              f"{c.busid[c.f[loading.argmax()]]}-{c.busid[c.t[loading.argmax()]]}")
        over = np.where(loading > 1.0)[0]
        for k in over:
            print(f"  OVER: {c.busid[c.f[k]]}-{c.busid[c.t[k]]} {loading[k]:.3f}")
        if c.n <= 14:
            for i in range(c.n):
                print(f"bus {c.busid[i]}: vm={vm[i]:.6f} va={np.rad2deg(va[i]):+.4f}")
            print("loadings:", " ".join(f"{x:.4f}" for x in loading))
        else:
            print("vm[0:10]:", " ".join(f"{x:.5f}" for x in vm[:10]))
            lo, hi = vm.min(), vm.max()
            print(f"vm range: [{lo:.4f}, {hi:.4f}]")


if __name__ == "__main__":
    main()
