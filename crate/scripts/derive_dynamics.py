#!/usr/bin/env python3
"""Symbolic derivation of the pinned three-link biped with hip disc.

Derives D, C (Christoffel form), G, B and the total energy from the
Lagrangian, prints the closed forms hard-coded in
`crates/core/src/dynamics.rs`, and emits reference values used by the
Rust unit tests (`--reference`).

Coordinates q = (q_d, q_r, q_N):
  q_N  stance-leg angle from vertical, CCW positive
  q_r  swing-leg angle minus stance-leg angle
  q_d  disc angle relative to the bisector of the two legs

Run: python3 scripts/derive_dynamics.py [--reference]
"""

import sys

import sympy as sp

qd, qr, qN = sp.symbols("q_d q_r q_N", real=True)
dqd, dqr, dqN = sp.symbols("dq_d dq_r dq_N", real=True)
L, ml, lc, Il, mh, Jd, g = sp.symbols("L m_l l_c I_l m_h J_d g", positive=True)

q = sp.Matrix([qd, qr, qN])
dq = sp.Matrix([dqd, dqr, dqN])


def e(th):
    """Unit vector from foot to hip for a leg at absolute angle th."""
    return sp.Matrix([-sp.sin(th), sp.cos(th)])


def vel(p):
    return p.jacobian(q) * dq


th1 = qN
th2 = qN + qr
hip = L * e(th1)
stance_com = (L - lc) * e(th1)
swing_com = hip - lc * e(th2)
disc_angle = qd + qN + qr / 2

T = (
    sp.Rational(1, 2) * ml * (vel(stance_com).T * vel(stance_com))[0]
    + sp.Rational(1, 2) * Il * dqN**2
    + sp.Rational(1, 2) * mh * (vel(hip).T * vel(hip))[0]
    + sp.Rational(1, 2) * Jd * (sp.Matrix([disc_angle]).jacobian(q) * dq)[0] ** 2
    + sp.Rational(1, 2) * ml * (vel(swing_com).T * vel(swing_com))[0]
    + sp.Rational(1, 2) * Il * (dqN + dqr) ** 2
)
T = sp.simplify(T)
P = g * (ml * stance_com[1] + mh * hip[1] + ml * swing_com[1])

D = sp.simplify(sp.hessian(T, dq))
G = sp.simplify(sp.Matrix([sp.diff(P, s) for s in q]))

C = sp.zeros(3, 3)
for k in range(3):
    for j in range(3):
        C[k, j] = sp.simplify(
            sum(
                sp.Rational(1, 2)
                * (sp.diff(D[k, j], q[i]) + sp.diff(D[k, i], q[j]) - sp.diff(D[i, j], q[k]))
                * dq[i]
                for i in range(3)
            )
        )

# u = (u_d, u_r): u_d acts between disc and the leg bisector, u_r between the legs.
# Virtual work u_d*dq_d + u_r*dq_r.
B = sp.Matrix([[1, 0], [0, 1], [0, 0]])

swing_foot = hip - L * e(th2)
p2 = sp.simplify(swing_foot[1])


def dump():
    print("D =")
    sp.pprint(D)
    print("C =")
    sp.pprint(C)
    print("G =")
    sp.pprint(G)
    print("B =")
    sp.pprint(B)
    print("p2 =", p2)
    print("energy =", sp.simplify(T + P))
    # Passivity check: dq^T (dD - 2C) dq == 0
    dD = sp.zeros(3, 3)
    for a in range(3):
        for b in range(3):
            dD[a, b] = sum(sp.diff(D[a, b], q[i]) * dq[i] for i in range(3))
    print("passivity residual =", sp.simplify((dq.T * (dD - 2 * C) * dq)[0]))


DEFAULTS = {L: 1.0, ml: 5.0, lc: 0.5, Il: 5.0 / 12.0, mh: 10.0, Jd: 0.5, g: 9.81}


def reference():
    """Reference values frozen into the Rust tests."""
    pts = [
        ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0)),
        ((0.3, 0.5, -0.2), (1.0, -2.0, 0.7)),
        ((-1.1, -0.52, 0.26), (0.4, 1.5, -0.9)),
    ]
    for qv, dqv in pts:
        sub = dict(DEFAULTS)
        sub.update({qd: qv[0], qr: qv[1], qN: qv[2], dqd: dqv[0], dqr: dqv[1], dqN: dqv[2]})
        print(f"q = {qv}, dq = {dqv}")
        print("  D =", [[float(D[i, j].subs(sub)) for j in range(3)] for i in range(3)])
        print("  C =", [[float(C[i, j].subs(sub)) for j in range(3)] for i in range(3)])
        print("  G =", [float(x.subs(sub)) for x in G])
        print("  E =", float((T + P).subs(sub)))
        print("  sigma_N =", float((D[2, :] * dq)[0].subs(sub)))


if __name__ == "__main__":
    dump()
    if "--reference" in sys.argv:
        reference()
