"""Independent re-derivations used as test oracles."""

import math

import numpy as np

from hev_madrl.plant import Mode, PowertrainModel

MODEL = PowertrainModel.default()


def interp2(table, speed, torque):
    """Clamp-then-bilinear oracle: interpolate each torque row in speed, then across torque."""
    rows = np.array([np.interp(speed, table.speed_grid, row) for row in table.values])
    return float(np.interp(torque, table.torque_grid, rows))


def straight_line_step(soc, u1, u2, v, a):
    """Chained re-derivation of one traction tick (no braking, no speed clamps), written out flat."""
    m, g, f, rho, af, cd, rw = 1800.0, 9.81, 0.012, 1.205, 2.3, 0.30, 0.32
    i1, i2, tm1, tm2, te = 3.0, 8.0, 120.0, 280.0, 155.0
    u_oc, r, q, hf = 350.0, 0.15, 54.3, 43.5e3
    t_dem = (m * g * f + 0.5 * rho * af * cd * v ** 2 + m * a) * rw
    t_mot2 = min(u2 * tm2, t_dem / i2)
    t_gb = max(t_dem - i2 * t_mot2, 0.0) / i1
    t_mot1 = min(u1 * tm1, te - t_gb)
    w_mot2 = v / rw * i2
    n_mot2 = w_mot2 * 60.0 / (2.0 * math.pi)
    p_mot2 = t_mot2 * w_mot2 / interp2(MODEL.mg2_map, n_mot2, t_mot2)
    if t_gb > 0:
        n_eng = v / rw * i1 * 60.0 / (2.0 * math.pi)
    else:
        n_eng = 1000.0 + 1500.0 * t_mot1 / tm1
    t_eng = t_mot1 + t_gb
    p_eng = t_eng * n_eng * 2.0 * math.pi / 60.0
    p_mot1 = t_mot1 * n_eng * 2.0 * math.pi / 60.0 * interp2(MODEL.mg1_map, n_eng, t_mot1)
    fuel = interp2(MODEL.engine_map, n_eng, t_eng)
    p_batt = p_mot2 - p_mot1
    i = (u_oc - math.sqrt(u_oc ** 2 - 4 * r * p_batt)) / (2 * r)
    return {
        "soc": soc - i / (q * 3600.0),
        "p_batt": p_batt,
        "fuel_rate": fuel,
        "n_eng": n_eng,
        "t_eng": t_eng,
        "loss_eng": fuel * hf - p_eng,
        "loss_batt": r * i * i,
        "mode": Mode.PARALLEL if t_gb > 0 else Mode.SERIES,
    }
