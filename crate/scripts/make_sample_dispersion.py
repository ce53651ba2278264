#!/usr/bin/env python3
"""Regenerates the sample dispersion CSVs in data/materials/.

Dielectrics use published Sellmeier fits (fused silica: Malitson 1965;
rutile TiO2 ordinary ray: DeVore 1951; Si3N4: Luke 2015; MgF2 ordinary
ray: Dodge 1984). Silver uses a simple Drude model with textbook-level
parameters. Good enough for demos and integration tests; swap in
measured n,k tables for production datasets.
"""

import cmath
import os

OUT = os.path.join(os.path.dirname(__file__), "..", "data", "materials")
WL_NM = [380 + 5 * i for i in range(149)]  # 380..1120 nm


def sellmeier(wl_um, terms):
    s = 1.0
    for b, c in terms:
        s += b * wl_um**2 / (wl_um**2 - c**2)
    return s**0.5


def sio2(wl_um):
    return sellmeier(wl_um, [(0.6961663, 0.0684043),
                             (0.4079426, 0.1162414),
                             (0.8974794, 9.896161)]), 0.0


def tio2(wl_um):
    n2 = 5.913 + 0.2441 / (wl_um**2 - 0.0803)
    return n2**0.5, 0.0


def si3n4(wl_um):
    return sellmeier(wl_um, [(3.0249, 0.1353406),
                             (40314.0, 1239.842)]), 0.0


def mgf2(wl_um):
    return sellmeier(wl_um, [(0.48755108, 0.04338408),
                             (0.39875031, 0.09461442),
                             (2.3120353, 23.793604)]), 0.0


def ag(wl_um):
    # Drude: eps = eps_inf - wp^2 / (E^2 + i*gamma*E), E in eV
    e_ev = 1.23984193 / wl_um
    eps = 3.7 - 81.2 / (e_ev**2 + 1j * 0.05 * e_ev)
    n = cmath.sqrt(eps)
    if n.imag < 0:
        n = -n
    return n.real, n.imag


MATERIALS = {"SiO2": sio2, "TiO2": tio2, "Si3N4": si3n4, "MgF2": mgf2, "Ag": ag}

os.makedirs(OUT, exist_ok=True)
for name, fn in MATERIALS.items():
    rows = ["wavelength_nm,n,k"]
    for wl in WL_NM:
        n, k = fn(wl / 1000.0)
        rows.append(f"{wl},{n:.6f},{k:.6f}")
    path = os.path.join(OUT, f"{name}.csv")
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(rows) + "\n")
    print(f"wrote {path}")
