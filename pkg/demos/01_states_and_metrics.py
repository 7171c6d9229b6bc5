"""States and entanglement metrics.

Builds the hyperentangled source state, looks at its degrees of freedom one
at a time and evaluates tangle, linear entropy, fidelity and negativity.
"""
# %%
import numpy as np

from hyperent import SourceConfig, build_hyper_state, make_named_state, partial_trace
from hyperent.metrics import fidelity, linear_entropy, negativity, purity, report, tangle
from hyperent.source import catalog, maximally_entangled

# %% [markdown]
# The full state lives on 2x3x2 dimensions per photon (144 in total).
# %%
rho = build_hyper_state()
print("layout", rho.layout.dims, "dim", rho.dim, "purity", round(purity(rho), 12))

for name, (dim, desc) in catalog().items():
    print(f"  {name:14s} {dim:4d}  {desc}")

# %% [markdown]
# Tracing out everything except one degree of freedom leaves a pure Bell-like pair.
# %%
lay = rho.layout
for dof in ("poln", "spatial", "etime"):
    m = partial_trace(rho, [lay.index_of("A", dof), lay.index_of("B", dof)])
    print(f"{dof:8s} marginal dim {m.dim:2d} purity {purity(m):.6f} negativity {negativity(m):.6f}")

# %% [markdown]
# Two-qubit metrics on a Werner family p Phi+ + (1 - p) I/4.
# %%
phi = make_named_state("phi+_poln")
for p in (1.0, 0.8, 1 / 3, 0.0):
    w = p * phi.matrix + (1 - p) * np.eye(4) / 4
    print(f"p={p:.3f}  T={tangle(w):.4f}  S_L={linear_entropy(w):.4f}  F={fidelity(w, phi.matrix):.4f}")

# %% [markdown]
# Negativity runs from 0 for separable states to d - 1 for a maximally entangled d x d pair.
# %%
print("6x6 maximally entangled N =", round(negativity(maximally_entangled(6)), 9))
fit = make_named_state("fig2_fit")
print("fitted spatial-polarization state N =", round(negativity(fit), 4))
print(report(fit).to_dict())

# %% [markdown]
# Noise parameters act per degree of freedom.
# %%
noisy = build_hyper_state(SourceConfig(visibility_poln=0.95, dephase_poln_A=0.1, white_noise=0.02))
print("noisy state purity", round(purity(noisy), 4), "negativity", round(negativity(noisy), 4))
