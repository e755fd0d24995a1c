"""Finite-difference audit of the reverse-mode gradients.

Every building block is checked against central differences, then the whole
net-and-cost pipeline is checked end to end on a shrunken model.

Run: python3 demos/gradient_audit.py
"""
import saga.pipeline as pl

print("primitive checks (h = 1e-5, relative error):")
for name, err in pl.primitive_grad_checks(seed=0):
    print(f"  {name:28s} {err:.3e}")

err = pl.end_to_end_grad_check(tiny=True, seed=0)
print()
print(f"end-to-end (shrunken net, full cost pipeline): {err:.3e}")
print("pass threshold is 1e-4 everywhere")
