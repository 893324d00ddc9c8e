from fractions import Fraction

from higgsbal.core.balanced import iterate
from higgsbal.core.git import OneParamSubgroup, total_weight
from higgsbal.core.model import HiggsInstance, destabilizing_witness
from higgsbal.core.quantization import QuantParams, section_basis

# region Constants
K = 6
ELL = Fraction(1)
# endregion

# region Instances
# E = O + O with the constant field [[0, 2], [1, 0]] (m = 0): polystable.
polystable = HiggsInstance.build(0, [0, 0], [[0, 2], [1, 0]], label="polystable")
# E = O(1) + O(-1) with phi_12 = 1 (m = 2): O(1) is invariant and destabilizing.
unstable = HiggsInstance.build(2, [1, -1], [[0, [1]], [0, 0]], label="unstable")
# E = O(2) + O with zero field.
split = HiggsInstance.build(0, [2, 0], label="split")
# endregion

# region Case 1️⃣: Balancing iteration.
for instance in (polystable, unstable):
    basis = section_basis(instance.bundle, K)
    report = iterate(instance, K, QuantParams.for_basis(basis, ELL))
    print(
        f"{instance.label}: {report.verdict} after {report.steps} steps, "
        f"residual {report.final_residual:.2e}"
    )
    print(f"Witness: {destabilizing_witness(instance, K)}")
# endregion

# region Case 2️⃣: Hilbert-Mumford weight of the subsheaf O(2) at k = 3.
basis = section_basis(split.bundle, 3)
subgroup = OneParamSubgroup.from_subsheaf(basis, [0])
weight = total_weight(subgroup, split, 3, QuantParams.for_basis(basis, ELL), summands=[0])
print(f"Un-normalized weight: {weight.theta_sum}, mu2: {weight.mu2}")
print(f"Classification: {weight.classification}")
# endregion
