import numpy as np

from stereopaint import tensor as tn
from stereopaint.gradsuite import OP_COVERAGE, run_suite
from stereopaint.tensor import DIFFERENTIABLE_OPS, Tensor, grad_check


def test_every_registered_op_is_covered():
    missing = set(DIFFERENTIABLE_OPS) - set(OP_COVERAGE)
    assert not missing, f"ops without a finite-difference check: {sorted(missing)}"


def test_suite_names_match_coverage_map():
    results = {r.name for r in run_suite(seeds=(0,), heavy_seeds=0)}
    wanted = {OP_COVERAGE[op] for op in DIFFERENTIABLE_OPS}
    # the light run skips the composite checks but must reach every op check
    assert wanted <= results | {"conv2d_s1"}


def test_corrupted_backward_is_detected(rng):
    # negative control: an op with a deliberately wrong gradient must fail
    def bad_double(t):
        out = Tensor(t.data * 2.0, requires_grad=True, op="bad_double")
        out._parents = (t,)

        def backward(g):
            from stereopaint.tensor import _accum

            _accum(t, g * np.float32(3.0))  # wrong: claims d(2x)/dx = 3

        out._backward = backward
        return out

    x = Tensor(rng.normal(size=(4,)).astype(np.float32), requires_grad=True)
    err = grad_check(lambda t: tn.sum_all(bad_double(t)), x)
    assert err > 1e-3


def test_light_suite_passes():
    results = run_suite(seeds=(0,), heavy_seeds=0)
    failing = [r for r in results if not r.passed]
    assert not failing, [(r.name, r.max_error) for r in failing]
