"""Smoke test for the layerflow_py extension module."""

import math

import layerflow_py as lf


def check_field_operations():
    u = lf.SpectralField.taylor_green(amplitude=1.0, kappa=1, period=1.0, cutoff=2)
    assert u.support() == [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    assert abs(u.parseval_norm() - math.sqrt(0.5)) < 1e-14
    solenoidal, gradient = u.leray_project()
    assert gradient.parseval_norm() == 0.0
    assert (solenoidal - u).parseval_norm() < 1e-15
    assert u.divergence().parseval_norm() < 1e-15
    x = (0.125, 0.3)
    value = u.evaluate([x])[0]
    k = 2 * math.pi
    assert abs(value[0] - math.sin(k * x[0]) * math.cos(k * x[1])) < 1e-12
    assert abs(value[1] + math.cos(k * x[0]) * math.sin(k * x[1])) < 1e-12
    g = 8
    back = lf.SpectralField.from_grid(u.to_grid(g), g, cutoff=2)
    assert (back - u).parseval_norm() < 1e-14
    assert abs(u.coeff(1, 1, 0) - complex(0.0, -0.25)) < 1e-15


def check_paths():
    path = lf.WienerPath.generate(1, 1.0, 100, seed=7, run_index=3, with_integral=True)
    coarse = path.coarsen(10)
    assert coarse.steps == 10
    assert coarse.value(10) == path.value(100)
    assert coarse.integral(10) == path.integral(100)
    again = lf.WienerPath.from_csv(path.to_csv())
    assert again.value(57) == path.value(57)


def check_solver():
    problem = lf.Problem.model1()
    path = lf.WienerPath.generate(1, 3.0, 30, seed=1, with_integral=False)
    layers = lf.run_solver(problem, path, method="B", cutoff=2)
    assert len(layers) == 31
    assert all(layer.divergence_residual() <= 1e-11 for layer in layers)
    assert set(layers[-1].velocity.support(1e-14)) <= {(-1, -1), (-1, 1), (1, -1), (1, 1)}
    report = lf.trajectory_error(problem, path, method="B", cutoff=2)
    assert 0.0 < report.err_v < 0.2


def check_sweeps():
    config = """
[model]
kind = "model1"
[method]
scheme = "B"
[sweep]
h = [0.2, 0.1, 0.05, 0.02, 0.01]
runs = 16
seed = 1
"""
    csv, reports = lf.converge(config)
    assert csv.splitlines()[0].startswith("model,method,h,N")
    slope, _, r2 = lf.fit_order([(r.h, r.err_v) for r in reports])
    assert 0.85 <= slope <= 1.15 and r2 > 0.99
    _, mc_reports = lf.mc(config.replace("[0.2, 0.1, 0.05, 0.02, 0.01]", "[0.2, 0.1]"))
    assert [r.runs for r in mc_reports] == [16, 16]
    try:
        lf.converge(config.replace("scheme", "schema"))
    except lf.LayerflowError:
        pass
    else:
        raise AssertionError("bad configuration accepted")


if __name__ == "__main__":
    check_field_operations()
    check_paths()
    check_solver()
    check_sweeps()
    print("layerflow_py smoke test passed")
